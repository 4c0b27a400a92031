#include "stanp/losses.hpp"

#include "stanp/errors.hpp"

namespace stanp::ad {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5·ln(2π)

void require_positive(const Tensor& sigma, const char* what) {
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw ContractViolation(std::string(what) + " must be strictly positive");
    }
}

}  // namespace

Value gaussian_nll(Value y, Value mu, Value sigma) {
    require_positive(sigma.tape->value(sigma), "gaussian_nll sigma");
    Value d = sub(y, mu);
    Value quad = divide(mul(d, d), scale(mul(sigma, sigma), 2.0));
    return add(add_const(log(sigma), kHalfLog2Pi), quad);
}

Value kl_diag_gaussian(Value mu_q, Value sigma_q, Value mu_p, Value sigma_p) {
    const Tensor& tmq = mu_q.tape->value(mu_q);
    const Tensor& tsq = sigma_q.tape->value(sigma_q);
    const Tensor& tmp = mu_p.tape->value(mu_p);
    const Tensor& tsp = sigma_p.tape->value(sigma_p);
    if (!tmq.same_shape(tmp) || !tsq.same_shape(tsp) || !tmq.same_shape(tsq)) {
        throw ContractViolation("kl_diag_gaussian operand shapes differ: q " + tmq.shape_str() + "/" +
                                tsq.shape_str() + " vs p " + tmp.shape_str() + "/" + tsp.shape_str());
    }
    require_positive(tsq, "kl_diag_gaussian sigma_q");
    require_positive(tsp, "kl_diag_gaussian sigma_p");
    Value log_ratio = sub(log(sigma_p), log(sigma_q));
    Value d = sub(mu_q, mu_p);
    Value num = add(mul(sigma_q, sigma_q), mul(d, d));
    Value frac = divide(num, scale(mul(sigma_p, sigma_p), 2.0));
    Value per_dim = add_const(add(log_ratio, frac), -0.5);
    return clamp_nonneg_eps(sum_all(per_dim));
}

}  // namespace stanp::ad
