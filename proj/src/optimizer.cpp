#include "stanp/optimizer.hpp"

#include <cmath>
#include <string>

#include "stanp/errors.hpp"

namespace stanp {

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    if (!(lr_ > 0.0)) throw ContractViolation("learning rate must be positive");
    if (!(beta1_ >= 0.0 && beta1_ < 1.0) || !(beta2_ >= 0.0 && beta2_ < 1.0)) {
        throw ContractViolation("moment decays must lie in [0,1)");
    }
    if (!(eps_ > 0.0)) throw ContractViolation("epsilon must be positive");
}

void AdamOptimizer::step(model::ModelParams& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.count()) {
        throw ContractViolation("gradient count " + std::to_string(grads.size()) + " != parameter count " +
                                std::to_string(params.count()));
    }
    if (m_.empty()) {
        m_.reserve(params.count());
        v_.reserve(params.count());
        for (std::size_t i = 0; i < params.count(); ++i) {
            m_.push_back(Tensor::zeros_like(params.tensor(i)));
            v_.push_back(Tensor::zeros_like(params.tensor(i)));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor& p = params.tensor(i);
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) {
            throw ContractViolation("gradient shape mismatch for " + params.name(i));
        }
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

}  // namespace stanp
