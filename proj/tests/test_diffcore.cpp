#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "stanp/errors.hpp"
#include "stanp/losses.hpp"
#include "stanp/rng.hpp"
#include "stanp/tape.hpp"

using namespace stanp;
using namespace stanp::ad;
using testutil::GraphBuilder;
using testutil::grad_max_rel_err;
using testutil::random_kink_free_tensor;
using testutil::random_positive_tensor;
using testutil::random_tensor;

namespace {

constexpr double kOpTol = 1e-4;

Value weighted_sum(Tape& tape, Value v, const Tensor& w) { return sum_all(mul(v, tape.leaf(w))); }

bool message_contains(const std::exception& e, const char* needle) {
    return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("scalar chain rules match closed forms") {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(3.0), true);
    Value y = mul(x, x);
    tape.backward(y);
    CHECK(first(y) == doctest::Approx(9.0));
    CHECK(tape.grad(x)[0] == doctest::Approx(6.0));

    Tape tape2;
    Value z = tape2.leaf(Tensor::scalar(0.0), true);
    Value s = softplus(z);
    tape2.backward(s);
    CHECK(first(s) == doctest::Approx(std::log(2.0)));
    CHECK(tape2.grad(z)[0] == doctest::Approx(0.5));
}

TEST_CASE("gaussian_nll closed-form values") {
    Tape tape;
    auto nll = [&](double y, double mu, double sigma) {
        return first(gaussian_nll(tape.leaf(Tensor::scalar(y)), tape.leaf(Tensor::scalar(mu)),
                                  tape.leaf(Tensor::scalar(sigma))));
    };
    CHECK(nll(0.0, 0.0, 1.0) == doctest::Approx(0.918939).epsilon(1e-6));
    CHECK(nll(1.0, 0.0, 1.0) == doctest::Approx(1.418939).epsilon(1e-6));

    Value mu = tape.leaf(Tensor::scalar(0.0), true);
    Value loss = gaussian_nll(tape.leaf(Tensor::scalar(1.0)), mu, tape.leaf(Tensor::scalar(1.0)));
    tape.backward(loss);
    CHECK(tape.grad(mu)[0] == doctest::Approx(-1.0));

    CHECK_THROWS_AS(gaussian_nll(tape.leaf(Tensor::scalar(0.0)), tape.leaf(Tensor::scalar(0.0)),
                                 tape.leaf(Tensor::scalar(0.0))),
                    ContractViolation);
    CHECK_THROWS_AS(gaussian_nll(tape.leaf(Tensor::scalar(0.0)), tape.leaf(Tensor::scalar(0.0)),
                                 tape.leaf(Tensor::scalar(-1.0))),
                    ContractViolation);
}

TEST_CASE("gaussian_nll gradients match finite differences") {
    Rng rng(11);
    GraphBuilder build = [](Tape&, const std::vector<Value>& in) {
        return sum_all(gaussian_nll(in[0], in[1], in[2]));
    };
    for (int seed = 0; seed < 5; ++seed) {
        std::vector<Tensor> inputs{random_tensor(rng, {4}), random_tensor(rng, {4}),
                                   random_positive_tensor(rng, {4})};
        CHECK(grad_max_rel_err(build, inputs) <= kOpTol);
    }
}

TEST_CASE("kl_diag_gaussian closed-form values") {
    Tape tape;
    auto kl = [&](std::vector<double> mq, std::vector<double> sq, std::vector<double> mp, std::vector<double> sp) {
        const std::size_t n = mq.size();
        return first(kl_diag_gaussian(tape.leaf(Tensor({n}, std::move(mq))), tape.leaf(Tensor({n}, std::move(sq))),
                                      tape.leaf(Tensor({n}, std::move(mp))), tape.leaf(Tensor({n}, std::move(sp)))));
    };
    CHECK(kl({0.7, -0.2}, {1.3, 0.4}, {0.7, -0.2}, {1.3, 0.4}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl({1.0}, {1.0}, {0.0}, {1.0}) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(kl({0.0}, {2.0}, {0.0}, {1.0}) == doctest::Approx(0.806853).epsilon(1e-6));

    CHECK_THROWS_AS(kl_diag_gaussian(tape.leaf(Tensor({2})), tape.leaf(Tensor({2}, {1.0, 1.0})),
                                     tape.leaf(Tensor({3})), tape.leaf(Tensor({3}, {1.0, 1.0, 1.0}))),
                    ContractViolation);
    CHECK_THROWS_AS(kl_diag_gaussian(tape.leaf(Tensor({1})), tape.leaf(Tensor({1}, {0.0})),
                                     tape.leaf(Tensor({1})), tape.leaf(Tensor({1}, {1.0}))),
                    ContractViolation);
}

TEST_CASE("kl_diag_gaussian is never negative") {
    Rng rng(23);
    for (int i = 0; i < 300; ++i) {
        Tape tape;
        const std::size_t n = 1 + rng.uniform_index(6);
        // near-identical pairs stress the roundoff path where KL ~ 0
        Tensor mu_q = random_tensor(rng, {n});
        Tensor sigma_q = random_positive_tensor(rng, {n});
        Tensor mu_p = mu_q;
        Tensor sigma_p = sigma_q;
        if (i % 2 == 0) {
            for (std::size_t j = 0; j < n; ++j) {
                mu_p[j] += rng.uniform(-1.0, 1.0);
                sigma_p[j] = rng.uniform(0.3, 2.5);
            }
        }
        const double kl = first(kl_diag_gaussian(tape.leaf(mu_q), tape.leaf(sigma_q), tape.leaf(mu_p),
                                                 tape.leaf(sigma_p)));
        CHECK(kl >= 0.0);
    }
}

TEST_CASE("kl_diag_gaussian gradients match finite differences") {
    Rng rng(31);
    GraphBuilder build = [](Tape&, const std::vector<Value>& in) {
        return kl_diag_gaussian(in[0], in[1], in[2], in[3]);
    };
    for (int seed = 0; seed < 5; ++seed) {
        std::vector<Tensor> inputs{random_tensor(rng, {5}), random_positive_tensor(rng, {5}),
                                   random_tensor(rng, {5}), random_positive_tensor(rng, {5})};
        CHECK(grad_max_rel_err(build, inputs) <= kOpTol);
    }
}

TEST_CASE("every op matches finite differences on randomized inputs") {
    struct OpCase {
        const char* name;
        GraphBuilder build;
        std::function<std::vector<Tensor>(Rng&)> make_inputs;
    };

    Rng weight_rng(7);
    const Tensor w23 = random_tensor(weight_rng, {2, 3});
    const Tensor w34 = random_tensor(weight_rng, {3, 4});
    const Tensor w24 = random_tensor(weight_rng, {2, 4});
    const Tensor w25 = random_tensor(weight_rng, {2, 5});
    const Tensor w14 = random_tensor(weight_rng, {1, 4});
    const Tensor w293 = random_tensor(weight_rng, {2, 9, 3});
    const Tensor w294 = random_tensor(weight_rng, {2, 9, 4});
    const Tensor w29 = random_tensor(weight_rng, {2, 9});

    const std::vector<OpCase> cases = {
        {"add",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, add(in[0], in[1]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; }},
        {"add_row",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, add_row(in[0], in[1]), w34); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 4}), random_tensor(r, {1, 4})}; }},
        {"sub",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, sub(in[0], in[1]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; }},
        {"mul",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, mul(in[0], in[1]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 3})}; }},
        {"mul_row",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, mul_row(in[0], in[1]), w34); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 4}), random_tensor(r, {1, 4})}; }},
        {"div",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, divide(in[0], in[1]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_positive_tensor(r, {2, 3})}; }},
        {"scale",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, scale(in[0], -1.7), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"add_const",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, add_const(in[0], 0.9), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"matmul",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, matmul(in[0], in[1]), w24); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {3, 4})}; }},
        {"matmul_nt",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, matmul_nt(in[0], in[1]), w24); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {4, 3})}; }},
        {"conv3x3",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, conv3x3(in[0], in[1]), w294); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 9, 3}), random_tensor(r, {4, 3, 9})}; }},
        {"relu",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, relu(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_kink_free_tensor(r, {2, 3})}; }},
        {"softplus",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, softplus(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"exp",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, exp(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"log",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, log(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_positive_tensor(r, {2, 3})}; }},
        {"gelu",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, gelu(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"softmax_rows",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, softmax_rows(in[0]), w24); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 4})}; }},
        {"layer_norm_rows",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, layer_norm_rows(in[0]), w25); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 5})}; }},
        {"mean_rows",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, mean_rows(in[0]), w14); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {3, 4})}; }},
        {"mean_cells",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, mean_cells(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 9, 3})}; }},
        {"sum_all",
         [](Tape&, const std::vector<Value>& in) { return sum_all(in[0]); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"mean_all",
         [](Tape&, const std::vector<Value>& in) { return mean_all(in[0]); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 3})}; }},
        {"concat_last",
         [&](Tape& t, const std::vector<Value>& in) {
             return weighted_sum(t, concat_last({in[0], in[1], in[2]}), w29);
         },
         [](Rng& r) {
             return std::vector<Tensor>{random_tensor(r, {2, 3}), random_tensor(r, {2, 2}),
                                        random_tensor(r, {2, 4})};
         }},
        {"slice_last",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, slice_last(in[0], 2, 3), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {2, 6})}; }},
        {"broadcast_row",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, broadcast_row(in[0], 3), w34); },
         [](Rng& r) { return std::vector<Tensor>{random_tensor(r, {1, 4})}; }},
        {"clamp_nonneg_eps",
         [&](Tape& t, const std::vector<Value>& in) { return weighted_sum(t, clamp_nonneg_eps(in[0]), w23); },
         [](Rng& r) { return std::vector<Tensor>{random_kink_free_tensor(r, {2, 3})}; }},
    };

    Rng rng(101);
    for (const auto& c : cases) {
        for (int rep = 0; rep < 3; ++rep) {
            const auto inputs = c.make_inputs(rng);
            const double err = grad_max_rel_err(c.build, inputs);
            INFO(c.name << " rep " << rep);
            CHECK(err <= kOpTol);
        }
    }
}

TEST_CASE("three-layer perceptron gradients match finite differences") {
    GraphBuilder build = [](Tape& t, const std::vector<Value>& in) {
        Value h1 = gelu(add_row(matmul(in[0], in[1]), in[2]));
        Value h2 = softplus(add_row(matmul(h1, in[3]), in[4]));
        Value out = layer_norm_rows(add_row(matmul(h2, in[5]), in[6]));
        Value p = softmax_rows(out);
        Tensor w({2, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.2 * static_cast<double>(i + 1);
        return sum_all(mul(p, t.leaf(w)));
    };
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(1000 + seed);
        std::vector<Tensor> inputs{
            random_tensor(rng, {2, 5}), random_tensor(rng, {5, 8}), random_tensor(rng, {1, 8}),
            random_tensor(rng, {8, 6}), random_tensor(rng, {1, 6}), random_tensor(rng, {6, 3}),
            random_tensor(rng, {1, 3}),
        };
        const double err = grad_max_rel_err(build, inputs);
        INFO("seed " << seed);
        CHECK(err <= kOpTol);
    }
}

TEST_CASE("softmax rows are a strictly positive distribution") {
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        Tape tape;
        Tensor x = random_tensor(rng, {4, 7}, -30.0, 30.0);
        const Tensor& y = tape.value(softmax_rows(tape.leaf(x)));
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                CHECK(y.at(r, c) > 0.0);
                sum += y.at(r, c);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer normalization standardizes each row") {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
        Tape tape;
        Tensor x = random_tensor(rng, {3, 16}, -5.0, 5.0);
        const Tensor& y = tape.value(layer_norm_rows(tape.leaf(x)));
        for (std::size_t r = 0; r < 3; ++r) {
            double mean = 0.0;
            for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
            mean /= 16.0;
            double var = 0.0;
            for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
            var /= 16.0;
            CHECK(std::abs(mean) <= 1e-10);
            CHECK(std::abs(var - 1.0) <= 1e-8);
        }
    }
}

TEST_CASE("shared subexpressions accumulate gradients") {
    Rng rng(9);
    Tensor xv = random_tensor(rng, {3});

    Tape shared;
    Value x = shared.leaf(xv, true);
    Value sq = mul(x, x);
    Value root = sum_all(add(sq, sq));
    shared.backward(root);

    // oracle: the same function with the subexpression recorded twice
    Tape dup;
    Value xd = dup.leaf(xv, true);
    Value root2 = sum_all(add(mul(xd, xd), mul(xd, xd)));
    dup.backward(root2);

    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(shared.grad(x)[i] == doctest::Approx(dup.grad(xd)[i]).epsilon(1e-14));
        CHECK(shared.grad(x)[i] == doctest::Approx(4.0 * xv[i]).epsilon(1e-12));
    }

    // a leaf feeding two different ops accumulates both paths
    Tape two_paths;
    Value z = two_paths.leaf(Tensor::scalar(0.8), true);
    two_paths.backward(add(exp(z), mul(z, z)));
    CHECK(two_paths.grad(z)[0] == doctest::Approx(std::exp(0.8) + 1.6).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar root") {
    Tape tape;
    Value x = tape.leaf(Tensor({2, 3}), true);
    Value y = relu(x);
    CHECK_THROWS_AS(tape.backward(y), ContractViolation);
}

TEST_CASE("non-finite forward values raise a numeric error with the op id") {
    Tape tape;
    Value x = tape.leaf(Tensor({2}, {-1.0, 2.0}), true);
    bool threw = false;
    try {
        ad::log(x);
    } catch (const NumericError& e) {
        threw = true;
        CHECK(e.op_id() == 1);
        CHECK(message_contains(e, "log"));
    }
    CHECK(threw);

    Tape tape2;
    Value a = tape2.leaf(Tensor::scalar(1.0));
    Value b = tape2.leaf(Tensor::scalar(0.0));
    CHECK_THROWS_AS(divide(a, b), NumericError);

    // checking disabled: the op records instead of throwing
    Tape lax(false);
    Value xl = lax.leaf(Tensor({2}, {-1.0, 2.0}));
    CHECK_NOTHROW(ad::log(xl));
}

TEST_CASE("shape contracts are enforced") {
    Tape tape;
    Value a = tape.leaf(Tensor({2, 3}));
    Value b = tape.leaf(Tensor({3, 2}));
    CHECK_THROWS_AS(add(a, b), ContractViolation);
    CHECK_THROWS_AS(mul(a, b), ContractViolation);
    CHECK_THROWS_AS(matmul(a, tape.leaf(Tensor({2, 4}))), ContractViolation);
    CHECK_THROWS_AS(conv3x3(tape.leaf(Tensor({2, 8, 3})), tape.leaf(Tensor({4, 3, 9}))), ContractViolation);
    CHECK_THROWS_AS(slice_last(a, 2, 5), ContractViolation);
    CHECK_THROWS_AS(concat_last({a, b}), ContractViolation);
}
