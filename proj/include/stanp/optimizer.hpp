#pragma once

#include <cstddef>
#include <vector>

#include "stanp/model.hpp"
#include "stanp/tensor.hpp"

namespace stanp {

// Adaptive moment estimation with bias correction. Moment slots are laid out
// in the parameter registry order and sized lazily on the first step.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                           double epsilon = 1e-8);

    // grads is parallel to the registry of params; shapes must match.
    void step(model::ModelParams& params, const std::vector<Tensor>& grads);

    std::size_t steps_taken() const { return t_; }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace stanp
