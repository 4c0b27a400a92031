#pragma once

#include "stanp/tape.hpp"

namespace stanp::ad {

// Elementwise negative log-likelihood of y under N(mu, sigma^2):
// 0.5·ln(2π σ²) + (y−μ)²/(2σ²). Output has the operands' shape.
Value gaussian_nll(Value y, Value mu, Value sigma);

// KL(N(mu_q, diag σq²) ‖ N(mu_p, diag σp²)) summed over dimensions. Never
// negative; roundoff below 1e-12 in magnitude is snapped to zero.
Value kl_diag_gaussian(Value mu_q, Value sigma_q, Value mu_p, Value sigma_p);

}  // namespace stanp::ad
