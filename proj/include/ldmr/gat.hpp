#pragma once

#include <vector>

#include "ldmr/image.hpp"

namespace ldmr {

// Generalized Anscombe transformation for variance = lambda*(x-tau)+sigma_e2:
//   t = (x - tau)/lambda,  d = 2*sqrt(max(0, t + 3/8 + sigma_e2/lambda^2)).
// Output is approximately unit-variance for data following the noise model.
double gat_forward(double x, const NoiseParams& params);
std::vector<float> gat_forward(const std::vector<float>& x,
                               const NoiseParams& params);

// Closed-form asymptotic unbiased inverse. Applied to a denoised stabilized
// value d it recovers the detector-unit signal with vanishing bias; below the
// series' validity range it falls back to the algebraic inverse clamped at
// tau.
double gat_exact_unbiased_inverse(double d, const NoiseParams& params);
std::vector<float> gat_exact_unbiased_inverse(const std::vector<float>& d,
                                              const NoiseParams& params);

// Algebraic inverse of gat_forward (biased for noisy data); used by the
// fallback branch and by the dose simulator's stabilized-domain rescaling.
double gat_algebraic_inverse(double d, const NoiseParams& params);

}  // namespace ldmr
