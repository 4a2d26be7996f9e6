#include "ldmr/gat.hpp"

#include <cmath>

namespace ldmr {

namespace {
inline double gat_c(const NoiseParams& p) {
  return 0.375 + p.sigma_e2 / (p.lambda * p.lambda);
}
}  // namespace

double gat_forward(double x, const NoiseParams& params) {
  double t = (x - params.tau) / params.lambda;
  double u = t + gat_c(params);
  return u > 0.0 ? 2.0 * std::sqrt(u) : 0.0;
}

std::vector<float> gat_forward(const std::vector<float>& x,
                               const NoiseParams& params) {
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<float>(gat_forward(x[i], params));
  return out;
}

double gat_algebraic_inverse(double d, const NoiseParams& params) {
  double t = 0.25 * d * d - gat_c(params);
  if (t < 0.0) t = 0.0;
  return params.lambda * t + params.tau;
}

double gat_exact_unbiased_inverse(double d, const NoiseParams& params) {
  // The series diverges near zero; below the threshold the algebraic inverse
  // clamped at tau takes over.
  const double dmin = 2.0 * std::sqrt(gat_c(params)) + 0.5;
  if (d < dmin) return gat_algebraic_inverse(d, params);
  static const double sqrt32 = std::sqrt(1.5);
  double inv = 1.0 / d;
  double t = 0.25 * d * d + 0.25 * sqrt32 * inv - 1.375 * inv * inv +
             0.625 * sqrt32 * inv * inv * inv - 0.125 -
             params.sigma_e2 / (params.lambda * params.lambda);
  if (t < 0.0) t = 0.0;
  return params.lambda * t + params.tau;
}

std::vector<float> gat_exact_unbiased_inverse(const std::vector<float>& d,
                                              const NoiseParams& params) {
  std::vector<float> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    out[i] = static_cast<float>(gat_exact_unbiased_inverse(d[i], params));
  return out;
}

}  // namespace ldmr
