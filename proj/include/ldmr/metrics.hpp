#pragma once

#include <cstdint>
#include <vector>

#include "ldmr/image.hpp"

namespace ldmr {

struct GroundTruth {
  int width = 0;
  int height = 0;
  std::vector<double> mean;      // X_GT, pixelwise expectation estimate
  std::vector<double> pointvar;  // unbiased variance across the N realizations
  int n = 0;
};

struct Interval {
  double lo = 0;
  double hi = 0;
};

struct MnseReport {
  double total = 0;  // fractions of the GT level
  double rn = 0;     // residual noise
  double b2 = 0;     // bias squared
  double phi1 = 0;   // finite-GT correction
  int p = 0;
  Interval ci_total, ci_rn, ci_b2;  // 95% pixel-bootstrap intervals
  std::size_t excluded_pixels = 0;  // GT <= 1 DN, dropped from the index set
};

struct SnrResult {
  int width = 0;
  int height = 0;
  std::vector<float> map;  // +inf where the smoothed deviation vanished
  double mean_snr = 0;
  Interval ci;
};

GroundTruth estimate_gt(const std::vector<ImageF>& gt_pool,
                        const BreastMask& mask);

// Least-squares first-order polynomial a*x+b matching the image mean to the
// ground truth over the mask. A constant input degenerates to a=0, b=mean(GT).
struct MeanCorrection {
  double a = 1;
  double b = 0;
  bool degenerate = false;
};
ImageF mean_correct(const ImageF& image, const GroundTruth& gt,
                    const BreastMask& mask, MeanCorrection* coeffs = nullptr);

// Calibration order: GT from the pool, pool images corrected to it, GT
// re-estimated, then every evaluation / low-dose / restored image corrected
// to the final GT.
struct GtProtocolResult {
  GroundTruth gt;
  std::vector<ImageF> fd_eval;
  std::vector<std::vector<ImageF>> ld_sets;
  std::vector<std::vector<ImageF>> restored_sets;
};
GtProtocolResult gt_protocol(
    const std::vector<ImageF>& fd_pool, int n_gt,
    const std::vector<std::vector<ImageF>>& ld_sets,
    const std::vector<std::vector<ImageF>>& restored_sets,
    const BreastMask& mask);

struct BootstrapConfig {
  int resamples = 1000;
  uint64_t seed = 17;
};

MnseReport evaluate_mnse(const std::vector<ImageF>& eval_set,
                         const GroundTruth& gt, const BreastMask& mask,
                         const BootstrapConfig& bs = {});

// Pixelwise mean over the realizations divided by the (debiased) standard
// deviation, both box-smoothed 15x15 inside the mask before the ratio.
SnrResult snr_map(const std::vector<ImageF>& realizations,
                  const BreastMask& mask, int box = 15,
                  const BootstrapConfig& bs = {});

// Display clip range used when exporting SNR maps.
inline constexpr double kSnrClipLo = 47.0;
inline constexpr double kSnrClipHi = 120.0;

}  // namespace ldmr
