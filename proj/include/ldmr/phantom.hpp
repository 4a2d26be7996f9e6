#pragma once

#include <cstdint>
#include <vector>

#include "ldmr/image.hpp"

namespace ldmr {

struct McCluster {
  double center_row = 0;
  double center_col = 0;
  int speck_count = 12;
  double speck_radius = 2.0;     // pixels
  double speck_amplitude = 140;  // DN added on top of the local background
  double scatter_sigma = 9.0;    // spread of speck positions around the center
};

struct LumpyBackground {
  int blob_count = 90;
  double sigma_min = 6.0;   // pixels
  double sigma_max = 28.0;
  double amp_min = 20.0;    // DN, peak height
  double amp_max = 45.0;
};

struct PhantomSpec {
  int width = 512;
  int height = 512;
  uint64_t seed = 1;
  LumpyBackground background;
  std::vector<McCluster> mc_clusters;
  double semi_axis_col = 0;  // half-ellipse extent from the chest wall; 0 = default
  double semi_axis_row = 0;
  double base_level = 520;   // DN inside the breast
  double air_level = 2200;   // DN outside
  double edge_rise = 0;      // DN added as a quadratic ramp toward the skin
                             // line (thinner tissue attenuates less)

  static PhantomSpec defaults(int width = 512, int height = 512,
                              uint64_t seed = 1);
  void validate(const NoiseParams& params, double saturation) const;
};

// Noise-free scene Y: constant air outside the half-ellipse support, lumpy
// texture plus microcalcification specks inside.
struct NoiseFreeImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // DN
  BreastMask support;

  float at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
};

struct GeneratedPhantom {
  NoiseFreeImage image;
  BreastMask specks;  // generator ground truth for the MC discs
};

GeneratedPhantom generate_phantom(const PhantomSpec& spec,
                                  const NoiseParams& params = NoiseParams{},
                                  double saturation = 16383);

// One acquisition of Y at dose fraction gamma: per pixel
//   x = gamma*(Y - tau) + tau + eta,  eta ~ N(0, gamma*lambda*(Y-tau) + sigma_e2)
// clamped to [0, saturation] and quantized half-up. Pixel draws come from a
// counter-based stream keyed on (seed, pixel index).
RawImage acquire(const NoiseFreeImage& y, const NoiseParams& params,
                 double gamma, uint64_t seed, double saturation = 16383);

}  // namespace ldmr
