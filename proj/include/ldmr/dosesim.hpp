#pragma once

#include <cstdint>
#include <vector>

#include "ldmr/image.hpp"

namespace ldmr {

enum class DoseSimDomain { direct, vst };

struct DoseSimConfig {
  double gamma = 0.5;  // target dose fraction, (0,1)
  NoiseParams params;
  DoseSimDomain domain = DoseSimDomain::direct;
  uint64_t seed = 0;
};

// Simulates a reduced-dose acquisition from an observed full-dose image by
// injecting exactly the extra noise required for the output to follow the
// gamma-scaled noise model.
//
// direct: works in detector units with the observed signal as the proxy for
//   the noise-free one; injected variance gamma*(1-gamma)*lambda*s +
//   (1-gamma^2)*sigma_e2, floored at zero.
// vst:    stabilizes with the GAT, injects N(0, 1/gamma - 1) where the noise
//   is unit-variance and signal-independent, rescales the stabilized mean by
//   the sqrt(gamma) dose law and maps back through the exact unbiased
//   inverse.
RawImage simulate_low_dose(const RawImage& fd, const DoseSimConfig& cfg);

struct FlatGroup {
  double exposure = 0;  // 0 marks dark frames
  std::vector<RawImage> images;
};

// Weighted least-squares fit of the mean/variance line over flat-field
// acquisitions; tau comes from the dark frames when present.
NoiseParams estimate_noise_params(const std::vector<FlatGroup>& flats);

}  // namespace ldmr
