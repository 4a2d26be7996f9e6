#pragma once

#include <string>
#include <vector>

#include "ldmr/image.hpp"

namespace ldmr {

enum class DenoiserKind { patch_dct, gaussian_blur, external };

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::patch_dct;
  double strength = 1.0;  // noise sigma assumed by the denoiser (GAT domain)
  int window = 8;         // DCT block size / blur support
  std::string path;       // external: denoised stabilized array (f32 container)
};

struct MbConfig {
  NoiseParams params;
  double gamma = 0.5;      // dose fraction of the input
  DenoiserSpec denoiser;
  double blend_weight = -1.0;  // [0,1]; negative = auto (1 - sqrt(gamma))

  double effective_blend() const;
};

// Gaussian-domain denoiser behind the restoration pipeline.
//   patch_dct:     sliding window DCT-II, hard threshold at 2.7 * strength,
//                  DC preserved, uniform overlap-add.
//   gaussian_blur: separable Gaussian, sigma = window / 6.
//   external:      reads the denoised array from spec.path.
std::vector<float> denoise_stabilized(const std::vector<float>& d, int width,
                                      int height, const DenoiserSpec& spec);

// Full model-based restoration of a low-dose frame to the full-dose signal
// scale: dose rescale, GAT with the rescaled image's effective parameters,
// denoise, exact unbiased inverse, then blend with the rescaled input.
ImageF mb_restore(const RawImage& ld, const MbConfig& cfg);

}  // namespace ldmr
