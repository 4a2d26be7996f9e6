#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldmr/common.hpp"

namespace ldmr {

// Noise model: variance = lambda * (Y - tau) + sigma_e2; tau is the constant
// detector dark level.
struct NoiseParams {
  double lambda = 0.1;    // quantum noise gain [DN per photon-equivalent]
  double sigma_e2 = 3.0;  // electronic noise variance [DN^2]
  double tau = 50.0;      // detector offset [DN]

  void validate() const;
};

struct AcqMeta {
  NoiseParams noise;
  double gamma = 1.0;            // dose fraction, (0,1]
  double saturation_dn = 16383;  // 14-bit detector by default
  uint64_t seed = 0;
  std::string tag;

  void validate() const;
};

struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> pixels;  // row-major
  AcqMeta meta;

  std::size_t size() const { return pixels.size(); }
  uint16_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  void validate() const;
};

// Float image in detector units; restored outputs and intermediates.
// Double storage: the metrics' decomposition identity and the calibration
// idempotence are specified at 1e-12.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  AcqMeta meta;

  std::size_t size() const { return values.size(); }
  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * width + col];
  }
  double& at(int row, int col) {
    return values[static_cast<std::size_t>(row) * width + col];
  }
};

ImageF to_float(const RawImage& img);
RawImage to_raw(const ImageF& img);  // clamp + half-up quantize

struct BreastMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // 1 = inside breast tissue

  bool at(int row, int col) const {
    return bits[static_cast<std::size_t>(row) * width + col] != 0;
  }
  void set(int row, int col, bool v) {
    bits[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0;
  }
  std::size_t count() const;
};

// ---------------------------------------------------------------------------
// File container: <path> holds the little-endian payload (row-major), and
// <path>.json is the sidecar header with dimensions, dtype and acquisition
// metadata. u16 payloads round-trip RawImage bit-exactly.

void save_raw(const RawImage& image, const std::string& path);
RawImage load_raw(const std::string& path);

void save_float(const ImageF& image, const std::string& path);
ImageF load_float(const std::string& path);

void save_mask(const BreastMask& mask, const std::string& path);
BreastMask load_mask(const std::string& path);

// 8-bit grayscale PNG with a [lo,hi] display window.
void export_png(const ImageF& image, const std::string& path, double lo,
                double hi);
void export_png(const RawImage& image, const std::string& path, double lo,
                double hi);

// ---------------------------------------------------------------------------
// Segmentation. The air background level is estimated from the image border;
// breast pixels are the ones darker than (air - threshold) when air is the
// bright side (raw attenuation encoding), or brighter than (air + threshold)
// with air_bright=false. Keeps the largest 4-connected component.
BreastMask segment_breast(const RawImage& image, double threshold_dn,
                          bool air_bright = true);

// ---------------------------------------------------------------------------
// Network-facing normalization: low-dose frames are first rescaled to the
// full-dose signal level, (x - tau)/gamma + tau, then divided by the
// saturation level and clamped to [0,1].
std::vector<float> normalize_for_net(const RawImage& image);

struct PatchPair {
  std::vector<float> ld;  // k*k, normalized
  std::vector<float> fd;  // k*k, normalized
  int row = 0;            // origin (top-left)
  int col = 0;
};

// `count` pairs with patch centers inside the mask and patches fully inside
// the frame; sampling order is fixed by the seed.
std::vector<PatchPair> extract_patches(const RawImage& ld, const RawImage& fd,
                                       const BreastMask& mask, int count,
                                       int size, uint64_t seed);

}  // namespace ldmr
