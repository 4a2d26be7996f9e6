#include "ldmr/mbrestore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ldmr/gat.hpp"
#include "ldmr/parallel.hpp"

namespace ldmr {

double MbConfig::effective_blend() const {
  if (blend_weight >= 0.0) {
    require(blend_weight <= 1.0, ErrorCode::precondition,
            "blend weight must be in [0,1]");
    return blend_weight;
  }
  return 1.0 - std::sqrt(gamma);
}

namespace {

std::vector<double> dct_matrix(int n) {
  std::vector<double> m(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k) {
    double a = (k == 0) ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j)
      m[static_cast<std::size_t>(k) * n + j] =
          a * std::cos(std::numbers::pi * (2 * j + 1) * k / (2.0 * n));
  }
  return m;
}

std::vector<float> denoise_patch_dct(const std::vector<float>& img, int width,
                                     int height, int n, double thr) {
  require(width >= n && height >= n, ErrorCode::precondition,
          "image smaller than DCT window");
  const std::vector<double> C = dct_matrix(n);
  const int rows = height - n + 1;
  const int cols = width - n + 1;

  // Overlap-add into per-chunk buffers, combined in chunk order, so the
  // accumulation order never depends on the worker count.
  const int n_chunks = std::min(16, rows);
  std::vector<std::vector<double>> acc(
      n_chunks, std::vector<double>(img.size(), 0.0));

  parallel_chunks(rows, n_chunks, [&](int chunk, int64_t lo, int64_t hi) {
    std::vector<double> p(static_cast<std::size_t>(n) * n);
    std::vector<double> tmp(p.size()), coef(p.size());
    auto& a = acc[chunk];
    for (int64_t r0 = lo; r0 < hi; ++r0) {
      for (int c0 = 0; c0 < cols; ++c0) {
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c)
            p[static_cast<std::size_t>(r) * n + c] =
                img[static_cast<std::size_t>(r0 + r) * width + (c0 + c)];
        // coef = C * p * C^T
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k)
              s += C[static_cast<std::size_t>(i) * n + k] *
                   p[static_cast<std::size_t>(k) * n + j];
            tmp[static_cast<std::size_t>(i) * n + j] = s;
          }
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k)
              s += tmp[static_cast<std::size_t>(i) * n + k] *
                   C[static_cast<std::size_t>(j) * n + k];
            coef[static_cast<std::size_t>(i) * n + j] = s;
          }
        // hard threshold, DC preserved
        for (std::size_t t = 1; t < coef.size(); ++t)
          if (std::abs(coef[t]) < thr) coef[t] = 0.0;
        // p = C^T * coef * C
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k)
              s += C[static_cast<std::size_t>(k) * n + i] *
                   coef[static_cast<std::size_t>(k) * n + j];
            tmp[static_cast<std::size_t>(i) * n + j] = s;
          }
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k)
              s += tmp[static_cast<std::size_t>(i) * n + k] *
                   C[static_cast<std::size_t>(k) * n + j];
            a[static_cast<std::size_t>(r0 + i) * width + (c0 + j)] += s;
          }
      }
    }
  });

  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    int r = static_cast<int>(i) / width;
    int c = static_cast<int>(i) % width;
    // number of windows covering (r,c)
    int r_lo = std::max(0, r - n + 1), r_hi = std::min(r, rows - 1);
    int c_lo = std::max(0, c - n + 1), c_hi = std::min(c, cols - 1);
    double cnt = static_cast<double>(r_hi - r_lo + 1) * (c_hi - c_lo + 1);
    double s = 0;
    for (const auto& a : acc) s += a[i];
    out[i] = static_cast<float>(s / cnt);
  }
  return out;
}

std::vector<float> denoise_gaussian(const std::vector<float>& img, int width,
                                    int height, int window) {
  double sigma = window / 6.0;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<float> tmp(img.size()), out(img.size());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double s = 0;
      for (int j = -radius; j <= radius; ++j)
        s += k[j + radius] *
             img[static_cast<std::size_t>(r) * width + reflect(c + j, width)];
      tmp[static_cast<std::size_t>(r) * width + c] = static_cast<float>(s);
    }
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double s = 0;
      for (int j = -radius; j <= radius; ++j)
        s += k[j + radius] *
             tmp[static_cast<std::size_t>(reflect(r + j, height)) * width + c];
      out[static_cast<std::size_t>(r) * width + c] = static_cast<float>(s);
    }
  return out;
}

}  // namespace

std::vector<float> denoise_stabilized(const std::vector<float>& d, int width,
                                      int height, const DenoiserSpec& spec) {
  require(spec.strength > 0.0, ErrorCode::precondition,
          "denoiser strength must be positive");
  require(d.size() == static_cast<std::size_t>(width) * height,
          ErrorCode::precondition, "buffer size mismatch");
  switch (spec.kind) {
    case DenoiserKind::patch_dct:
      return denoise_patch_dct(d, width, height, spec.window,
                               2.7 * spec.strength);
    case DenoiserKind::gaussian_blur:
      return denoise_gaussian(d, width, height, spec.window);
    case DenoiserKind::external: {
      ImageF ext = load_float(spec.path);
      require(ext.width == width && ext.height == height,
              ErrorCode::precondition,
              "external denoised array has wrong dimensions");
      return std::vector<float>(ext.values.begin(), ext.values.end());
    }
  }
  fail(ErrorCode::precondition, "unknown denoiser kind");
}

ImageF mb_restore(const RawImage& ld, const MbConfig& cfg) {
  require(cfg.gamma == ld.meta.gamma, ErrorCode::precondition,
          "config gamma differs from image gamma");
  cfg.params.validate();
  const double g = cfg.gamma;
  const double tau = cfg.params.tau;

  // Rescaled to the full-dose signal level the image follows the noise model
  // with quantum gain lambda/gamma and electronic term sigma_e2/gamma^2.
  NoiseParams eff;
  eff.lambda = cfg.params.lambda / g;
  eff.sigma_e2 = cfg.params.sigma_e2 / (g * g);
  eff.tau = tau;

  std::vector<float> scaled(ld.size());
  for (std::size_t i = 0; i < ld.size(); ++i)
    scaled[i] =
        static_cast<float>((static_cast<double>(ld.pixels[i]) - tau) / g + tau);

  std::vector<float> stab = gat_forward(scaled, eff);
  std::vector<float> den_stab =
      denoise_stabilized(stab, ld.width, ld.height, cfg.denoiser);
  std::vector<float> den = gat_exact_unbiased_inverse(den_stab, eff);

  const double w = cfg.effective_blend();
  ImageF out;
  out.width = ld.width;
  out.height = ld.height;
  out.meta = ld.meta;
  out.meta.gamma = 1.0;
  out.meta.tag = "mb-restored";
  out.values.resize(ld.size());
  for (std::size_t i = 0; i < ld.size(); ++i)
    out.values[i] = w * den[i] + (1.0 - w) * scaled[i];
  return out;
}

}  // namespace ldmr
