#include "ldmr/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "ldmr/parallel.hpp"
#include "ldmr/rng.hpp"

namespace ldmr {

PhantomSpec PhantomSpec::defaults(int width, int height, uint64_t seed) {
  PhantomSpec s;
  s.width = width;
  s.height = height;
  s.seed = seed;
  s.semi_axis_col = 0.72 * width;
  s.semi_axis_row = 0.42 * height;
  McCluster a;
  a.center_row = 0.40 * height;
  a.center_col = 0.28 * width;
  McCluster b;
  b.center_row = 0.62 * height;
  b.center_col = 0.38 * width;
  s.mc_clusters = {a, b};
  return s;
}

void PhantomSpec::validate(const NoiseParams& params,
                           double saturation) const {
  require(width > 0 && height > 0, ErrorCode::precondition,
          "phantom dimensions must be positive");
  require(base_level > params.tau, ErrorCode::precondition,
          "base_level must exceed tau");
  require(air_level > params.tau, ErrorCode::precondition,
          "air_level must exceed tau");
  require(std::max(base_level, air_level) <= 0.9 * saturation,
          ErrorCode::precondition, "phantom levels too close to saturation");
  require(background.sigma_min > 0 && background.sigma_max >= background.sigma_min,
          ErrorCode::precondition, "invalid blob sigma range");
}

GeneratedPhantom generate_phantom(const PhantomSpec& spec,
                                  const NoiseParams& params,
                                  double saturation) {
  require(spec.width > 0 && spec.height > 0, ErrorCode::precondition,
          "phantom dimensions must be positive");
  require(spec.base_level > params.tau && spec.air_level > params.tau,
          ErrorCode::precondition, "levels must exceed tau");

  const int w = spec.width, h = spec.height;
  const double a = spec.semi_axis_col > 0 ? spec.semi_axis_col : 0.72 * w;
  const double b = spec.semi_axis_row > 0 ? spec.semi_axis_row : 0.42 * h;
  const double cy = 0.5 * (h - 1);

  GeneratedPhantom out;
  out.image.width = w;
  out.image.height = h;
  out.image.values.assign(static_cast<std::size_t>(w) * h,
                          static_cast<float>(spec.air_level));
  out.image.support.width = w;
  out.image.support.height = h;
  out.image.support.bits.assign(out.image.values.size(), 0);
  out.specks.width = w;
  out.specks.height = h;
  out.specks.bits.assign(out.image.values.size(), 0);

  // Half-ellipse anchored on the chest wall (left edge).
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double ex = c / a;
      double ey = (r - cy) / b;
      double r2 = ex * ex + ey * ey;
      if (r2 <= 1.0) {
        out.image.support.set(r, c, true);
        out.image.values[static_cast<std::size_t>(r) * w + c] =
            static_cast<float>(spec.base_level + spec.edge_rise * r2);
      }
    }

  std::mt19937_64 rng(mix64(spec.seed));
  std::uniform_real_distribution<double> u01d(0.0, 1.0);

  // Lumpy background: positive Gaussian bumps with centers inside the
  // support. Centers keep a minimum separation of 1.1*(sigma_i + sigma_j) so
  // the summed field stays bounded by roughly one blob amplitude.
  const auto& bg = spec.background;
  std::vector<std::array<double, 3>> placed;  // row, col, sigma
  for (int i = 0; i < bg.blob_count; ++i) {
    double sigma = bg.sigma_min + u01d(rng) * (bg.sigma_max - bg.sigma_min);
    double amp = bg.amp_min + u01d(rng) * (bg.amp_max - bg.amp_min);
    double br = 0, bc = 0;
    bool ok = false;
    for (int guard = 0; guard < 20000 && !ok; ++guard) {
      br = u01d(rng) * (h - 1);
      bc = u01d(rng) * (w - 1);
      if (!out.image.support.at(static_cast<int>(br), static_cast<int>(bc)))
        continue;
      ok = true;
      for (const auto& pl : placed) {
        double dr = br - pl[0], dc = bc - pl[1];
        double sep = 1.1 * (sigma + pl[2]);
        if (dr * dr + dc * dc < sep * sep) {
          ok = false;
          break;
        }
      }
    }
    // saturated packing: place regardless, the property holds for defaults
    placed.push_back({br, bc, sigma});
    int r0 = std::max(0, static_cast<int>(br - 4 * sigma));
    int r1 = std::min(h - 1, static_cast<int>(br + 4 * sigma));
    int c0 = std::max(0, static_cast<int>(bc - 4 * sigma));
    int c1 = std::min(w - 1, static_cast<int>(bc + 4 * sigma));
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        if (!out.image.support.at(r, c)) continue;
        double d2 = (r - br) * (r - br) + (c - bc) * (c - bc);
        out.image.values[static_cast<std::size_t>(r) * w + c] +=
            static_cast<float>(amp * std::exp(-d2 * inv2s2));
      }
  }

  // Microcalcification specks: hard discs around each cluster center.
  for (const auto& cl : spec.mc_clusters) {
    for (int s = 0; s < cl.speck_count; ++s) {
      double sr, sc;
      int guard = 0;
      do {
        sr = cl.center_row + counter_normal(derive_seed(spec.seed, "speckr"),
                                            1000 * s + guard) *
                                 cl.scatter_sigma;
        sc = cl.center_col + counter_normal(derive_seed(spec.seed, "speckc"),
                                            1000 * s + guard) *
                                 cl.scatter_sigma;
        ++guard;
        if (guard > 1000)
          fail(ErrorCode::precondition, "cluster center outside support");
      } while (sr < 1 || sr > h - 2 || sc < 1 || sc > w - 2 ||
               !out.image.support.at(static_cast<int>(sr),
                                     static_cast<int>(sc)));
      int rr0 = std::max(0, static_cast<int>(sr - cl.speck_radius - 1));
      int rr1 = std::min(h - 1, static_cast<int>(sr + cl.speck_radius + 1));
      int cc0 = std::max(0, static_cast<int>(sc - cl.speck_radius - 1));
      int cc1 = std::min(w - 1, static_cast<int>(sc + cl.speck_radius + 1));
      for (int r = rr0; r <= rr1; ++r)
        for (int c = cc0; c <= cc1; ++c) {
          if (!out.image.support.at(r, c)) continue;
          double d2 = (r - sr) * (r - sr) + (c - sc) * (c - sc);
          if (d2 <= cl.speck_radius * cl.speck_radius) {
            out.image.values[static_cast<std::size_t>(r) * w + c] +=
                static_cast<float>(cl.speck_amplitude);
            out.specks.set(r, c, true);
          }
        }
    }
  }

  double worst = 0;
  for (float v : out.image.values) worst = std::max(worst, double(v));
  require(worst <= 0.9 * saturation, ErrorCode::precondition,
          "phantom exceeds 0.9 * saturation");
  return out;
}

RawImage acquire(const NoiseFreeImage& y, const NoiseParams& params,
                 double gamma, uint64_t seed, double saturation) {
  params.validate();
  require(gamma > 0.0 && gamma <= 1.0, ErrorCode::precondition,
          "gamma must be in (0,1]");

  RawImage out;
  out.width = y.width;
  out.height = y.height;
  out.meta.noise = params;
  out.meta.gamma = gamma;
  out.meta.saturation_dn = saturation;
  out.meta.seed = seed;
  out.pixels.resize(y.values.size());

  const double tau = params.tau;
  const int64_t n = static_cast<int64_t>(y.values.size());
  parallel_chunks(n, 64, [&](int, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      double s = static_cast<double>(y.values[i]) - tau;
      double var = gamma * params.lambda * s + params.sigma_e2;
      double v = gamma * s + tau;
      if (var > 0.0)
        v += std::sqrt(var) * counter_normal(seed, static_cast<uint64_t>(i));
      out.pixels[i] = quantize_u16(v, saturation);
    }
  });
  return out;
}

}  // namespace ldmr
