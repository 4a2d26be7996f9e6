#include "ldmr/dosesim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ldmr/gat.hpp"
#include "ldmr/parallel.hpp"
#include "ldmr/rng.hpp"

namespace ldmr {

RawImage simulate_low_dose(const RawImage& fd, const DoseSimConfig& cfg) {
  require(cfg.gamma > 0.0 && cfg.gamma < 1.0, ErrorCode::precondition,
          "dose fraction must be in (0,1)");
  require(fd.meta.gamma == 1.0, ErrorCode::precondition,
          "input must be a full-dose image (gamma == 1)");
  cfg.params.validate();
  if (cfg.domain == DoseSimDomain::vst)
    require(cfg.params.lambda > 0.0, ErrorCode::precondition,
            "vst mode requires lambda > 0");

  const double g = cfg.gamma;
  const double tau = cfg.params.tau;
  const double lambda = cfg.params.lambda;
  const double se2 = cfg.params.sigma_e2;
  const double sat = fd.meta.saturation_dn;

  RawImage out;
  out.width = fd.width;
  out.height = fd.height;
  out.meta = fd.meta;
  out.meta.gamma = g;
  out.meta.seed = cfg.seed;
  out.meta.tag = fd.meta.tag.empty()
                     ? "simulated-ld"
                     : fd.meta.tag + "|simulated-ld";
  out.pixels.resize(fd.size());

  const int64_t n = static_cast<int64_t>(fd.size());
  if (cfg.domain == DoseSimDomain::direct) {
    parallel_chunks(n, 64, [&](int, int64_t lo, int64_t hi) {
      for (int64_t i = lo; i < hi; ++i) {
        double s = static_cast<double>(fd.pixels[i]) - tau;
        double var = g * (1.0 - g) * lambda * s + (1.0 - g * g) * se2;
        double v = g * s + tau;
        if (var > 0.0)
          v += std::sqrt(var) * counter_normal(cfg.seed, static_cast<uint64_t>(i));
        out.pixels[i] = quantize_u16(v, sat);
      }
    });
    return out;
  }

  // vst mode. The injected unit-law noise inflates E[(d/2)^2] by
  // (1/g - 1)/4; the rescale subtracts that excess so the sqrt(gamma) dose
  // law lands on the stabilized mean. The algebraic inverse is the correct
  // pointwise inverse for noisy samples (its Jensen term cancels the
  // forward's mean depression); the series inverse is reserved for denoised
  // estimates.
  const double c = 0.375 + se2 / (lambda * lambda);
  const double inj_sd = std::sqrt(1.0 / g - 1.0);
  parallel_chunks(n, 64, [&](int, int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      double d = gat_forward(static_cast<double>(fd.pixels[i]), cfg.params);
      d += inj_sd * counter_normal(cfg.seed, static_cast<uint64_t>(i));
      double u = g * (0.25 * d * d - c) + c - 0.25 * (1.0 - g);
      double dg = u > 0.0 ? 2.0 * std::sqrt(u) : 0.0;
      double v = gat_algebraic_inverse(dg, cfg.params);
      out.pixels[i] = quantize_u16(v, sat);
    }
  });
  return out;
}

NoiseParams estimate_noise_params(const std::vector<FlatGroup>& flats) {
  std::set<double> exposures;
  for (const auto& grp : flats) {
    require(grp.images.size() >= 2, ErrorCode::precondition,
            "each exposure level needs at least 2 realizations");
    exposures.insert(grp.exposure);
  }
  require(exposures.size() >= 3, ErrorCode::precondition,
          "need at least 3 distinct exposure levels");
  require(exposures.size() == flats.size(), ErrorCode::precondition,
          "duplicate exposure levels");

  // tau from the dark frames if present
  double tau = 0.0;
  for (const auto& grp : flats) {
    if (grp.exposure != 0.0) continue;
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const auto& img : grp.images) {
      sum += pairwise_sum(img.pixels);
      cnt += img.size();
    }
    tau = sum / static_cast<double>(cnt);
  }

  struct Level {
    double mean, var, weight;
  };
  std::vector<Level> levels;
  for (const auto& grp : flats) {
    const std::size_t npx = grp.images.front().size();
    const std::size_t nr = grp.images.size();
    for (const auto& img : grp.images)
      require(img.size() == npx, ErrorCode::precondition,
              "flat sizes differ within a level");
    double mean_acc = 0.0, var_acc = 0.0;
    for (std::size_t i = 0; i < npx; ++i) {
      double m = 0.0;
      for (const auto& img : grp.images) m += img.pixels[i];
      m /= static_cast<double>(nr);
      double v = 0.0;
      for (const auto& img : grp.images) {
        double d = img.pixels[i] - m;
        v += d * d;
      }
      v /= static_cast<double>(nr - 1);
      mean_acc += m;
      var_acc += v;
    }
    Level lv;
    lv.mean = mean_acc / static_cast<double>(npx);
    lv.var = var_acc / static_cast<double>(npx);
    // Var(v_bar) ~ 2 v^2 / ((nr-1) * npx)
    double denom = 2.0 * std::max(lv.var, 1e-12) * std::max(lv.var, 1e-12);
    lv.weight = static_cast<double>((nr - 1) * npx) / denom;
    levels.push_back(lv);
  }

  double vmax = 0.0;
  for (const auto& lv : levels) vmax = std::max(vmax, lv.var);
  require(vmax > 1e-9, ErrorCode::singular_fit,
          "all variances vanish; noiseless flats");

  // WLS line var = lambda * (mean - tau) + sigma_e2
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (const auto& lv : levels) {
    double x = lv.mean - tau;
    double w = lv.weight;
    sw += w;
    swx += w * x;
    swy += w * lv.var;
    swxx += w * x * x;
    swxy += w * x * lv.var;
  }
  double det = sw * swxx - swx * swx;
  require(std::abs(det) > 1e-9 * sw * std::max(swxx, 1.0),
          ErrorCode::singular_fit, "singular fit: exposure levels degenerate");
  double lambda = (sw * swxy - swx * swy) / det;
  double sigma_e2 = (swxx * swy - swx * swxy) / det;
  require(lambda > 0.0, ErrorCode::singular_fit,
          "fit produced non-positive quantum gain");

  NoiseParams p;
  p.lambda = lambda;
  p.sigma_e2 = std::max(0.0, sigma_e2);
  p.tau = tau;
  return p;
}

}  // namespace ldmr
