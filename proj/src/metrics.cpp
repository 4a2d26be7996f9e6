#include "ldmr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ldmr/rng.hpp"

namespace ldmr {

namespace {

void check_shapes(const std::vector<ImageF>& imgs, const BreastMask& mask) {
  require(!imgs.empty(), ErrorCode::precondition, "empty image set");
  for (const auto& im : imgs)
    require(im.width == mask.width && im.height == mask.height,
            ErrorCode::precondition, "image/mask dimensions differ");
}

// E[sqrt(unbiased variance)] = c4 * sigma for normal data; dividing by c4
// makes the deviation estimate itself unbiased.
double c4_factor(int n) {
  double lg = std::lgamma(n / 2.0) - std::lgamma((n - 1) / 2.0);
  return std::sqrt(2.0 / (n - 1)) * std::exp(lg);
}

}  // namespace

GroundTruth estimate_gt(const std::vector<ImageF>& gt_pool,
                        const BreastMask& mask) {
  require(gt_pool.size() >= 2, ErrorCode::precondition,
          "GT estimation needs at least 2 realizations");
  check_shapes(gt_pool, mask);
  const std::size_t npx = gt_pool.front().size();
  const int n = static_cast<int>(gt_pool.size());
  GroundTruth gt;
  gt.width = gt_pool.front().width;
  gt.height = gt_pool.front().height;
  gt.n = n;
  gt.mean.assign(npx, 0.0);
  gt.pointvar.assign(npx, 0.0);
  for (std::size_t i = 0; i < npx; ++i) {
    double m = 0;
    for (const auto& im : gt_pool) m += im.values[i];
    m /= n;
    double v = 0;
    for (const auto& im : gt_pool) {
      double d = im.values[i] - m;
      v += d * d;
    }
    gt.mean[i] = m;
    gt.pointvar[i] = v / (n - 1);
  }
  return gt;
}

ImageF mean_correct(const ImageF& image, const GroundTruth& gt,
                    const BreastMask& mask, MeanCorrection* coeffs) {
  require(image.width == gt.width && image.height == gt.height,
          ErrorCode::precondition, "image/GT dimensions differ");
  require(mask.count() > 0, ErrorCode::empty_mask, "empty mask");

  double sx = 0, sg = 0, sxx = 0, sxg = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!mask.bits[i]) continue;
    double x = image.values[i];
    double g = gt.mean[i];
    sx += x;
    sg += g;
    sxx += x * x;
    sxg += x * g;
    ++cnt;
  }
  double n = static_cast<double>(cnt);
  double varx = sxx - sx * sx / n;
  MeanCorrection mc;
  if (varx <= 1e-9 * std::max(1.0, sxx)) {
    mc.a = 0.0;
    mc.b = sg / n;
    mc.degenerate = true;
  } else {
    mc.a = (sxg - sx * sg / n) / varx;
    mc.b = (sg - mc.a * sx) / n;
  }
  if (coeffs) *coeffs = mc;

  ImageF out = image;
  for (auto& v : out.values) v = mc.a * v + mc.b;
  return out;
}

GtProtocolResult gt_protocol(
    const std::vector<ImageF>& fd_pool, int n_gt,
    const std::vector<std::vector<ImageF>>& ld_sets,
    const std::vector<std::vector<ImageF>>& restored_sets,
    const BreastMask& mask) {
  require(n_gt >= 2, ErrorCode::precondition, "GT pool too small");
  require(static_cast<int>(fd_pool.size()) > n_gt, ErrorCode::precondition,
          "FD pool must hold GT and evaluation images");
  check_shapes(fd_pool, mask);

  std::vector<ImageF> pool(fd_pool.begin(), fd_pool.begin() + n_gt);
  GroundTruth gt0 = estimate_gt(pool, mask);
  for (auto& im : pool) im = mean_correct(im, gt0, mask);
  GroundTruth gt1 = estimate_gt(pool, mask);

  GtProtocolResult out;
  out.gt = gt1;
  for (std::size_t i = n_gt; i < fd_pool.size(); ++i)
    out.fd_eval.push_back(mean_correct(fd_pool[i], gt1, mask));
  for (const auto& set : ld_sets) {
    std::vector<ImageF> corrected;
    for (const auto& im : set) corrected.push_back(mean_correct(im, gt1, mask));
    out.ld_sets.push_back(std::move(corrected));
  }
  for (const auto& set : restored_sets) {
    std::vector<ImageF> corrected;
    for (const auto& im : set) corrected.push_back(mean_correct(im, gt1, mask));
    out.restored_sets.push_back(std::move(corrected));
  }
  return out;
}

MnseReport evaluate_mnse(const std::vector<ImageF>& eval_set,
                         const GroundTruth& gt, const BreastMask& mask,
                         const BootstrapConfig& bs) {
  const int P = static_cast<int>(eval_set.size());
  require(P >= 2, ErrorCode::precondition, "MNSE needs at least 2 images");
  check_shapes(eval_set, mask);
  require(gt.width == mask.width && gt.height == mask.height,
          ErrorCode::precondition, "GT/mask dimensions differ");

  // Index set: mask pixels with usable GT. Non-positive GT on the mask is an
  // error; (0,1] DN pixels are excluded and counted.
  std::vector<std::size_t> idx;
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    double g = gt.mean[i];
    require(g > 0.0, ErrorCode::numeric, "GT is non-positive inside the mask");
    if (g <= 1.0) {
      ++excluded;
      continue;
    }
    idx.push_back(i);
  }
  require(!idx.empty(), ErrorCode::empty_mask, "no usable pixels in mask");
  const std::size_t I = idx.size();

  std::vector<double> nqe(I), vnorm(I), m2(I), phi(I);
  for (std::size_t k = 0; k < I; ++k) {
    std::size_t i = idx[k];
    double g = gt.mean[i];
    double mean_p = 0;
    for (const auto& im : eval_set) mean_p += im.values[i];
    mean_p /= P;
    double sq = 0, var_p = 0;
    for (const auto& im : eval_set) {
      double d = im.values[i] - g;
      sq += d * d;
      double e = im.values[i] - mean_p;
      var_p += e * e;
    }
    nqe[k] = sq / P / g;
    vnorm[k] = var_p / (P - 1) / g;
    m2[k] = (mean_p - g) * (mean_p - g) / g;
    phi[k] = gt.pointvar[i] / (gt.n * g);
  }

  auto aggregate = [&](const double* w_nqe, const double* w_v,
                       const double* w_m2, const double* w_phi, std::size_t n,
                       double& total, double& rn, double& b2) {
    double mean_nqe = pairwise_sum(w_nqe, n) / n;
    double mean_v = pairwise_sum(w_v, n) / n;
    double mean_m2 = pairwise_sum(w_m2, n) / n;
    double mean_phi = pairwise_sum(w_phi, n) / n;
    total = mean_nqe - mean_phi;
    rn = mean_v;
    b2 = mean_m2 - mean_phi - rn / P;
  };

  MnseReport rep;
  rep.p = P;
  rep.excluded_pixels = excluded;
  aggregate(nqe.data(), vnorm.data(), m2.data(), phi.data(), I, rep.total,
            rep.rn, rep.b2);
  rep.phi1 = pairwise_sum(phi) / static_cast<double>(I);

  // pixel bootstrap
  const int B = bs.resamples;
  if (B > 0) {
    std::vector<double> bt(B), br(B), bb(B);
    std::vector<double> rn_nqe(I), rn_v(I), rn_m2(I), rn_phi(I);
    for (int rep_i = 0; rep_i < B; ++rep_i) {
      uint64_t s = derive_seed(bs.seed, "bootstrap", rep_i);
      for (std::size_t k = 0; k < I; ++k) {
        std::size_t j = counter_bits(s, k) % I;
        rn_nqe[k] = nqe[j];
        rn_v[k] = vnorm[j];
        rn_m2[k] = m2[j];
        rn_phi[k] = phi[j];
      }
      aggregate(rn_nqe.data(), rn_v.data(), rn_m2.data(), rn_phi.data(), I,
                bt[rep_i], br[rep_i], bb[rep_i]);
    }
    auto pct = [&](std::vector<double>& v) {
      std::sort(v.begin(), v.end());
      int lo = static_cast<int>(std::floor(0.025 * (B - 1)));
      int hi = static_cast<int>(std::ceil(0.975 * (B - 1)));
      return Interval{v[lo], v[hi]};
    };
    rep.ci_total = pct(bt);
    rep.ci_rn = pct(br);
    rep.ci_b2 = pct(bb);
  }
  return rep;
}

SnrResult snr_map(const std::vector<ImageF>& realizations,
                  const BreastMask& mask, int box, const BootstrapConfig& bs) {
  const int P = static_cast<int>(realizations.size());
  require(P >= 2, ErrorCode::precondition, "SNR needs at least 2 realizations");
  check_shapes(realizations, mask);

  const int w = mask.width, h = mask.height;
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  const double c4 = c4_factor(P);

  std::vector<double> mean(npx, 0.0), sd(npx, 0.0);
  for (std::size_t i = 0; i < npx; ++i) {
    if (!mask.bits[i]) continue;
    double m = 0;
    for (const auto& im : realizations) m += im.values[i];
    m /= P;
    double v = 0;
    for (const auto& im : realizations) {
      double d = im.values[i] - m;
      v += d * d;
    }
    mean[i] = m;
    sd[i] = std::sqrt(v / (P - 1)) / c4;
  }

  // mask-aware box smoothing, renormalized by the in-mask window population
  auto smooth = [&](const std::vector<double>& src) {
    std::vector<double> out(npx, 0.0);
    int r0 = box / 2;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        std::size_t i = static_cast<std::size_t>(r) * w + c;
        if (!mask.bits[i]) continue;
        double s = 0;
        int cnt = 0;
        for (int dr = -r0; dr <= r0; ++dr) {
          int rr = r + dr;
          if (rr < 0 || rr >= h) continue;
          for (int dc = -r0; dc <= r0; ++dc) {
            int cc = c + dc;
            if (cc < 0 || cc >= w) continue;
            std::size_t j = static_cast<std::size_t>(rr) * w + cc;
            if (!mask.bits[j]) continue;
            s += src[j];
            ++cnt;
          }
        }
        out[i] = s / cnt;
      }
    return out;
  };

  std::vector<double> sm = smooth(mean);
  std::vector<double> ss = smooth(sd);

  SnrResult res;
  res.width = w;
  res.height = h;
  res.map.assign(npx, 0.0f);
  std::vector<double> finite_vals;
  for (std::size_t i = 0; i < npx; ++i) {
    if (!mask.bits[i]) continue;
    if (ss[i] <= 0.0) {
      res.map[i] = std::numeric_limits<float>::infinity();
      continue;
    }
    double snr = sm[i] / ss[i];
    res.map[i] = static_cast<float>(snr);
    finite_vals.push_back(snr);
  }
  require(!finite_vals.empty(), ErrorCode::numeric,
          "SNR undefined everywhere (zero variance)");
  res.mean_snr = pairwise_sum(finite_vals) / finite_vals.size();

  const int B = bs.resamples;
  if (B > 0) {
    const std::size_t I = finite_vals.size();
    std::vector<double> means(B);
    std::vector<double> buf(I);
    for (int rep_i = 0; rep_i < B; ++rep_i) {
      uint64_t s = derive_seed(bs.seed, "snr-bootstrap", rep_i);
      for (std::size_t k = 0; k < I; ++k)
        buf[k] = finite_vals[counter_bits(s, k) % I];
      means[rep_i] = pairwise_sum(buf) / I;
    }
    std::sort(means.begin(), means.end());
    int lo = static_cast<int>(std::floor(0.025 * (B - 1)));
    int hi = static_cast<int>(std::ceil(0.975 * (B - 1)));
    res.ci = {means[lo], means[hi]};
  }
  return res;
}

}  // namespace ldmr
