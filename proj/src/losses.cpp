#include "ldmr/losses.hpp"

#include <cmath>

#include "ldmr/checkpoint.hpp"
#include "ldmr/rng.hpp"

namespace ldmr {

using nn::TensorT;

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::mae: return "mae";
    case LossKind::ssim: return "ssim";
    case LossKind::pl1: return "pl1";
    case LossKind::pl2: return "pl2";
    case LossKind::pl3: return "pl3";
    case LossKind::pl4: return "pl4";
  }
  return "?";
}

LossKind loss_from_name(const std::string& name) {
  for (LossKind k : {LossKind::mse, LossKind::mae, LossKind::ssim,
                     LossKind::pl1, LossKind::pl2, LossKind::pl3,
                     LossKind::pl4})
    if (name == loss_name(k)) return k;
  fail(ErrorCode::precondition, "unknown loss: " + name);
}

int perceptual_tap(LossKind k) {
  switch (k) {
    case LossKind::pl1: return 1;
    case LossKind::pl2: return 2;
    case LossKind::pl3: return 3;
    case LossKind::pl4: return 4;
    default: fail(ErrorCode::precondition, "not a perceptual loss");
  }
}

// ---------------------------------------------------------------------------

template <typename T>
LossValue<T> mse_loss(const TensorT<T>& xhat, const TensorT<T>& x) {
  require(xhat.shape == x.shape, ErrorCode::precondition,
          "mse shape mismatch");
  const std::size_t n = xhat.data.size();
  LossValue<T> out;
  out.grad = TensorT<T>(xhat.shape);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(xhat.data[i]) - x.data[i];
    acc += d * d;
    out.grad.data[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
  }
  out.value = acc / static_cast<double>(n);
  return out;
}

template <typename T>
LossValue<T> mae_loss(const TensorT<T>& xhat, const TensorT<T>& x) {
  require(xhat.shape == x.shape, ErrorCode::precondition,
          "mae shape mismatch");
  const std::size_t n = xhat.data.size();
  LossValue<T> out;
  out.grad = TensorT<T>(xhat.shape);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(xhat.data[i]) - x.data[i];
    acc += std::abs(d);
    double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);  // subgradient 0 at kinks
    out.grad.data[i] = static_cast<T>(s / static_cast<double>(n));
  }
  out.value = acc / static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

std::vector<double> gaussian_window(int k, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(k) * k);
  double c = (k - 1) / 2.0;
  double sum = 0;
  for (int r = 0; r < k; ++r)
    for (int cc = 0; cc < k; ++cc) {
      double d2 = (r - c) * (r - c) + (cc - c) * (cc - c);
      double v = std::exp(-d2 / (2 * sigma * sigma));
      w[static_cast<std::size_t>(r) * k + cc] = v;
      sum += v;
    }
  for (auto& v : w) v /= sum;
  return w;
}

// valid-mode windowed sum of w * src over each k x k window
template <typename T>
void conv_valid(const T* src, int h, int wd, const std::vector<double>& win,
                int k, double* dst) {
  const int ho = h - k + 1, wo = wd - k + 1;
  for (int r = 0; r < ho; ++r)
    for (int c = 0; c < wo; ++c) {
      double s = 0;
      for (int dr = 0; dr < k; ++dr) {
        const T* row = src + static_cast<std::size_t>(r + dr) * wd + c;
        const double* wrow = win.data() + static_cast<std::size_t>(dr) * k;
        for (int dc = 0; dc < k; ++dc) s += wrow[dc] * row[dc];
      }
      dst[static_cast<std::size_t>(r) * wo + c] = s;
    }
}

// adjoint: scatter per-window values back through the window weights
template <typename T>
void corr_full_add(const double* winvals, int ho, int wo,
                   const std::vector<double>& win, int k, double scale,
                   T* dst, int wd) {
  for (int r = 0; r < ho; ++r)
    for (int c = 0; c < wo; ++c) {
      double v = winvals[static_cast<std::size_t>(r) * wo + c] * scale;
      if (v == 0.0) continue;
      for (int dr = 0; dr < k; ++dr) {
        T* row = dst + static_cast<std::size_t>(r + dr) * wd + c;
        const double* wrow = win.data() + static_cast<std::size_t>(dr) * k;
        for (int dc = 0; dc < k; ++dc)
          row[dc] += static_cast<T>(v * wrow[dc]);
      }
    }
}

}  // namespace

template <typename T>
LossValue<T> ssim_loss(const TensorT<T>& xhat, const TensorT<T>& x,
                       const SsimParams& p) {
  require(xhat.shape == x.shape, ErrorCode::precondition,
          "ssim shape mismatch");
  require(xhat.shape.size() == 4 && xhat.dim(1) == 1, ErrorCode::precondition,
          "ssim expects (B,1,H,W)");
  const int b = xhat.dim(0), h = xhat.dim(2), wd = xhat.dim(3);
  const int k = p.window;
  require(k % 2 == 1 && p.c1 > 0 && p.c2 > 0, ErrorCode::precondition,
          "invalid ssim parameters");
  require(h >= k && wd >= k, ErrorCode::precondition,
          "image smaller than ssim window");
  const int ho = h - k + 1, wo = wd - k + 1;
  const std::size_t nw = static_cast<std::size_t>(ho) * wo;
  const std::vector<double> win = gaussian_window(k, p.sigma);

  LossValue<T> out;
  out.grad = TensorT<T>(xhat.shape);
  double mssim_acc = 0;

  std::vector<double> A(nw), Bm(nw), Cm(nw), Dm(nw), Em(nw);
  std::vector<double> sq1(static_cast<std::size_t>(h) * wd),
      sq2(sq1.size()), cr(sq1.size());
  std::vector<double> dA(nw), dC(nw), dE(nw);

  for (int bi = 0; bi < b; ++bi) {
    const T* ph = xhat.ptr() + static_cast<std::size_t>(bi) * h * wd;
    const T* px = x.ptr() + static_cast<std::size_t>(bi) * h * wd;
    for (std::size_t i = 0; i < sq1.size(); ++i) {
      sq1[i] = static_cast<double>(ph[i]) * ph[i];
      sq2[i] = static_cast<double>(px[i]) * px[i];
      cr[i] = static_cast<double>(ph[i]) * px[i];
    }
    conv_valid(ph, h, wd, win, k, A.data());
    conv_valid(px, h, wd, win, k, Bm.data());
    conv_valid(sq1.data(), h, wd, win, k, Cm.data());
    conv_valid(sq2.data(), h, wd, win, k, Dm.data());
    conv_valid(cr.data(), h, wd, win, k, Em.data());

    double ssum = 0;
    for (std::size_t i = 0; i < nw; ++i) {
      double a = A[i], bm = Bm[i];
      double s1 = Cm[i] - a * a;       // weighted variance of xhat
      double s2 = Dm[i] - bm * bm;     // weighted variance of x
      double s12 = Em[i] - a * bm;     // weighted covariance
      double lnum = 2 * a * bm + p.c1;
      double lden = a * a + bm * bm + p.c1;
      double cnum = 2 * s12 + p.c2;
      double cden = s1 + s2 + p.c2;
      double N = lnum * cnum;
      double D = lden * cden;
      double S = N / D;
      ssum += S;
      // dS/dA with A appearing in lnum, lden, s1, s12
      double dN_dA = 2 * bm * cnum + lnum * (-2 * bm);
      double dD_dA = 2 * a * cden + lden * (-2 * a);
      dA[i] = (dN_dA * D - N * dD_dA) / (D * D);
      dC[i] = -N * lden / (D * D);     // via cden (s1 = C - A^2)
      dE[i] = 2 * lnum / D;            // via cnum (s12 = E - A*B)
    }
    mssim_acc += ssum / static_cast<double>(nw);

    // loss = 1 - mean(S); scale carries the sign and averaging
    const double scale = -1.0 / (static_cast<double>(b) * nw);
    T* g = out.grad.ptr() + static_cast<std::size_t>(bi) * h * wd;
    corr_full_add(dA.data(), ho, wo, win, k, scale, g, wd);
    // terms entering through C = E_w[xhat^2] and E = E_w[xhat*x]
    std::vector<double> tmp(static_cast<std::size_t>(h) * wd, 0.0);
    corr_full_add(dC.data(), ho, wo, win, k, scale, tmp.data(), wd);
    for (std::size_t i = 0; i < tmp.size(); ++i)
      g[i] += static_cast<T>(2.0 * tmp[i] * ph[i]);
    std::fill(tmp.begin(), tmp.end(), 0.0);
    corr_full_add(dE.data(), ho, wo, win, k, scale, tmp.data(), wd);
    for (std::size_t i = 0; i < tmp.size(); ++i)
      g[i] += static_cast<T>(tmp[i] * px[i]);
  }
  out.value = 1.0 - mssim_acc / b;
  return out;
}

// ---------------------------------------------------------------------------
// feature extractor

template <typename T>
std::vector<std::array<int, 2>> FeatureExtractorT<T>::plan(int tap) {
  require(tap >= 1 && tap <= 4, ErrorCode::precondition,
          "tap must be in 1..4");
  std::vector<std::array<int, 2>> shapes;  // {cout, cin}
  int cin = 3;
  for (int blk = 0; blk < tap; ++blk) {
    for (int i = 0; i < kBlockConvs[blk]; ++i) {
      shapes.push_back({kBlockWidth[blk], cin});
      cin = kBlockWidth[blk];
    }
  }
  return shapes;
}

template <typename T>
void FeatureExtractorT<T>::validate() const {
  require(tap >= 1 && tap <= 4, ErrorCode::precondition, "tap must be 1..4");
  require(!pooling_removed || tap == 4, ErrorCode::precondition,
          "pooling_removed requires tap 4");
  auto shapes = plan(tap);
  require(convs.size() == shapes.size(), ErrorCode::precondition,
          "extractor layer count mismatch");
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& w = convs[i].w;
    bool ok = w.shape.size() == 4 && w.dim(0) == shapes[i][0] &&
              w.dim(1) == shapes[i][1] && w.dim(2) == 3 && w.dim(3) == 3 &&
              convs[i].b.size() == static_cast<std::size_t>(shapes[i][0]);
    require(ok, ErrorCode::precondition,
            "extractor conv " + std::to_string(i) + " has wrong shape");
  }
}

template <typename T>
TensorT<T> FeatureExtractorT<T>::forward(const TensorT<T>& x,
                                         Cache* cache) const {
  require(x.shape.size() == 4 && x.dim(1) == 1, ErrorCode::precondition,
          "extractor expects (B,1,H,W)");
  const int b = x.dim(0), h = x.dim(2), wd = x.dim(3);
  // gray -> 3 channels, then per-channel standardization
  TensorT<T> pre({b, 3, h, wd});
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  for (int bi = 0; bi < b; ++bi) {
    const T* src = x.ptr() + bi * hw;
    for (int c = 0; c < 3; ++c) {
      T* dst = pre.ptr() + (static_cast<std::size_t>(bi) * 3 + c) * hw;
      T mu = static_cast<T>(input_mean[c]);
      T inv = static_cast<T>(1.0 / input_std[c]);
      for (std::size_t i = 0; i < hw; ++i) dst[i] = (src[i] - mu) * inv;
    }
  }
  if (cache) {
    cache->pre = pre;
    cache->conv_in.clear();
    cache->relu_out.clear();
    cache->pools.clear();
  }

  TensorT<T> cur = std::move(pre);
  for (std::size_t li = 0; li < convs.size(); ++li) {
    if (cache) cache->conv_in.push_back(cur);
    TensorT<T> a = nn::conv2d_forward(cur, convs[li].w, convs[li].b, 1, 1);
    cur = nn::relu_forward(a);
    if (cache) cache->relu_out.push_back(cur);
    bool pool_here = false;
    for (int pa : pool_after) pool_here |= pa == static_cast<int>(li);
    if (pool_here) {
      nn::PoolCache<T> pc;
      cur = nn::maxpool2_forward(cur, pc);
      if (cache) cache->pools.push_back(std::move(pc));
    }
  }
  return cur;
}

template <typename T>
TensorT<T> FeatureExtractorT<T>::backward_input(const TensorT<T>& grad_feat,
                                                const Cache& cache) const {
  TensorT<T> g = grad_feat;
  int pool_i = static_cast<int>(cache.pools.size()) - 1;
  for (int li = static_cast<int>(convs.size()) - 1; li >= 0; --li) {
    bool pool_here = false;
    for (int pa : pool_after) pool_here |= pa == li;
    if (pool_here) {
      g = nn::maxpool2_backward(g, cache.pools[pool_i]);
      --pool_i;
    }
    g = nn::relu_backward(g, cache.relu_out[li]);
    auto cg = nn::conv2d_backward(g, cache.conv_in[li], convs[li].w, 1, 1,
                                  true);
    g = std::move(cg.x);  // extractor weights stay frozen
  }
  // undo standardization and channel replication
  const int b = g.dim(0), h = g.dim(2), wd = g.dim(3);
  const std::size_t hw = static_cast<std::size_t>(h) * wd;
  TensorT<T> gx({b, 1, h, wd});
  for (int bi = 0; bi < b; ++bi) {
    T* dst = gx.ptr() + bi * hw;
    for (int c = 0; c < 3; ++c) {
      const T* src = g.ptr() + (static_cast<std::size_t>(bi) * 3 + c) * hw;
      T inv = static_cast<T>(1.0 / input_std[c]);
      for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i] * inv;
    }
  }
  return gx;
}

template <typename T>
FeatureExtractorT<T> make_random_extractor(int tap, bool pooling_removed,
                                           uint64_t seed) {
  FeatureExtractorT<T> f;
  f.tap = tap;
  f.pooling_removed = pooling_removed;
  auto shapes = FeatureExtractorT<T>::plan(tap);
  int li = 0;
  for (const auto& s : shapes) {
    typename FeatureExtractorT<T>::ConvW cw;
    // He-style scale keeps activations in range through the stack
    T scale = static_cast<T>(std::sqrt(2.0 / (9.0 * s[1])));
    cw.w = TensorT<T>::randn({s[0], s[1], 3, 3}, scale,
                             derive_seed(seed, "ext", li));
    cw.b.assign(s[0], T(0));
    f.convs.push_back(std::move(cw));
    ++li;
  }
  if (!pooling_removed) {
    int idx = -1;
    for (int blk = 0; blk < tap - 1; ++blk) {
      idx += FeatureExtractorT<T>::kBlockConvs[blk];
      f.pool_after.push_back(idx);
    }
  }
  f.validate();
  return f;
}

FeatureExtractor load_extractor(const std::string& path, int tap,
                                bool pooling_removed) {
  require(tap >= 1 && tap <= 4, ErrorCode::precondition, "tap must be 1..4");
  require(!pooling_removed || tap == 4, ErrorCode::precondition,
          "pooling_removed requires tap 4");
  Checkpoint ckpt = load_checkpoint(path);
  require(ckpt.extra.value("arch", "") == "vgg16-prefix",
          ErrorCode::malformed_header, "checkpoint is not a vgg16 prefix");
  FeatureExtractor f;
  f.tap = tap;
  f.pooling_removed = pooling_removed;
  if (ckpt.extra.contains("input_mean")) {
    auto m = ckpt.extra["input_mean"].get<std::vector<double>>();
    auto s = ckpt.extra["input_std"].get<std::vector<double>>();
    require(m.size() == 3 && s.size() == 3, ErrorCode::malformed_header,
            "bad normalization constants");
    std::copy(m.begin(), m.end(), f.input_mean.begin());
    std::copy(s.begin(), s.end(), f.input_std.begin());
  }
  auto shapes = FeatureExtractor::plan(tap);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::string name = "conv" + std::to_string(i);
    const CkptTensor& wt = ckpt.find(name + ".w");
    const CkptTensor& bt = ckpt.find(name + ".b");
    std::vector<int> want{shapes[i][0], shapes[i][1], 3, 3};
    require(wt.shape == want, ErrorCode::precondition,
            "extractor layer " + name + " has mismatched shape");
    FeatureExtractor::ConvW cw;
    cw.w = nn::Tensor({want});
    cw.w.shape = want;
    cw.w.data = wt.data;
    cw.b = bt.data;
    f.convs.push_back(std::move(cw));
  }
  if (!pooling_removed) {
    int idx = -1;
    for (int blk = 0; blk < tap - 1; ++blk) {
      idx += FeatureExtractor::kBlockConvs[blk];
      f.pool_after.push_back(idx);
    }
  }
  f.validate();
  return f;
}

void save_extractor(const std::string& path, const FeatureExtractor& f) {
  Checkpoint ckpt;
  ckpt.extra = {{"arch", "vgg16-prefix"},
                {"input_mean", std::vector<double>(f.input_mean.begin(),
                                                   f.input_mean.end())},
                {"input_std", std::vector<double>(f.input_std.begin(),
                                                  f.input_std.end())}};
  for (std::size_t i = 0; i < f.convs.size(); ++i) {
    std::string name = "conv" + std::to_string(i);
    ckpt.tensors.push_back({name + ".w", f.convs[i].w.shape,
                            f.convs[i].w.data});
    ckpt.tensors.push_back(
        {name + ".b", {static_cast<int>(f.convs[i].b.size())},
         f.convs[i].b});
  }
  save_checkpoint(path, ckpt);
}

template <typename T>
LossValue<T> perceptual_loss(const TensorT<T>& xhat, const TensorT<T>& x,
                             const FeatureExtractorT<T>& f) {
  require(xhat.shape == x.shape, ErrorCode::precondition,
          "perceptual loss shape mismatch");
  typename FeatureExtractorT<T>::Cache cache;
  TensorT<T> fh = f.forward(xhat, &cache);
  TensorT<T> fx = f.forward(x, nullptr);  // detached target branch

  const int b = fh.dim(0);
  const std::size_t per = fh.data.size() / b;  // c'*h'*w'
  TensorT<T> gfeat(fh.shape);
  double acc = 0;
  for (std::size_t i = 0; i < fh.data.size(); ++i) {
    double d = static_cast<double>(fh.data[i]) - fx.data[i];
    acc += d * d;
    gfeat.data[i] =
        static_cast<T>(2.0 * d / (static_cast<double>(per) * b));
  }
  LossValue<T> out;
  out.value = acc / (static_cast<double>(per) * b);
  out.grad = f.backward_input(gfeat, cache);
  return out;
}

LossValue<float> compute_loss(const nn::Tensor& xhat, const nn::Tensor& x,
                              const LossSpec& spec) {
  switch (spec.kind) {
    case LossKind::mse: return mse_loss(xhat, x);
    case LossKind::mae: return mae_loss(xhat, x);
    case LossKind::ssim: return ssim_loss(xhat, x, spec.ssim);
    default: break;
  }
  require(spec.extractor != nullptr, ErrorCode::precondition,
          "perceptual loss needs a loaded extractor");
  require(spec.extractor->tap == perceptual_tap(spec.kind),
          ErrorCode::precondition, "extractor tap does not match loss");
  return perceptual_loss(xhat, x, *spec.extractor);
}

// explicit instantiations: float for the training path, double for the
// finite-difference oracles
template LossValue<float> mse_loss<float>(const TensorT<float>&,
                                          const TensorT<float>&);
template LossValue<double> mse_loss<double>(const TensorT<double>&,
                                            const TensorT<double>&);
template LossValue<float> mae_loss<float>(const TensorT<float>&,
                                          const TensorT<float>&);
template LossValue<double> mae_loss<double>(const TensorT<double>&,
                                            const TensorT<double>&);
template LossValue<float> ssim_loss<float>(const TensorT<float>&,
                                           const TensorT<float>&,
                                           const SsimParams&);
template LossValue<double> ssim_loss<double>(const TensorT<double>&,
                                             const TensorT<double>&,
                                             const SsimParams&);
template class FeatureExtractorT<float>;
template class FeatureExtractorT<double>;
template FeatureExtractorT<float> make_random_extractor<float>(int, bool,
                                                               uint64_t);
template FeatureExtractorT<double> make_random_extractor<double>(int, bool,
                                                                 uint64_t);
template LossValue<float> perceptual_loss<float>(const TensorT<float>&,
                                                 const TensorT<float>&,
                                                 const FeatureExtractorT<float>&);
template LossValue<double> perceptual_loss<double>(
    const TensorT<double>&, const TensorT<double>&,
    const FeatureExtractorT<double>&);

}  // namespace ldmr
