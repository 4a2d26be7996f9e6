#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "ldmr/nnops.hpp"
#include "ldmr/tensor.hpp"

namespace ldmr {

enum class LossKind { mse, mae, ssim, pl1, pl2, pl3, pl4 };

const char* loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);
inline bool is_perceptual(LossKind k) {
  return k == LossKind::pl1 || k == LossKind::pl2 || k == LossKind::pl3 ||
         k == LossKind::pl4;
}
int perceptual_tap(LossKind k);  // pl1..pl4 -> 1..4

struct SsimParams {
  int window = 11;
  double c1 = 1e-4;
  double c2 = 9e-4;
  double sigma = 1.5;  // gaussian window
};

template <typename T>
struct LossValue {
  double value = 0;
  nn::TensorT<T> grad;  // d value / d xhat
};

template <typename T>
LossValue<T> mse_loss(const nn::TensorT<T>& xhat, const nn::TensorT<T>& x);

template <typename T>
LossValue<T> mae_loss(const nn::TensorT<T>& xhat, const nn::TensorT<T>& x);

// Gaussian-window SSIM over the valid region (no padding); batch value is the
// mean of per-sample MSSIM; loss = 1 - MSSIM.
template <typename T>
LossValue<T> ssim_loss(const nn::TensorT<T>& xhat, const nn::TensorT<T>& x,
                       const SsimParams& p);

// VGG-16 prefix: (2,2,3,3) convs per block, widths (64,128,256,512), ReLU
// after each conv, 2x2 max pooling between blocks. Tap t exposes the feature
// map right before the t-th pooling. pooling_removed drops every pooling
// layer (tap 4 only). Frozen; gradients flow only into the probe image.
template <typename T>
class FeatureExtractorT {
 public:
  static constexpr std::array<int, 4> kBlockConvs{2, 2, 3, 3};
  static constexpr std::array<int, 4> kBlockWidth{64, 128, 256, 512};

  struct ConvW {
    nn::TensorT<T> w;
    std::vector<T> b;
  };

  int tap = 1;
  bool pooling_removed = false;
  std::array<double, 3> input_mean{0.485, 0.456, 0.406};
  std::array<double, 3> input_std{0.229, 0.224, 0.225};
  std::vector<ConvW> convs;      // in forward order
  std::vector<int> pool_after;   // conv index after which a pool sits

  struct Cache {
    nn::TensorT<T> pre;                     // standardized 3-channel input
    std::vector<nn::TensorT<T>> conv_in;    // input of each conv
    std::vector<nn::TensorT<T>> relu_out;   // output of each relu
    std::vector<nn::PoolCache<T>> pools;
  };

  // expected conv shapes for (tap, pooling_removed)
  static std::vector<std::array<int, 2>> plan(int tap);

  nn::TensorT<T> forward(const nn::TensorT<T>& x, Cache* cache) const;
  nn::TensorT<T> backward_input(const nn::TensorT<T>& grad_feat,
                                const Cache& cache) const;
  void validate() const;
};

using FeatureExtractor = FeatureExtractorT<float>;

FeatureExtractor load_extractor(const std::string& path, int tap,
                                bool pooling_removed);
void save_extractor(const std::string& path, const FeatureExtractor& f);

// Seeded random-weight extractor (testing and ablation; pretrained weights
// load through the same checkpoint container).
template <typename T>
FeatureExtractorT<T> make_random_extractor(int tap, bool pooling_removed,
                                           uint64_t seed);

// Feature-space MSE, normalized per sample by the feature volume; the target
// branch is detached.
template <typename T>
LossValue<T> perceptual_loss(const nn::TensorT<T>& xhat,
                             const nn::TensorT<T>& x,
                             const FeatureExtractorT<T>& f);

struct LossSpec {
  LossKind kind = LossKind::mse;
  SsimParams ssim;
  std::shared_ptr<const FeatureExtractor> extractor;  // pl* only
};

LossValue<float> compute_loss(const nn::Tensor& xhat, const nn::Tensor& x,
                              const LossSpec& spec);

}  // namespace ldmr
