#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldmr/nnops.hpp"
#include "ldmr/tensor.hpp"

namespace ldmr {

struct NetworkSpec {
  int n_filters = 64;
  int kernel = 3;  // stride 1, zero-padding kernel/2
  int n_res_blocks = 4;
  int levels = 3;
  float bn_eps = 1e-5f;
  float bn_momentum = 0.1f;
  float init_std = 0.01f;  // conv weights ~ N(0, init_std^2)
};

// Residual restoration network. Level-1 skip adds the network input to the
// final conv output (the trunk learns the noise field); two level-2 skips
// reinject the conv0 features after block 2 and the first junction after
// block 4; every residual block carries its own level-3 skip.
class HResNet {
 public:
  struct ConvLayer {
    nn::Tensor w;  // (cout, cin, k, k)
    nn::Tensor b;  // (cout)
  };
  struct BnLayer {
    nn::Tensor gamma, beta;
    std::vector<float> running_mean, running_var;
  };
  struct Block {
    ConvLayer conv1, conv2;
    BnLayer bn1, bn2;
  };

  struct BlockCache {
    nn::Tensor in;
    nn::BnCache<float> bn1c, bn2c;
    nn::Tensor h1;   // relu after bn1
    nn::Tensor out;  // relu after the level-3 add
  };
  struct Cache {
    nn::Tensor x;
    nn::Tensor c0;
    std::vector<BlockCache> blocks;
    nn::Tensor j1, j2;  // level-2 junction outputs
  };

  HResNet() = default;
  HResNet(const NetworkSpec& spec, uint64_t init_seed);

  // x: (B,1,H,W) in [0,1]. train=true uses batch statistics and requires a
  // cache for the backward pass; eval mode is deterministic.
  nn::Tensor forward(const nn::Tensor& x, bool train, Cache* cache = nullptr);

  // Accumulates parameter gradients; returns the gradient wrt the input.
  nn::Tensor backward(const nn::Tensor& grad_out, const Cache& cache);

  struct ParamRef {
    std::string name;
    nn::Tensor* tensor;
  };
  std::vector<ParamRef> parameters();
  int64_t parameter_count() const;
  void zero_grads();

  void save(const std::string& path) const;
  static HResNet load(const std::string& path);

  const NetworkSpec& spec() const { return spec_; }
  ConvLayer& conv_final() { return conv_final_; }

 private:
  NetworkSpec spec_;
  ConvLayer conv0_, conv_final_;
  std::vector<Block> blocks_;
};

}  // namespace ldmr
