#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "ldmr/common.hpp"
#include "ldmr/rng.hpp"

namespace ldmr::nn {

template <typename T>
struct TensorT {
  std::vector<int> shape;  // (batch, channels, height, width) or lower rank
  std::vector<T> data;
  std::vector<T> grad;  // empty or data.size()
  bool requires_grad = false;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel(), T(0));
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  void ensure_grad() {
    requires_grad = true;
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT randn(std::vector<int> s, T stddev, uint64_t seed) {
    TensorT t(std::move(s));
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = static_cast<T>(stddev * counter_normal(seed, i));
    return t;
  }

  void check() const {
    require(data.size() == static_cast<std::size_t>(numel()),
            ErrorCode::invariant_violation, "tensor data/shape mismatch");
    require(grad.empty() || grad.size() == data.size(),
            ErrorCode::invariant_violation, "tensor grad/shape mismatch");
  }
};

using Tensor = TensorT<float>;

}  // namespace ldmr::nn
