#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldmr {

enum class ErrorCode {
  io_failure,
  malformed_header,
  truncated_payload,
  invariant_violation,
  precondition,
  singular_fit,
  empty_mask,
  numeric,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

// Half-up rounding used everywhere a float value becomes a detector unit.
inline double round_half_up(double v) { return std::floor(v + 0.5); }

inline uint16_t quantize_u16(double v, double saturation) {
  double c = v < 0.0 ? 0.0 : (v > saturation ? saturation : v);
  return static_cast<uint16_t>(round_half_up(c));
}

// Pairwise tree summation; run-to-run identical and accurate for the long
// reductions in the metrics module.
template <typename T>
double pairwise_sum(const T* data, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(data[i]);
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

template <typename T>
double pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(v.data(), v.size());
}

}  // namespace ldmr
