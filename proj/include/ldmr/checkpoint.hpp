#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ldmr {

// Weight container: magic line, u64 header length, JSON header (tensor names,
// shapes, dtype, architecture extras), then a little-endian float32 payload.
struct CkptTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json extra;  // architecture tag, hyperparameters, normalization
  std::vector<CkptTensor> tensors;

  const CkptTensor& find(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ldmr
