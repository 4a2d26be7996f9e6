#pragma once

#include <string>
#include <vector>

#include "ldmr/hresnet.hpp"
#include "ldmr/image.hpp"
#include "ldmr/losses.hpp"

namespace ldmr {

struct TrainConfig {
  double lr0 = 1e-4;
  int halve_every = 10;  // epochs between learning-rate halvings
  int epochs = 60;
  int batch = 256;
  int micro_batch = 32;  // gradient-accumulation slice (memory bound)
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  double val_fraction = 0.1;
  LossSpec loss;
  std::string init_from;  // warm-start checkpoint (PL training)
  bool verbose = false;

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);  // 1-based

struct AdamState {
  std::vector<nn::Tensor> m, v;  // parallel to the parameter list
  int64_t t = 0;
};

AdamState make_adam_state(HResNet& net);
void adam_step(std::vector<HResNet::ParamRef>& params, AdamState& state,
               double lr, double beta1, double beta2, double eps);

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_mse = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double identity_val_mse = 0;  // MSE of the raw LD input on the val split
};

TrainResult train(HResNet& net, const std::vector<PatchPair>& patches,
                  const TrainConfig& cfg);

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history);

// In-place Fisher-Yates driven by the counter RNG; identical on every
// platform and thread count.
void deterministic_shuffle(std::vector<int>& idx, uint64_t seed);

}  // namespace ldmr
