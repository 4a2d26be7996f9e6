#include "ldmr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ldmr/rng.hpp"

namespace ldmr {

using nn::Tensor;

void TrainConfig::validate() const {
  require(lr0 > 0 && epochs > 0 && batch > 0 && micro_batch > 0 &&
              halve_every > 0,
          ErrorCode::precondition, "training hyperparameters must be positive");
  require(halve_every <= epochs, ErrorCode::precondition,
          "halve_every must not exceed epochs");
  require(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1,
          ErrorCode::precondition, "Adam betas must be in (0,1)");
  require(val_fraction >= 0 && val_fraction < 1, ErrorCode::precondition,
          "val_fraction must be in [0,1)");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  int halvings = (epoch - 1) / cfg.halve_every;
  return cfg.lr0 * std::pow(0.5, halvings);
}

AdamState make_adam_state(HResNet& net) {
  AdamState st;
  for (auto& p : net.parameters()) {
    st.m.push_back(Tensor::zeros(p.tensor->shape));
    st.v.push_back(Tensor::zeros(p.tensor->shape));
  }
  return st;
}

void adam_step(std::vector<HResNet::ParamRef>& params, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  require(params.size() == state.m.size(), ErrorCode::precondition,
          "Adam state does not match parameter list");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi].tensor;
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      double g = p.grad[i];
      double mi = beta1 * m.data[i] + (1.0 - beta1) * g;
      double vi = beta2 * v.data[i] + (1.0 - beta2) * g * g;
      m.data[i] = static_cast<float>(mi);
      v.data[i] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      p.data[i] =
          static_cast<float>(p.data[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

void deterministic_shuffle(std::vector<int>& idx, uint64_t seed) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    uint64_t j = counter_bits(seed, i) % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

namespace {

int patch_side(const PatchPair& p) {
  auto k = static_cast<int>(std::lround(std::sqrt(double(p.ld.size()))));
  require(static_cast<std::size_t>(k) * k == p.ld.size(),
          ErrorCode::precondition, "patch is not square");
  return k;
}

void fill_batch(const std::vector<PatchPair>& patches,
                const std::vector<int>& order, std::size_t lo, std::size_t hi,
                int k, Tensor& in, Tensor& target) {
  const int n = static_cast<int>(hi - lo);
  in = Tensor({n, 1, k, k});
  target = Tensor({n, 1, k, k});
  for (int i = 0; i < n; ++i) {
    const PatchPair& p = patches[order[lo + i]];
    std::copy(p.ld.begin(), p.ld.end(),
              in.ptr() + static_cast<std::size_t>(i) * k * k);
    std::copy(p.fd.begin(), p.fd.end(),
              target.ptr() + static_cast<std::size_t>(i) * k * k);
  }
}

double eval_mse(HResNet& net, const std::vector<PatchPair>& patches,
                const std::vector<int>& idx, int k, int micro) {
  if (idx.empty()) return 0.0;
  double acc = 0;
  std::size_t done = 0;
  while (done < idx.size()) {
    std::size_t take = std::min<std::size_t>(micro, idx.size() - done);
    Tensor in, target;
    fill_batch(patches, idx, done, done + take, k, in, target);
    Tensor out = net.forward(in, false);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      double d = static_cast<double>(out.data[i]) - target.data[i];
      acc += d * d;
    }
    done += take;
  }
  return acc / (static_cast<double>(idx.size()) * k * k);
}

}  // namespace

TrainResult train(HResNet& net, const std::vector<PatchPair>& patches,
                  const TrainConfig& cfg) {
  cfg.validate();
  require(!patches.empty(), ErrorCode::precondition, "no training patches");
  const int k = patch_side(patches.front());
  for (const auto& p : patches)
    require(p.ld.size() == patches.front().ld.size() &&
                p.fd.size() == p.ld.size(),
            ErrorCode::precondition, "patch sizes differ");

  if (!cfg.init_from.empty()) net = HResNet::load(cfg.init_from);

  // deterministic validation split
  std::vector<int> all(patches.size());
  std::iota(all.begin(), all.end(), 0);
  deterministic_shuffle(all, derive_seed(cfg.seed, "split"));
  const auto n_val = static_cast<std::size_t>(
      std::floor(cfg.val_fraction * static_cast<double>(patches.size())));
  std::vector<int> val_idx(all.begin(), all.begin() + n_val);
  std::vector<int> train_idx(all.begin() + n_val, all.end());
  require(!train_idx.empty(), ErrorCode::precondition,
          "validation split consumed every patch");

  auto params = net.parameters();
  AdamState adam = make_adam_state(net);

  TrainResult result;
  {
    double acc = 0;
    for (int i : val_idx)
      for (std::size_t j = 0; j < patches[i].ld.size(); ++j) {
        double d =
            static_cast<double>(patches[i].ld[j]) - patches[i].fd[j];
        acc += d * d;
      }
    result.identity_val_mse =
        val_idx.empty() ? 0.0
                        : acc / (static_cast<double>(val_idx.size()) * k * k);
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    deterministic_shuffle(train_idx, derive_seed(cfg.seed, "epoch", epoch));

    double loss_acc = 0;
    std::size_t seen = 0;
    std::size_t pos = 0;
    int batch_no = 0;
    while (pos < train_idx.size()) {
      std::size_t take =
          std::min<std::size_t>(cfg.batch, train_idx.size() - pos);
      if (take == 1) break;  // batch statistics undefined for one sample
      net.zero_grads();
      double batch_loss = 0;
      std::size_t mpos = 0;
      while (mpos < take) {
        std::size_t mtake = std::min<std::size_t>(cfg.micro_batch, take - mpos);
        if (take - (mpos + mtake) == 1) mtake += 1;  // avoid a size-1 slice
        Tensor in, target;
        fill_batch(patches, train_idx, pos + mpos, pos + mpos + mtake, k, in,
                   target);
        HResNet::Cache cache;
        Tensor out = net.forward(in, true, &cache);
        LossValue<float> lv = compute_loss(out, target, cfg.loss);
        const double wgt = static_cast<double>(mtake) / take;
        batch_loss += wgt * lv.value;
        for (auto& g : lv.grad.data) g = static_cast<float>(g * wgt);
        net.backward(lv.grad, cache);
        mpos += mtake;
      }
      if (!std::isfinite(batch_loss))
        fail(ErrorCode::numeric,
             "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                 std::to_string(batch_no));
      adam_step(params, adam, lr, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
      loss_acc += batch_loss * static_cast<double>(take);
      seen += take;
      pos += take;
      ++batch_no;
    }

    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_loss = seen ? loss_acc / static_cast<double>(seen) : 0.0;
    st.val_mse = eval_mse(net, patches, val_idx, k, cfg.micro_batch);
    result.history.push_back(st);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d lr %.3g train %.6g val %.6g\n", epoch,
                   lr, st.train_loss, st.val_mse);
  }
  return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochStats>& history) {
  std::ofstream f(path);
  require(f.good(), ErrorCode::io_failure, "cannot write " + path);
  f << "epoch,lr,train_loss,val_mse\n";
  char buf[160];
  for (const auto& st : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", st.epoch, st.lr,
                  st.train_loss, st.val_mse);
    f << buf;
  }
  require(f.good(), ErrorCode::io_failure, "write failed: " + path);
}

}  // namespace ldmr
