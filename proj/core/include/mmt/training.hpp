// Decoupled-weight-decay Adam, cosine learning-rate schedule, and the
// alternating generator/discriminator training loop with checkpointed,
// bit-exact resume.
#pragma once

#include <string>
#include <vector>

#include "mmt/data.hpp"
#include "mmt/losses.hpp"
#include "mmt/model.hpp"

namespace mmt {

struct Checkpoint;

struct TrainConfig {
  int64_t epochs = 100;
  int64_t batch_size = 2;
  double lr_g = 5e-4;
  double lr_d = 1e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // global-norm gradient clip; <= 0 disables
  uint64_t seed = 0;
  ScenarioMode mode = ScenarioMode::Random;
  LossWeights weights;
  int64_t max_steps = 0;               // 0 = no cap
  int64_t log_every = 25;              // CSV rows (and held-out PSNR) cadence
  int64_t checkpoint_every_epochs = 1;

  void validate() const;
};

/// lr0 * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(int64_t step, int64_t total_steps, double lr0);

/// Adam with decoupled weight decay: beta = (0.9, 0.999), eps = 1e-8.
/// Moment buffers are keyed by registry order, which is deterministic.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One update over every parameter in the registry. A non-finite gradient
  /// aborts with the parameter's name.
  void step(ParamRegistry& params, double lr, double weight_decay);

  int64_t t() const { return t_; }
  /// Moment tensors named "<prefix>m.<param>" / "<prefix>v.<param>" for
  /// checkpointing; load restores them (and the step counter via aux).
  void save_state(const ParamRegistry& params, const std::string& prefix,
                  std::vector<std::pair<std::string, Tensor>>& out) const;
  void load_state(const ParamRegistry& params, const std::string& prefix, const Checkpoint& ckpt,
                  int64_t t);

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;  // parallel to registry order
  void ensure_buffers(const ParamRegistry& params);
};

/// Scales all gradients by clip/norm when the global norm exceeds clip.
/// Returns the pre-clip norm.
double clip_gradients(ParamRegistry& params, double clip);

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  int64_t steps = 0;
};

/// Trains on every (subject, slice) of the dataset. Writes <out_dir>/ckpt.mmtc
/// at epoch boundaries and on completion, and appends the metrics log
/// <out_dir>/train_log.csv with rows step,lr,L_s,L_r,L_adv,L_D,psnr_val,scenario.
/// resume_path restarts from a checkpoint bit-exactly (RNG and optimizer
/// state included).
TrainResult train(const std::vector<MultiContrastVolume>& dataset, MmtModel& model,
                  Discriminator& disc, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path = "");

}  // namespace mmt
