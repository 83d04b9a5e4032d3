#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace tevo {

struct TrainConfig {
  double lr_max = 0.5;
  std::int64_t warmup_steps = 1000;
  std::int64_t batch_size = 32;
  std::int64_t total_steps = 5000;
  double label_smoothing = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  std::uint64_t seed = 1;
  std::int64_t eval_every = 200;
  std::int64_t checkpoint_every = 1000;
  // Optional: stop once the rolling teacher-forced accuracy reaches this
  // level (0 disables). The step budget above still caps the run.
  double early_stop_accuracy = 0.0;
  // ListOps generator depth bound; ignored by the seq2seq tasks.
  std::int64_t listops_max_depth = 3;

  void validate() const {
    if (warmup_steps < 1) throw std::invalid_argument("train config: warmup_steps >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw std::invalid_argument("train config: label_smoothing in [0, 1)");
    }
    if (batch_size < 1 || total_steps < 1) {
      throw std::invalid_argument("train config: batch_size and total_steps >= 1");
    }
  }
};

// Inverse-sqrt schedule with linear warmup:
//   lr(step) = lr_max / sqrt(d) * min(step^-1/2, warmup^-3/2 * step),
// peaking exactly at step == warmup.
inline double lr_at(std::int64_t step, std::int64_t d, double lr_max,
                    std::int64_t warmup_steps) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return lr_max / std::sqrt(static_cast<double>(d)) *
         std::min(1.0 / std::sqrt(s), std::pow(w, -1.5) * s);
}

}  // namespace tevo
