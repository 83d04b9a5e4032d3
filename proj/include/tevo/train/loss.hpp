#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tevo/core/ops.hpp"
#include "tevo/core/tensor.hpp"

namespace tevo {

template <typename S>
struct LossResult {
  Tensor<S> loss;        // scalar
  double accuracy = 0;   // argmax accuracy over weighted positions
  std::int64_t count = 0;  // positions contributing to the mean
};

// Cross-entropy against the smoothed distribution (1-eps on the target,
// eps/(V-1) elsewhere), averaged over positions with nonzero weight.
template <typename S>
LossResult<S> label_smoothed_ce(const Tensor<S>& logits,
                                const std::vector<std::int32_t>& targets,
                                const std::vector<S>& weights, double eps) {
  if (eps < 0.0 || eps >= 1.0) {
    throw std::invalid_argument("label_smoothed_ce: eps must be in [0, 1)");
  }
  const Shape& sh = logits.shape();
  const std::int64_t vocab = sh[sh.size() - 1];
  const std::int64_t rows = logits.size() / vocab;
  if (static_cast<std::int64_t>(targets.size()) != rows ||
      static_cast<std::int64_t>(weights.size()) != rows) {
    throw std::invalid_argument("label_smoothed_ce: target/weight rows mismatch");
  }
  double wsum = 0.0;
  for (S w : weights) wsum += static_cast<double>(w);
  if (wsum <= 0.0) {
    throw std::invalid_argument("label_smoothed_ce: batch has no unweighted positions");
  }
  const double off = vocab > 1 ? eps / static_cast<double>(vocab - 1) : 0.0;
  const double on = 1.0 - eps;
  // loss = sum(logp * M) with M = -w_n * q_v / wsum, so the smoothing and
  // the mean over positions collapse into one constant matrix.
  std::vector<S> mvals(static_cast<std::size_t>(rows * vocab));
  for (std::int64_t n = 0; n < rows; ++n) {
    const double w = static_cast<double>(weights[static_cast<std::size_t>(n)]);
    const std::int32_t tgt = targets[static_cast<std::size_t>(n)];
    if (tgt < 0 || tgt >= vocab) {
      throw std::invalid_argument("label_smoothed_ce: target id outside vocab");
    }
    for (std::int64_t v = 0; v < vocab; ++v) {
      const double q = v == tgt ? on : off;
      mvals[static_cast<std::size_t>(n * vocab + v)] =
          static_cast<S>(-w * q / wsum);
    }
  }
  Tensor<S> flat = reshape(logits, {rows, vocab});
  Tensor<S> logp = log_softmax_rows(flat);
  Tensor<S> m = Tensor<S>::from({rows, vocab}, std::move(mvals));
  LossResult<S> out;
  out.loss = sum_all(mul(logp, m));

  const std::vector<std::int64_t> pred = argmax_rows(flat);
  std::int64_t hit = 0, tot = 0;
  for (std::int64_t n = 0; n < rows; ++n) {
    if (weights[static_cast<std::size_t>(n)] <= S(0)) continue;
    ++tot;
    if (pred[static_cast<std::size_t>(n)] == targets[static_cast<std::size_t>(n)]) ++hit;
  }
  out.count = tot;
  out.accuracy = tot > 0 ? static_cast<double>(hit) / static_cast<double>(tot) : 0.0;
  return out;
}

}  // namespace tevo
