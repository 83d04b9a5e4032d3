#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "tevo/core/ops.hpp"
#include "tevo/core/rng.hpp"
#include "tevo/core/tensor.hpp"
#include "tevo/depth/rotation.hpp"

namespace tevo {

// Fully trainable position-wise feed-forward (the dense regime).
template <typename S>
struct FullFFParams {
  std::int64_t d = 0, d_ff = 0;
  Tensor<S> w1;  // [d, d_ff]
  Tensor<S> b1;  // [d_ff]
  Tensor<S> w2;  // [d_ff, d]
  Tensor<S> b2;  // [d]

  static FullFFParams make(std::int64_t d, std::int64_t d_ff, Rng& rng) {
    FullFFParams p;
    p.d = d;
    p.d_ff = d_ff;
    const double lim = std::sqrt(6.0 / static_cast<double>(d + d_ff));
    p.w1 = Tensor<S>::uniform({d, d_ff}, rng, -lim, lim);
    p.b1 = Tensor<S>::zeros({d_ff});
    p.w2 = Tensor<S>::uniform({d_ff, d}, rng, -lim, lim);
    p.b2 = Tensor<S>::zeros({d});
    return p;
  }

  std::int64_t trainable_count() const { return 2 * d * d_ff + d_ff + d; }
};

// relu(H W1 + B1) W2 + B2 + H, then optional post-layer-norm.
template <typename S>
Tensor<S> full_ff_forward(const Tensor<S>& h, const FullFFParams<S>& p,
                          const Tensor<S>* norm_gain = nullptr,
                          const Tensor<S>* norm_shift = nullptr,
                          double dropout_rate = 0.0, Rng* rng = nullptr) {
  Tensor<S> a = relu(add(matmul(h, p.w1), p.b1));
  if (dropout_rate > 0.0 && rng != nullptr) a = dropout(a, dropout_rate, *rng);
  Tensor<S> out = add(add(matmul(a, p.w2), p.b2), h);
  if (norm_gain != nullptr && norm_shift != nullptr) {
    out = layer_norm(out, *norm_gain, *norm_shift);
  }
  return out;
}

// Frozen-rotation regime: each projection is U Sigma V with frozen
// sine-cosine factors and a trainable diagonal, applied per token row, so
// the d -> d_ff map is ((H u1) . sigma1) v1 and the return map mirrors it.
template <typename S>
struct RandomFFParams {
  RotationFactors<S> rot;

  static RandomFFParams make(std::int64_t d, std::int64_t d_ff, std::int64_t l,
                             std::int64_t total_depth, std::uint64_t seed) {
    return RandomFFParams{RotationFactors<S>::make(d, d_ff, l, total_depth, seed)};
  }

  std::int64_t trainable_count() const { return rot.trainable_count(); }
};

template <typename S>
Tensor<S> random_ff_forward(const Tensor<S>& h, const RandomFFParams<S>& p,
                            const Tensor<S>* norm_gain = nullptr,
                            const Tensor<S>* norm_shift = nullptr,
                            double dropout_rate = 0.0, Rng* rng = nullptr) {
  const RotationFactors<S>& r = p.rot;
  Tensor<S> up = matmul(mul(matmul(h, r.u1), r.sigma1), r.v1);  // [.., d_ff]
  Tensor<S> a = relu(add(up, r.b1));
  if (dropout_rate > 0.0 && rng != nullptr) a = dropout(a, dropout_rate, *rng);
  Tensor<S> down = matmul(mul(matmul(a, r.u2), r.sigma2), r.v2);  // [.., d]
  Tensor<S> out = add(add(down, r.b2), h);
  if (norm_gain != nullptr && norm_shift != nullptr) {
    out = layer_norm(out, *norm_gain, *norm_shift);
  }
  return out;
}

template <typename S>
using FeedForward = std::variant<FullFFParams<S>, RandomFFParams<S>>;

template <typename S>
Tensor<S> feed_forward_layer(const Tensor<S>& h, const FeedForward<S>& ff,
                             const Tensor<S>* norm_gain = nullptr,
                             const Tensor<S>* norm_shift = nullptr,
                             double dropout_rate = 0.0, Rng* rng = nullptr) {
  if (std::holds_alternative<FullFFParams<S>>(ff)) {
    return full_ff_forward(h, std::get<FullFFParams<S>>(ff), norm_gain, norm_shift,
                           dropout_rate, rng);
  }
  return random_ff_forward(h, std::get<RandomFFParams<S>>(ff), norm_gain,
                           norm_shift, dropout_rate, rng);
}

}  // namespace tevo
