#pragma once

#include <cmath>
#include <cstdint>

#include "tevo/attention/evolution.hpp"
#include "tevo/core/mults.hpp"
#include "tevo/core/ops.hpp"

namespace tevo {

// Ordinary dot-product attention layer (the reference path). Used for cost
// comparisons and as the parameter-count baseline; shares head-splitting
// and masking with the evolved path.
template <typename S>
struct BaselineAttentionParams {
  std::int64_t d = 0, heads = 0;
  Tensor<S> w_q, w_k, w_v, w_o;  // all [d, d]

  static BaselineAttentionParams make(std::int64_t d, std::int64_t heads, Rng& rng) {
    if (d % heads != 0) {
      throw std::invalid_argument("baseline attention: d not divisible by heads");
    }
    BaselineAttentionParams p;
    p.d = d;
    p.heads = heads;
    const double lim = std::sqrt(6.0 / static_cast<double>(2 * d));
    p.w_q = Tensor<S>::uniform({d, d}, rng, -lim, lim);
    p.w_k = Tensor<S>::uniform({d, d}, rng, -lim, lim);
    p.w_v = Tensor<S>::uniform({d, d}, rng, -lim, lim);
    p.w_o = Tensor<S>::uniform({d, d}, rng, -lim, lim);
    return p;
  }
};

// Scaled pre-softmax logits (X W_q)(X W_k)^T / sqrt(d/m), per head.
template <typename S>
Tensor<S> baseline_attention_logits(const Tensor<S>& x_in,
                                    const BaselineAttentionParams<S>& p) {
  const Tensor<S> x = detail::lift_batch(x_in, "baseline_attention_logits");
  Tensor<S> q = matmul(x, p.w_q);
  mults::mark("q_proj");
  Tensor<S> k = matmul(x, p.w_k);
  mults::mark("k_proj");
  Tensor<S> logits =
      matmul(split_heads(q, p.heads), transpose_last(split_heads(k, p.heads)));
  mults::mark("pairwise");
  logits = scale(logits,
                 1.0 / std::sqrt(static_cast<double>(p.d) / static_cast<double>(p.heads)));
  mults::mark("scale");
  return logits;
}

// Full layer: softmax, value projection, head concat, output projection,
// residual, optional post-layer-norm.
template <typename S>
Tensor<S> baseline_attention_layer(const Tensor<S>& x_in,
                                   const BaselineAttentionParams<S>& p,
                                   const Tensor<S>* mask = nullptr,
                                   const Tensor<S>* norm_gain = nullptr,
                                   const Tensor<S>* norm_shift = nullptr) {
  const Tensor<S> x = detail::lift_batch(x_in, "baseline_attention_layer");
  Tensor<S> logits = baseline_attention_logits(x, p);
  if (mask != nullptr) logits = add(logits, *mask);
  Tensor<S> w = softmax_rows(logits);
  Tensor<S> v = split_heads(matmul(x, p.w_v), p.heads);
  Tensor<S> out = add(matmul(merge_heads(matmul(w, v)), p.w_o), x);
  if (norm_gain != nullptr && norm_shift != nullptr) {
    out = layer_norm(out, *norm_gain, *norm_shift);
  }
  return out;
}

// Multiplications for one baseline layer's logit construction. The pairwise
// product and its normalization form the total; projections are reported
// separately, mirroring the evolved accounting.
struct BaselineLogitCost {
  std::uint64_t q_proj = 0, k_proj = 0, pairwise = 0, scale = 0;
  std::uint64_t total() const { return pairwise + scale; }
};

inline BaselineLogitCost baseline_logit_cost_closed_form(std::int64_t n,
                                                         std::int64_t d,
                                                         std::int64_t m) {
  BaselineLogitCost c;
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t ud = static_cast<std::uint64_t>(d);
  const std::uint64_t um = static_cast<std::uint64_t>(m);
  c.q_proj = un * ud * ud;
  c.k_proj = un * ud * ud;
  c.pairwise = un * un * ud;
  c.scale = um * un * un;
  return c;
}

}  // namespace tevo
