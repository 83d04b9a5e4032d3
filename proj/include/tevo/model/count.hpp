#pragma once

#include <cstdint>

#include "tevo/model/config.hpp"

namespace tevo {

// Closed-form trainable-parameter accounting. The registry of a built model
// must match these numbers exactly; tests assert that for every variant.
struct ParamCountBreakdown {
  std::int64_t embedding = 0;
  std::int64_t encoder = 0;
  std::int64_t decoder = 0;
  std::int64_t head = 0;
  std::int64_t total() const { return embedding + encoder + decoder + head; }
};

namespace detail {

inline std::int64_t ff_param_count(const ModelConfig& c) {
  if (c.ff_variant == FFVariant::full) return 2 * c.d * c.d_ff + c.d_ff + c.d;
  return 2 * std::min(c.d, c.d_ff) + c.d_ff + c.d;
}

inline std::int64_t opset_param_count(const ModelConfig& c) {
  return 2 * c.d * (c.d + c.d_prime) + 2 * c.d_prime * (c.d + c.d_prime);
}

}  // namespace detail

inline ParamCountBreakdown count_params(const ModelConfig& config) {
  const ModelConfig c = config.resolved();
  const std::int64_t norm = 2 * c.d;
  const std::int64_t ff = detail::ff_param_count(c);
  const std::int64_t opset = detail::opset_param_count(c);
  ParamCountBreakdown out;
  out.embedding = c.vocab_size * c.d;
  const std::int64_t enc_depth = c.d * c.d + c.d_prime + ff + 2 * norm;
  out.encoder = c.num_blocks * (opset + c.depth_per_block * enc_depth);
  if (c.architecture == Architecture::encoder_decoder) {
    const std::int64_t dec_depth =
        2 * c.d * c.d + 2 * c.d_prime + ff + 3 * norm;
    out.decoder = c.num_blocks * (2 * opset + c.depth_per_block * dec_depth);
  } else {
    out.head = norm + c.d * c.num_classes + c.num_classes;
  }
  return out;
}

// Reference count for an ordinary transformer of the same total depth,
// width and feed-forward size: per layer Q/K/V/O projections plus the dense
// feed-forward, post-norms after each residual, shared tied embeddings.
inline std::int64_t baseline_equivalent_params(const ModelConfig& config) {
  ModelConfig c = config.resolved();
  const std::int64_t norm = 2 * c.d;
  const std::int64_t ff = 2 * c.d * c.d_ff + c.d_ff + c.d;
  const std::int64_t depth = c.total_depth();
  std::int64_t total = c.vocab_size * c.d;
  total += depth * (4 * c.d * c.d + ff + 2 * norm);  // encoder layers
  if (c.architecture == Architecture::encoder_decoder) {
    total += depth * (8 * c.d * c.d + ff + 3 * norm);  // decoder layers
  } else {
    total += norm + c.d * c.num_classes + c.num_classes;
  }
  return total;
}

// Attention-only parameter mass of one encoder stack, used to assert the
// depth-linear saving against the baseline's per-layer projections.
inline std::int64_t attention_path_params(const ModelConfig& config) {
  const ModelConfig c = config.resolved();
  return c.num_blocks * detail::opset_param_count(c) +
         c.total_depth() * (c.d * c.d + c.d_prime);
}

inline std::int64_t baseline_attention_path_params(const ModelConfig& config) {
  const ModelConfig c = config.resolved();
  return c.total_depth() * 4 * c.d * c.d;
}

}  // namespace tevo
