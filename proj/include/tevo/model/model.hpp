#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/attention/evolution.hpp"
#include "tevo/core/ops.hpp"
#include "tevo/core/rng.hpp"
#include "tevo/core/tensor.hpp"
#include "tevo/depth/depth_code.hpp"
#include "tevo/ff/feed_forward.hpp"
#include "tevo/model/config.hpp"
#include "tevo/model/registry.hpp"

namespace tevo {

// Reserved token ids shared by every task vocabulary.
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kBosId = 1;
inline constexpr std::int32_t kEosId = 2;

// A padded integer token matrix with per-sample lengths.
struct TokenBatch {
  std::int64_t batch = 0;
  std::int64_t len = 0;
  std::vector<std::int32_t> ids;      // [batch * len], row-major, pad = 0
  std::vector<std::int32_t> lengths;  // per sample, <= len

  static TokenBatch single(const std::vector<std::int32_t>& seq) {
    TokenBatch b;
    b.batch = 1;
    b.len = static_cast<std::int64_t>(seq.size());
    b.ids = seq;
    b.lengths = {static_cast<std::int32_t>(seq.size())};
    return b;
  }
};

template <typename S>
struct LayerNormParams {
  Tensor<S> gain, shift;
};

template <typename S>
struct EncoderBlock {
  AttentionParams<S> attn;
  DepthCode<S> code;
  std::vector<Tensor<S>> w_o;  // per depth [d, d]
  std::vector<LayerNormParams<S>> attn_norm, ff_norm;
  std::vector<FeedForward<S>> ff;
};

template <typename S>
struct DecoderBlock {
  AttentionParams<S> self_attn, cross_attn;
  DepthCode<S> code_dec, code_ed;
  std::vector<Tensor<S>> w_o_self, w_o_cross;
  std::vector<LayerNormParams<S>> self_norm, cross_norm, ff_norm;
  std::vector<FeedForward<S>> ff;
};

template <typename S>
struct ClassifierHead {
  LayerNormParams<S> norm;
  Tensor<S> w;  // [d, num_classes]
  Tensor<S> b;  // [num_classes]
};

template <typename S>
struct Model {
  ModelConfig cfg;  // resolved
  Tensor<S> embedding;  // [vocab, d]; also the tied output projection
  Tensor<S> positions;  // [max_len, d], fixed
  std::vector<EncoderBlock<S>> encoder;
  std::vector<DecoderBlock<S>> decoder;
  std::optional<ClassifierHead<S>> head;
  ParameterRegistry<S> registry;
  bool layer_norms_enabled = true;  // toggleable for identity tests
};

namespace detail {

template <typename S>
Tensor<S> xavier(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  const double fan_in = static_cast<double>(shape[0]);
  const double fan_out = static_cast<double>(shape[shape.size() - 1]);
  const double lim = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor<S>::uniform(std::move(shape), rng, -lim, lim);
}

template <typename S>
LayerNormParams<S> make_norm(ParameterRegistry<S>& reg, const std::string& prefix,
                             std::int64_t d) {
  LayerNormParams<S> n;
  n.gain = reg.add(prefix + ".gain", Tensor<S>::ones({d}));
  n.shift = reg.add(prefix + ".shift", Tensor<S>::zeros({d}));
  return n;
}

template <typename S>
AttentionParams<S> make_attention(ParameterRegistry<S>& reg, const std::string& prefix,
                                  const ModelConfig& c) {
  AttentionParams<S> p;
  p.d = c.d;
  p.d_prime = c.d_prime;
  p.heads = c.heads;
  if (c.d % c.heads != 0 || (c.d + c.d_prime) % c.heads != 0) {
    throw std::invalid_argument("model: head divisibility violated");
  }
  p.w_q = reg.add(prefix + ".w_q", xavier<S>({c.d, c.d + c.d_prime},
                                             mix_seed(c.seed, prefix + ".w_q")));
  p.w_k = reg.add(prefix + ".w_k", xavier<S>({c.d, c.d + c.d_prime},
                                             mix_seed(c.seed, prefix + ".w_k")));
  p.wt_q = reg.add(prefix + ".wt_q", xavier<S>({c.d_prime, c.d + c.d_prime},
                                               mix_seed(c.seed, prefix + ".wt_q")));
  p.wt_k = reg.add(prefix + ".wt_k", xavier<S>({c.d_prime, c.d + c.d_prime},
                                               mix_seed(c.seed, prefix + ".wt_k")));
  return p;
}

template <typename S>
DepthCode<S> make_code(ParameterRegistry<S>& reg, const std::string& prefix,
                       const ModelConfig& c) {
  DepthCode<S> code = DepthCode<S>::make(c.d_prime, c.depth_per_block);
  for (std::size_t l = 0; l < code.weights.size(); ++l) {
    code.weights[l] =
        reg.add(prefix + ".w" + std::to_string(l + 1), std::move(code.weights[l]));
  }
  return code;
}

template <typename S>
FeedForward<S> make_ff(ParameterRegistry<S>& reg, const std::string& prefix,
                       const ModelConfig& c, std::int64_t l) {
  if (c.ff_variant == FFVariant::full) {
    Rng rng(mix_seed(c.seed, prefix));
    FullFFParams<S> p = FullFFParams<S>::make(c.d, c.d_ff, rng);
    p.w1 = reg.add(prefix + ".w1", std::move(p.w1));
    p.b1 = reg.add(prefix + ".b1", std::move(p.b1));
    p.w2 = reg.add(prefix + ".w2", std::move(p.w2));
    p.b2 = reg.add(prefix + ".b2", std::move(p.b2));
    return FeedForward<S>(std::move(p));
  }
  RandomFFParams<S> p = RandomFFParams<S>::make(c.d, c.d_ff, l, c.depth_per_block,
                                                mix_seed(c.seed, prefix));
  p.rot.u1 = reg.add_frozen(prefix + ".u1", std::move(p.rot.u1));
  p.rot.v1 = reg.add_frozen(prefix + ".v1", std::move(p.rot.v1));
  p.rot.u2 = reg.add_frozen(prefix + ".u2", std::move(p.rot.u2));
  p.rot.v2 = reg.add_frozen(prefix + ".v2", std::move(p.rot.v2));
  p.rot.sigma1 = reg.add(prefix + ".sigma1", std::move(p.rot.sigma1));
  p.rot.sigma2 = reg.add(prefix + ".sigma2", std::move(p.rot.sigma2));
  p.rot.b1 = reg.add(prefix + ".b1", std::move(p.rot.b1));
  p.rot.b2 = reg.add(prefix + ".b2", std::move(p.rot.b2));
  return FeedForward<S>(std::move(p));
}

}  // namespace detail

template <typename S>
Model<S> build_model(const ModelConfig& config) {
  config.validate();
  Model<S> m;
  m.cfg = config.resolved();
  const ModelConfig& c = m.cfg;

  Rng emb_rng(mix_seed(c.seed, "embedding"));
  m.embedding = m.registry.add(
      "embedding", Tensor<S>::gaussian({c.vocab_size, c.d}, emb_rng,
                                       1.0 / std::sqrt(static_cast<double>(c.d))));
  m.positions = sinusoidal_positions<S>(c.max_len, c.d);

  for (std::int64_t b = 0; b < c.num_blocks; ++b) {
    const std::string bp = "enc" + std::to_string(b);
    EncoderBlock<S> blk;
    blk.attn = detail::make_attention(m.registry, bp + ".attn", c);
    blk.code = detail::make_code(m.registry, bp + ".code", c);
    for (std::int64_t l = 1; l <= c.depth_per_block; ++l) {
      const std::string lp = bp + ".depth" + std::to_string(l);
      blk.w_o.push_back(m.registry.add(
          lp + ".w_o", detail::xavier<S>({c.d, c.d}, mix_seed(c.seed, lp + ".w_o"))));
      blk.attn_norm.push_back(detail::make_norm(m.registry, lp + ".attn_norm", c.d));
      blk.ff.push_back(detail::make_ff(m.registry, lp + ".ff", c, l));
      blk.ff_norm.push_back(detail::make_norm(m.registry, lp + ".ff_norm", c.d));
    }
    m.encoder.push_back(std::move(blk));
  }

  if (c.architecture == Architecture::encoder_decoder) {
    for (std::int64_t b = 0; b < c.num_blocks; ++b) {
      const std::string bp = "dec" + std::to_string(b);
      DecoderBlock<S> blk;
      blk.self_attn = detail::make_attention(m.registry, bp + ".self_attn", c);
      blk.cross_attn = detail::make_attention(m.registry, bp + ".cross_attn", c);
      blk.code_dec = detail::make_code(m.registry, bp + ".code_dec", c);
      blk.code_ed = detail::make_code(m.registry, bp + ".code_ed", c);
      for (std::int64_t l = 1; l <= c.depth_per_block; ++l) {
        const std::string lp = bp + ".depth" + std::to_string(l);
        blk.w_o_self.push_back(m.registry.add(
            lp + ".w_o_self",
            detail::xavier<S>({c.d, c.d}, mix_seed(c.seed, lp + ".w_o_self"))));
        blk.w_o_cross.push_back(m.registry.add(
            lp + ".w_o_cross",
            detail::xavier<S>({c.d, c.d}, mix_seed(c.seed, lp + ".w_o_cross"))));
        blk.self_norm.push_back(detail::make_norm(m.registry, lp + ".self_norm", c.d));
        blk.cross_norm.push_back(detail::make_norm(m.registry, lp + ".cross_norm", c.d));
        blk.ff.push_back(detail::make_ff(m.registry, lp + ".ff", c, l));
        blk.ff_norm.push_back(detail::make_norm(m.registry, lp + ".ff_norm", c.d));
      }
      m.decoder.push_back(std::move(blk));
    }
  } else {
    ClassifierHead<S> head;
    head.norm = detail::make_norm(m.registry, "head.norm", c.d);
    head.w = m.registry.add("head.w", detail::xavier<S>({c.d, c.num_classes},
                                                        mix_seed(c.seed, "head.w")));
    head.b = m.registry.add("head.b", Tensor<S>::zeros({c.num_classes}));
    m.head = std::move(head);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Masks and embedding
// ---------------------------------------------------------------------------

// Additive key-side padding mask, [B, 1, 1, n]: 0 on real keys, -inf on pads.
template <typename S>
Tensor<S> key_padding_mask(const TokenBatch& batch) {
  const S neg_inf = -std::numeric_limits<S>::infinity();
  std::vector<S> v(static_cast<std::size_t>(batch.batch * batch.len), S(0));
  for (std::int64_t b = 0; b < batch.batch; ++b) {
    for (std::int64_t j = batch.lengths[static_cast<std::size_t>(b)]; j < batch.len; ++j) {
      v[static_cast<std::size_t>(b * batch.len + j)] = neg_inf;
    }
  }
  return Tensor<S>::from({batch.batch, 1, 1, batch.len}, std::move(v));
}

template <typename S>
Tensor<S> embed_tokens(const Model<S>& m, const TokenBatch& batch) {
  if (batch.len > m.cfg.max_len) {
    throw std::invalid_argument("model: input length " + std::to_string(batch.len) +
                                " exceeds max_len " + std::to_string(m.cfg.max_len));
  }
  Tensor<S> x = reshape(embedding_rows(m.embedding, batch.ids),
                        {batch.batch, batch.len, m.cfg.d});
  x = scale(x, std::sqrt(static_cast<double>(m.cfg.d)));
  return add(x, narrow(m.positions, 0, 0, batch.len));
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> encoder_forward(const Model<S>& m, const TokenBatch& batch,
                          Rng* dropout_rng = nullptr) {
  Tensor<S> x = embed_tokens(m, batch);
  const Tensor<S> pad = key_padding_mask<S>(batch);
  for (const EncoderBlock<S>& blk : m.encoder) {
    const Tensor<S> block_input = x;  // operators come from the block entry
    const EvolutionOperators<S> ops =
        init_evolution_operators(block_input, block_input, blk.attn);
    for (std::int64_t l = 1; l <= static_cast<std::int64_t>(blk.ff.size()); ++l) {
      const std::size_t i = static_cast<std::size_t>(l - 1);
      const Tensor<S> t = blk.code.evaluate(l);
      x = attention_layer_forward(
          x, x, ops, t, blk.w_o[i], &pad,
          m.layer_norms_enabled ? &blk.attn_norm[i].gain : nullptr,
          m.layer_norms_enabled ? &blk.attn_norm[i].shift : nullptr, m.cfg.dropout,
          dropout_rng);
      x = feed_forward_layer(x, blk.ff[i],
                             m.layer_norms_enabled ? &blk.ff_norm[i].gain : nullptr,
                             m.layer_norms_enabled ? &blk.ff_norm[i].shift : nullptr,
                             m.cfg.dropout, dropout_rng);
    }
  }
  return x;
}

// Mean over non-pad positions -> layer norm -> affine class logits [B, C].
template <typename S>
Tensor<S> classify_forward(const Model<S>& m, const TokenBatch& batch,
                           Rng* dropout_rng = nullptr) {
  if (!m.head.has_value()) {
    throw std::invalid_argument("classify_forward: model has no classifier head");
  }
  for (std::int32_t len : batch.lengths) {
    if (len <= 0) throw std::invalid_argument("classify_forward: all-pad sample");
  }
  Tensor<S> enc = encoder_forward(m, batch, dropout_rng);
  std::vector<S> w(static_cast<std::size_t>(batch.batch * batch.len), S(0));
  for (std::int64_t b = 0; b < batch.batch; ++b) {
    const std::int64_t len = batch.lengths[static_cast<std::size_t>(b)];
    for (std::int64_t j = 0; j < len; ++j) {
      w[static_cast<std::size_t>(b * batch.len + j)] =
          static_cast<S>(1.0 / static_cast<double>(len));
    }
  }
  Tensor<S> pool_w = Tensor<S>::from({batch.batch, 1, batch.len}, std::move(w));
  Tensor<S> pooled = reshape(matmul(pool_w, enc), {batch.batch, m.cfg.d});
  Tensor<S> normed = layer_norm(pooled, m.head->norm.gain, m.head->norm.shift);
  return add(matmul(normed, m.head->w), m.head->b);
}

// Teacher-forced decoder pass over the embedded target prefix; returns
// per-position vocabulary logits through the tied embedding transpose.
template <typename S>
Tensor<S> decoder_forward(const Model<S>& m, const TokenBatch& tgt,
                          const Tensor<S>& enc_out, const TokenBatch& src,
                          Rng* dropout_rng = nullptr) {
  if (m.decoder.empty()) {
    throw std::invalid_argument("decoder_forward: model has no decoder");
  }
  if (enc_out.rank() != 3 || enc_out.shape()[0] != tgt.batch ||
      enc_out.shape()[2] != m.cfg.d) {
    throw std::invalid_argument("decoder_forward: encoder output shape mismatch");
  }
  Tensor<S> y = embed_tokens(m, tgt);
  const Tensor<S> self_mask =
      add(causal_mask<S>(tgt.len), key_padding_mask<S>(tgt));  // [B,1,n,n]
  const Tensor<S> cross_mask = key_padding_mask<S>(src);
  for (const DecoderBlock<S>& blk : m.decoder) {
    const Tensor<S> block_input = y;
    const EvolutionOperators<S> ops_self =
        init_evolution_operators(block_input, block_input, blk.self_attn);
    const EvolutionOperators<S> ops_cross =
        init_evolution_operators(block_input, enc_out, blk.cross_attn);
    for (std::int64_t l = 1; l <= static_cast<std::int64_t>(blk.ff.size()); ++l) {
      const std::size_t i = static_cast<std::size_t>(l - 1);
      y = attention_layer_forward(
          y, y, ops_self, blk.code_dec.evaluate(l), blk.w_o_self[i], &self_mask,
          m.layer_norms_enabled ? &blk.self_norm[i].gain : nullptr,
          m.layer_norms_enabled ? &blk.self_norm[i].shift : nullptr, m.cfg.dropout,
          dropout_rng);
      y = attention_layer_forward(
          y, enc_out, ops_cross, blk.code_ed.evaluate(l), blk.w_o_cross[i],
          &cross_mask, m.layer_norms_enabled ? &blk.cross_norm[i].gain : nullptr,
          m.layer_norms_enabled ? &blk.cross_norm[i].shift : nullptr, m.cfg.dropout,
          dropout_rng);
      y = feed_forward_layer(y, blk.ff[i],
                             m.layer_norms_enabled ? &blk.ff_norm[i].gain : nullptr,
                             m.layer_norms_enabled ? &blk.ff_norm[i].shift : nullptr,
                             m.cfg.dropout, dropout_rng);
    }
  }
  return matmul(y, transpose_last(m.embedding));  // [B, n_dec, vocab]
}

// Greedy autoregressive decoding for one source sequence. The decoder
// operators are rebuilt from the whole current prefix at every step; the
// causal structure makes this identical to teacher-forced logits.
template <typename S>
std::vector<std::int32_t> greedy_decode(const Model<S>& m,
                                        const std::vector<std::int32_t>& src_ids,
                                        std::int64_t max_out_len) {
  const TokenBatch src = TokenBatch::single(src_ids);
  const Tensor<S> enc = encoder_forward(m, src);
  std::vector<std::int32_t> prefix{kBosId};
  std::vector<std::int32_t> emitted;
  // the prefix occupies decoder slots, so emission also stops at max_len - 1
  while (static_cast<std::int64_t>(emitted.size()) < max_out_len &&
         static_cast<std::int64_t>(prefix.size()) < m.cfg.max_len) {
    const TokenBatch tgt = TokenBatch::single(prefix);
    const Tensor<S> logits = decoder_forward(m, tgt, enc, src);
    const Tensor<S> last =
        narrow(logits, 1, static_cast<std::int64_t>(prefix.size()) - 1, 1);
    const std::int32_t tok = static_cast<std::int32_t>(argmax_rows(last)[0]);
    if (tok == kEosId) break;
    emitted.push_back(tok);
    prefix.push_back(tok);
  }
  return emitted;
}

}  // namespace tevo
