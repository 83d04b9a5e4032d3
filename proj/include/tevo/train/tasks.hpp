#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/core/rng.hpp"
#include "tevo/model/model.hpp"

namespace tevo {

enum class TaskKind { copy, reverse, listops };

inline TaskKind task_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "listops") return TaskKind::listops;
  throw std::invalid_argument("unknown task '" + s + "' (copy|reverse|listops)");
}

struct TaskSample {
  std::vector<std::int32_t> input;
  std::vector<std::int32_t> target;  // seq2seq payload
  std::int32_t label = 0;            // classification
};

struct Seq2SeqBatch {
  TokenBatch src, tgt_in, tgt_out;
};

struct ClassifyBatch {
  TokenBatch tokens;
  std::vector<std::int32_t> labels;
};

namespace detail {

inline TokenBatch pack_rows(const std::vector<std::vector<std::int32_t>>& rows) {
  TokenBatch b;
  b.batch = static_cast<std::int64_t>(rows.size());
  b.len = 0;
  for (const auto& r : rows) {
    b.len = std::max(b.len, static_cast<std::int64_t>(r.size()));
  }
  b.ids.assign(static_cast<std::size_t>(b.batch * b.len), kPadId);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(),
              b.ids.begin() + static_cast<std::int64_t>(i) * b.len);
    b.lengths.push_back(static_cast<std::int32_t>(rows[i].size()));
  }
  return b;
}

}  // namespace detail

// Uniform random payload sequences over ids [3, vocab); the target is the
// payload itself or its reversal. Deterministic per seed.
inline Seq2SeqBatch gen_copy_batch(std::int64_t vocab, std::int64_t len_lo,
                                   std::int64_t len_hi, std::int64_t batch,
                                   std::uint64_t seed, bool reverse_mode) {
  if (vocab <= 3) throw std::invalid_argument("gen_copy_batch: vocab too small");
  if (len_lo < 1 || len_hi < len_lo) {
    throw std::invalid_argument("gen_copy_batch: bad length range");
  }
  Rng rng(seed);
  std::vector<std::vector<std::int32_t>> src, tin, tout;
  for (std::int64_t b = 0; b < batch; ++b) {
    const std::int64_t len =
        len_lo + static_cast<std::int64_t>(rng.next_below(
                     static_cast<std::uint64_t>(len_hi - len_lo + 1)));
    std::vector<std::int32_t> payload(static_cast<std::size_t>(len));
    for (auto& t : payload) {
      t = 3 + static_cast<std::int32_t>(
                  rng.next_below(static_cast<std::uint64_t>(vocab - 3)));
    }
    std::vector<std::int32_t> target = payload;
    if (reverse_mode) std::reverse(target.begin(), target.end());
    std::vector<std::int32_t> in{kBosId};
    in.insert(in.end(), target.begin(), target.end());
    std::vector<std::int32_t> out = target;
    out.push_back(kEosId);
    src.push_back(std::move(payload));
    tin.push_back(std::move(in));
    tout.push_back(std::move(out));
  }
  Seq2SeqBatch out;
  out.src = detail::pack_rows(src);
  out.tgt_in = detail::pack_rows(tin);
  out.tgt_out = detail::pack_rows(tout);
  return out;
}

// ---------------------------------------------------------------------------
// ListOps: prefix arithmetic over MAX / MIN / MED / SM (sum mod 10)
// ---------------------------------------------------------------------------

// Token ids: digits 0..9 -> 3..12, then the bracketed operators and the
// closing bracket.
inline constexpr std::int32_t kListopsDigit0 = 3;
inline constexpr std::int32_t kListopsMax = 13;
inline constexpr std::int32_t kListopsMin = 14;
inline constexpr std::int32_t kListopsMed = 15;
inline constexpr std::int32_t kListopsSum = 16;
inline constexpr std::int32_t kListopsClose = 17;
inline constexpr std::int64_t kListopsVocab = 18;
inline constexpr std::int64_t kListopsClasses = 10;

inline std::string listops_token_string(std::int32_t id) {
  if (id >= kListopsDigit0 && id < kListopsDigit0 + 10) {
    return std::to_string(id - kListopsDigit0);
  }
  switch (id) {
    case kListopsMax: return "[MAX";
    case kListopsMin: return "[MIN";
    case kListopsMed: return "[MED";
    case kListopsSum: return "[SM";
    case kListopsClose: return "]";
    case kPadId: return "<pad>";
    case kBosId: return "<bos>";
    case kEosId: return "<eos>";
    default: return "?";
  }
}

inline std::string listops_render(const std::vector<std::int32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += listops_token_string(ids[i]);
  }
  return out;
}

namespace detail {

inline std::int32_t listops_apply(std::int32_t op,
                                  const std::vector<std::int32_t>& args) {
  switch (op) {
    case kListopsMax: return *std::max_element(args.begin(), args.end());
    case kListopsMin: return *std::min_element(args.begin(), args.end());
    case kListopsMed: {
      std::vector<std::int32_t> s = args;
      std::sort(s.begin(), s.end());
      return s[s.size() / 2];  // generated with odd arity
    }
    case kListopsSum: {
      std::int32_t acc = 0;
      for (std::int32_t a : args) acc = (acc + a) % 10;
      return acc;
    }
    default: throw std::invalid_argument("listops: unknown operator token");
  }
}

// Emits tokens for one subexpression and returns its value.
inline std::int32_t listops_gen_expr(Rng& rng, std::int64_t depth,
                                     std::vector<std::int32_t>& out) {
  if (depth <= 0) {
    const std::int32_t digit = static_cast<std::int32_t>(rng.next_below(10));
    out.push_back(kListopsDigit0 + digit);
    return digit;
  }
  static constexpr std::int32_t ops[4] = {kListopsMax, kListopsMin, kListopsMed,
                                          kListopsSum};
  const std::int32_t op = ops[rng.next_below(4)];
  const std::int64_t arity =
      op == kListopsMed ? 3 : 2 + static_cast<std::int64_t>(rng.next_below(3));
  out.push_back(op);
  std::vector<std::int32_t> args;
  for (std::int64_t a = 0; a < arity; ++a) {
    const bool nest = depth > 1 && rng.next_uniform() < 0.45;
    args.push_back(listops_gen_expr(rng, nest ? depth - 1 : 0, out));
  }
  out.push_back(kListopsClose);
  return listops_apply(op, args);
}

}  // namespace detail

// One classification sample: a bracketed prefix expression of depth at most
// max_depth and at most max_len tokens; the label is its value in 0..9.
inline TaskSample gen_listops_sample(std::int64_t max_depth, std::int64_t max_len,
                                     Rng& rng) {
  if (max_depth < 1) throw std::invalid_argument("gen_listops_sample: max_depth >= 1");
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::int64_t depth =
        1 + static_cast<std::int64_t>(rng.next_below(
                static_cast<std::uint64_t>(max_depth)));
    std::vector<std::int32_t> tokens;
    const std::int32_t value = detail::listops_gen_expr(rng, depth, tokens);
    if (static_cast<std::int64_t>(tokens.size()) <= max_len) {
      TaskSample s;
      s.input = std::move(tokens);
      s.label = value;
      return s;
    }
  }
  throw std::runtime_error("gen_listops_sample: could not fit max_len");
}

inline ClassifyBatch gen_listops_batch(std::int64_t max_depth, std::int64_t max_len,
                                       std::int64_t batch, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::int32_t>> rows;
  ClassifyBatch out;
  for (std::int64_t b = 0; b < batch; ++b) {
    TaskSample s = gen_listops_sample(max_depth, max_len, rng);
    rows.push_back(std::move(s.input));
    out.labels.push_back(s.label);
  }
  out.tokens = detail::pack_rows(rows);
  return out;
}

}  // namespace tevo
