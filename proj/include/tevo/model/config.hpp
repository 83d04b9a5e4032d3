#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tevo/core/rng.hpp"

namespace tevo {

enum class FFVariant { random, full };
enum class Architecture { encoder_only, encoder_decoder };

inline const char* to_string(FFVariant v) {
  return v == FFVariant::random ? "random" : "full";
}
inline const char* to_string(Architecture a) {
  return a == Architecture::encoder_only ? "encoder_only" : "encoder_decoder";
}

struct ModelConfig {
  std::int64_t d = 64;
  std::int64_t d_prime = -1;  // -1: defaults to d
  std::int64_t heads = 8;     // m
  std::int64_t num_blocks = 1;
  std::int64_t depth_per_block = 6;
  std::int64_t d_ff = -1;  // -1: defaults to 4*d
  FFVariant ff_variant = FFVariant::full;
  std::int64_t vocab_size = 0;
  std::int64_t num_classes = 0;  // encoder-only
  std::int64_t max_len = 512;
  double dropout = 0.0;
  std::uint64_t seed = 1;
  Architecture architecture = Architecture::encoder_only;

  ModelConfig resolved() const {
    ModelConfig c = *this;
    if (c.d_prime < 0) c.d_prime = c.d;
    if (c.d_ff < 0) c.d_ff = 4 * c.d;
    return c;
  }

  void validate() const {
    const ModelConfig c = resolved();
    if (c.d <= 0 || c.d % 2 != 0) {
      throw std::invalid_argument("config: d must be even and positive");
    }
    if (c.d_prime <= 0 || c.d_prime % 2 != 0) {
      throw std::invalid_argument("config: d_prime must be even and positive");
    }
    if (c.heads <= 0 || c.d % c.heads != 0 || (c.d + c.d_prime) % c.heads != 0) {
      throw std::invalid_argument(
          "config: d and d+d_prime must be divisible by the head count");
    }
    if (c.num_blocks <= 0) throw std::invalid_argument("config: num_blocks must be >= 1");
    if (c.depth_per_block < 0) {
      throw std::invalid_argument("config: depth_per_block must be >= 0");
    }
    if (c.vocab_size < 3) {
      throw std::invalid_argument("config: vocab_size must cover pad/bos/eos (>= 3)");
    }
    if (c.architecture == Architecture::encoder_only && c.num_classes <= 0) {
      throw std::invalid_argument("config: encoder_only needs num_classes >= 1");
    }
    if (c.max_len <= 0) throw std::invalid_argument("config: max_len must be positive");
    if (c.dropout < 0.0 || c.dropout >= 1.0) {
      throw std::invalid_argument("config: dropout must be in [0, 1)");
    }
  }

  // Stable textual form; the checkpoint header hashes this.
  std::string canonical_string() const {
    const ModelConfig c = resolved();
    std::ostringstream os;
    os << "d=" << c.d << ";d_prime=" << c.d_prime << ";heads=" << c.heads
       << ";num_blocks=" << c.num_blocks << ";depth_per_block=" << c.depth_per_block
       << ";d_ff=" << c.d_ff << ";ff_variant=" << to_string(c.ff_variant)
       << ";vocab_size=" << c.vocab_size << ";num_classes=" << c.num_classes
       << ";max_len=" << c.max_len << ";dropout=" << c.dropout << ";seed=" << c.seed
       << ";architecture=" << to_string(c.architecture);
    return os.str();
  }

  std::uint32_t hash() const {
    return static_cast<std::uint32_t>(fnv1a64(canonical_string()) & 0xffffffffULL);
  }

  std::int64_t total_depth() const { return num_blocks * depth_per_block; }
};

}  // namespace tevo
