#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tevo/core/rng.hpp"
#include "tevo/core/tensor.hpp"

namespace tevo {

// Ordered, uniquely named table of the model's tensors. Trainable entries
// drive the optimizer and the parameter counts; frozen entries (rotation
// factors) are carried for checkpointing only.
template <typename S>
class ParameterRegistry {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> t) {
    check_unique(name);
    t.set_requires_grad(true);
    params_.emplace_back(name, std::move(t));
    index_[name] = params_.size() - 1;
    return params_.back().second;
  }

  Tensor<S>& add_frozen(const std::string& name, Tensor<S> t) {
    check_unique(name);
    frozen_.emplace_back(name, std::move(t));
    frozen_index_[name] = frozen_.size() - 1;
    return frozen_.back().second;
  }

  const std::vector<std::pair<std::string, Tensor<S>>>& params() const {
    return params_;
  }
  const std::vector<std::pair<std::string, Tensor<S>>>& frozen() const {
    return frozen_;
  }

  Tensor<S>* find(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return &params_[it->second].second;
    auto fit = frozen_index_.find(name);
    if (fit != frozen_index_.end()) return &frozen_[fit->second].second;
    return nullptr;
  }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  // Order-sensitive digest of all parameter bytes; used to assert that
  // forward passes never mutate parameters.
  std::uint64_t value_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params_) {
      h ^= fnv1a64(name);
      h *= 0x100000001b3ULL;
      for (S v : t.values()) {
        std::uint64_t bits = 0;
        static_assert(sizeof(S) <= sizeof(bits));
        std::memcpy(&bits, &v, sizeof(S));
        h ^= bits;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

 private:
  void check_unique(const std::string& name) const {
    if (index_.count(name) || frozen_index_.count(name)) {
      throw std::invalid_argument("registry: duplicate tensor name " + name);
    }
  }

  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::vector<std::pair<std::string, Tensor<S>>> frozen_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> frozen_index_;
};

}  // namespace tevo
