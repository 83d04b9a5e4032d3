#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tevo/model/registry.hpp"
#include "tevo/train/train_config.hpp"

namespace tevo {

// Standard bias-corrected Adam over a parameter registry. Moments are kept
// in the registry's order; a parameter with no recorded gradient this step
// contributes g = 0.
template <typename S>
struct AdamState {
  struct Slot {
    std::vector<S> m, v;
  };
  std::vector<Slot> slots;
  std::int64_t step = 0;

  static AdamState init(const ParameterRegistry<S>& reg) {
    AdamState st;
    st.slots.resize(reg.params().size());
    for (std::size_t i = 0; i < reg.params().size(); ++i) {
      const std::size_t n = reg.params()[i].second.values().size();
      st.slots[i].m.assign(n, S(0));
      st.slots[i].v.assign(n, S(0));
    }
    return st;
  }

  void update(ParameterRegistry<S>& reg, double lr, const TrainConfig& tc) {
    if (slots.size() != reg.params().size()) {
      throw std::invalid_argument("adam: moment table does not match registry");
    }
    ++step;
    const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const std::string& name = reg.params()[i].first;
      Tensor<S> param = reg.params()[i].second;  // handle; storage is shared
      auto& values = param.mutable_values();
      Slot& slot = slots[i];
      if (slot.m.size() != values.size()) {
        throw std::invalid_argument("adam: shape mismatch for " + name);
      }
      const bool has_grad = param.has_grad();
      const std::vector<S>* grad = has_grad ? &param.grad() : nullptr;
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double g = has_grad ? static_cast<double>((*grad)[j]) : 0.0;
        const double m = b1 * static_cast<double>(slot.m[j]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(slot.v[j]) + (1.0 - b2) * g * g;
        slot.m[j] = static_cast<S>(m);
        slot.v[j] = static_cast<S>(v);
        const double mhat = m / corr1;
        const double vhat = v / corr2;
        values[j] = static_cast<S>(static_cast<double>(values[j]) -
                                   lr * mhat / (std::sqrt(vhat) + tc.adam_eps));
      }
    }
  }
};

}  // namespace tevo
