#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tevo/core/ops.hpp"
#include "tevo/core/tensor.hpp"

namespace tevo {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Learnable sinusoidal vector function of depth. Entry j (1-based,
// j <= d'/2) is w_j * sin(j*l/P), entry j + d'/2 is w_{j+d'/2} * cos(j*l/P),
// with period constant P = d'*L / (2*pi). Weights are per depth and start
// at 1 so the function begins as a pure sinusoidal basis.
template <typename S>
struct DepthCode {
  std::int64_t d_prime = 0;
  std::int64_t depth = 0;  // L, total depth of the owning block
  double period = 0.0;     // P
  std::vector<Tensor<S>> weights;  // one [d'] tensor per depth 1..L

  static DepthCode make(std::int64_t d_prime, std::int64_t depth) {
    if (d_prime <= 0 || d_prime % 2 != 0) {
      throw std::invalid_argument("depth code: d' must be even and positive, got " +
                                  std::to_string(d_prime));
    }
    if (depth < 0) throw std::invalid_argument("depth code: negative depth");
    DepthCode dc;
    dc.d_prime = d_prime;
    dc.depth = depth;
    dc.period = static_cast<double>(d_prime) * static_cast<double>(depth) / kTwoPi;
    dc.weights.reserve(static_cast<std::size_t>(depth));
    for (std::int64_t l = 0; l < depth; ++l) {
      dc.weights.push_back(Tensor<S>::ones({d_prime}));
    }
    return dc;
  }

  // Fixed sin/cos basis at depth l (no weights applied).
  Tensor<S> basis(std::int64_t l) const {
    if (period <= 0.0) {
      throw std::invalid_argument("depth code: period not positive (depth 0 block?)");
    }
    std::vector<S> v(static_cast<std::size_t>(d_prime));
    const std::int64_t half = d_prime / 2;
    for (std::int64_t j = 1; j <= half; ++j) {
      const double angle = static_cast<double>(j) * static_cast<double>(l) / period;
      v[static_cast<std::size_t>(j - 1)] = static_cast<S>(std::sin(angle));
      v[static_cast<std::size_t>(half + j - 1)] = static_cast<S>(std::cos(angle));
    }
    return Tensor<S>::from({d_prime}, std::move(v));
  }

  // T^l = W^l (elementwise) basis(l). l is 1-based; l = 0 is permitted for
  // tests and reuses the depth-1 weight vector.
  Tensor<S> evaluate(std::int64_t l) const {
    if (l < 0 || l > depth) {
      throw std::invalid_argument("depth code: depth index " + std::to_string(l) +
                                  " outside [0," + std::to_string(depth) + "]");
    }
    const std::size_t wi = l == 0 ? 0 : static_cast<std::size_t>(l - 1);
    if (weights.empty()) {
      throw std::invalid_argument("depth code: no per-depth weights (depth 0)");
    }
    return mul(weights[wi], basis(l));
  }
};

// Free-function form used by tests and oracles.
template <typename S>
Tensor<S> build_depth_code(std::int64_t l, const DepthCode<S>& code) {
  return code.evaluate(l);
}

// The standard fixed sinusoidal position table: entry (p, 2k) is
// sin(p / 10000^(2k/d)) and (p, 2k+1) is cos of the same angle.
template <typename S>
Tensor<S> sinusoidal_positions(std::int64_t n, std::int64_t d) {
  std::vector<S> v(static_cast<std::size_t>(n * d));
  for (std::int64_t p = 0; p < n; ++p) {
    for (std::int64_t k = 0; 2 * k < d; ++k) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) /
                                                 static_cast<double>(d));
      const double angle = static_cast<double>(p) * freq;
      v[static_cast<std::size_t>(p * d + 2 * k)] = static_cast<S>(std::sin(angle));
      if (2 * k + 1 < d) {
        v[static_cast<std::size_t>(p * d + 2 * k + 1)] = static_cast<S>(std::cos(angle));
      }
    }
  }
  return Tensor<S>::from({n, d}, std::move(v));
}

}  // namespace tevo
