#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/core/ops.hpp"
#include "tevo/core/rng.hpp"
#include "tevo/core/tensor.hpp"
#include "tevo/depth/depth_code.hpp"

namespace tevo {

// Approximate rotation matrix at depth l: row i pairs a sine and a cosine of
// the same random frequency, entry (i, j) = sin(w_ij * j * l / P) / sqrt(dim)
// for 1-based j <= dim/2 and entry (i, j + dim/2) the matching cosine, with
// P = dim * L / (2*pi) and w_ij drawn once from Normal(0, dim^2). The shared
// w_ij per pair makes diag(U U^T) exactly 1/2 for every depth and seed.
template <typename S>
Tensor<S> build_rotation_matrix(std::int64_t dim, std::int64_t l,
                                std::int64_t total_depth, std::uint64_t seed) {
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("rotation matrix: dim must be even and positive, got " +
                                std::to_string(dim));
  }
  const double period =
      static_cast<double>(dim) * static_cast<double>(total_depth) / kTwoPi;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
  const std::int64_t half = dim / 2;
  Rng rng(seed);
  std::vector<S> v(static_cast<std::size_t>(dim * dim));
  for (std::int64_t i = 0; i < dim; ++i) {
    for (std::int64_t j = 1; j <= half; ++j) {
      const double w = rng.next_gaussian() * static_cast<double>(dim);
      const double angle =
          w * static_cast<double>(j) * static_cast<double>(l) / period;
      v[static_cast<std::size_t>(i * dim + j - 1)] =
          static_cast<S>(std::sin(angle) * inv_sqrt);
      v[static_cast<std::size_t>(i * dim + half + j - 1)] =
          static_cast<S>(std::cos(angle) * inv_sqrt);
    }
  }
  return Tensor<S>::from({dim, dim}, std::move(v));
}

// Frozen factorization state for one depth of the random feed-forward:
// the used slices of the four rotation matrices plus the trainable
// diagonals and biases. Frozen slices never enter the trainable registry.
template <typename S>
struct RotationFactors {
  std::int64_t d = 0, d_ff = 0, k = 0;  // k = min(d, d_ff)
  Tensor<S> u1;  // [d, k]     first k columns of U1 (dim d)
  Tensor<S> v1;  // [k, d_ff]  first k rows of V1 (dim d_ff)
  Tensor<S> u2;  // [d_ff, k]  first k columns of U2 (dim d_ff)
  Tensor<S> v2;  // [k, d]     first k rows of V2 (dim d)
  Tensor<S> sigma1, sigma2;  // [k] trainable, init 1
  Tensor<S> b1;              // [d_ff] trainable, init 0
  Tensor<S> b2;              // [d] trainable, init 0
  std::uint64_t seed = 0;

  static RotationFactors make(std::int64_t d, std::int64_t d_ff, std::int64_t l,
                              std::int64_t total_depth, std::uint64_t seed) {
    RotationFactors rf;
    rf.d = d;
    rf.d_ff = d_ff;
    rf.k = std::min(d, d_ff);
    rf.seed = seed;
    const std::uint64_t depth_salt = mix_seed(seed, static_cast<std::uint64_t>(l));
    const Tensor<S> full_u1 =
        build_rotation_matrix<S>(d, l, total_depth, mix_seed(depth_salt, "u1"));
    const Tensor<S> full_v1 =
        build_rotation_matrix<S>(d_ff, l, total_depth, mix_seed(depth_salt, "v1"));
    const Tensor<S> full_u2 =
        build_rotation_matrix<S>(d_ff, l, total_depth, mix_seed(depth_salt, "u2"));
    const Tensor<S> full_v2 =
        build_rotation_matrix<S>(d, l, total_depth, mix_seed(depth_salt, "v2"));
    rf.u1 = narrow(full_u1, 1, 0, rf.k);
    rf.v1 = narrow(full_v1, 0, 0, rf.k);
    rf.u2 = narrow(full_u2, 1, 0, rf.k);
    rf.v2 = narrow(full_v2, 0, 0, rf.k);
    rf.sigma1 = Tensor<S>::ones({rf.k});
    rf.sigma2 = Tensor<S>::ones({rf.k});
    rf.b1 = Tensor<S>::zeros({d_ff});
    rf.b2 = Tensor<S>::zeros({d});
    return rf;
  }

  std::int64_t trainable_count() const { return 2 * k + d_ff + d; }
};

}  // namespace tevo
