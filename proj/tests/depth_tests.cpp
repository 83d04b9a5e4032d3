#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tevo/core/finite_diff.hpp"
#include "tevo/core/ops.hpp"
#include "tevo/depth/depth_code.hpp"
#include "tevo/depth/rotation.hpp"

using namespace tevo;

TEST_CASE("depth code at l=0: sines vanish, cosines pass the weights") {
  DepthCode<double> code = DepthCode<double>::make(6, 4);
  code.weights[0] = TensorD::from({6}, {2, 3, 4, 5, 6, 7});
  const TensorD t = code.evaluate(0);
  CHECK(t.values()[0] == 0.0);
  CHECK(t.values()[1] == 0.0);
  CHECK(t.values()[2] == 0.0);
  CHECK(t.values()[3] == 5.0);
  CHECK(t.values()[4] == 6.0);
  CHECK(t.values()[5] == 7.0);
}

TEST_CASE("depth code closed form at d'=4, L=2, l=1") {
  DepthCode<double> code = DepthCode<double>::make(4, 2);
  // P = d'L/(2 pi) = 4/pi, so angles are j*pi/4
  CHECK(code.period == Catch::Approx(4.0 / 3.14159265358979323846).epsilon(1e-12));
  const TensorD t = code.evaluate(1);
  CHECK(t.values()[0] == Catch::Approx(0.70711).margin(1e-5));
  CHECK(t.values()[1] == Catch::Approx(1.0).margin(1e-12));
  CHECK(t.values()[2] == Catch::Approx(0.70711).margin(1e-5));
  CHECK(t.values()[3] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("depth code matches an independent scalar loop") {
  Rng rng(88);
  DepthCode<double> code = DepthCode<double>::make(10, 5);
  for (auto& w : code.weights) w = TensorD::gaussian({10}, rng, 1.0);
  for (std::int64_t l = 0; l <= 5; ++l) {
    const TensorD t = code.evaluate(l);
    const auto& w = code.weights[l == 0 ? 0 : static_cast<std::size_t>(l - 1)].values();
    for (std::int64_t j = 1; j <= 5; ++j) {
      const double angle = static_cast<double>(j) * static_cast<double>(l) / code.period;
      CHECK(std::abs(t.values()[static_cast<std::size_t>(j - 1)] -
                     w[static_cast<std::size_t>(j - 1)] * std::sin(angle)) < 1e-12);
      CHECK(std::abs(t.values()[static_cast<std::size_t>(4 + j)] -
                     w[static_cast<std::size_t>(4 + j)] * std::cos(angle)) < 1e-12);
    }
  }
}

TEST_CASE("depth code is linear in its trainable weights") {
  DepthCode<double> code = DepthCode<double>::make(8, 3);
  Rng rng(5);
  code.weights[1] = TensorD::gaussian({8}, rng, 1.0);
  const TensorD once = code.evaluate(2);
  for (auto& v : code.weights[1].mutable_values()) v *= 2.0;
  const TensorD twice = code.evaluate(2);
  for (std::size_t i = 0; i < once.values().size(); ++i) {
    CHECK(twice.values()[i] == 2.0 * once.values()[i]);
  }
}

TEST_CASE("depth code rejects odd dimension and bad depth index") {
  CHECK_THROWS(DepthCode<double>::make(5, 3));
  DepthCode<double> code = DepthCode<double>::make(4, 3);
  CHECK_THROWS(code.evaluate(4));
  CHECK_THROWS(code.evaluate(-1));
}

TEST_CASE("affine images of the depth code are fourier series in depth") {
  // c_i = b_i + sum_j a_ij w_j sin(j l / P) + sum_j a_ij w_{j+d'/2} cos(j l / P)
  Rng rng(12);
  const std::int64_t dp = 8, p = 5;
  DepthCode<double> code = DepthCode<double>::make(dp, 6);
  for (auto& w : code.weights) w = TensorD::gaussian({dp}, rng, 1.0);
  const TensorD a = TensorD::gaussian({p, dp}, rng, 1.0);
  const TensorD b = TensorD::gaussian({p}, rng, 1.0);
  for (std::int64_t l = 1; l <= 6; ++l) {
    const TensorD c =
        add(reshape(matmul(a, reshape(code.evaluate(l), {dp, 1})), {p}), b);
    const auto& w = code.weights[static_cast<std::size_t>(l - 1)].values();
    for (std::int64_t i = 0; i < p; ++i) {
      double expect = b.values()[static_cast<std::size_t>(i)];
      for (std::int64_t j = 1; j <= dp / 2; ++j) {
        const double angle = static_cast<double>(j * l) / code.period;
        expect += a.at({i, j - 1}) * w[static_cast<std::size_t>(j - 1)] * std::sin(angle);
        expect += a.at({i, dp / 2 + j - 1}) * w[static_cast<std::size_t>(dp / 2 + j - 1)] *
                  std::cos(angle);
      }
      CHECK(std::abs(c.values()[static_cast<std::size_t>(i)] - expect) < 1e-12);
    }
  }
}

TEST_CASE("rotation matrix: l=0 degenerate structure") {
  const std::int64_t dim = 8;
  const TensorD u = build_rotation_matrix<double>(dim, 0, 4, 321);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::int64_t i = 0; i < dim; ++i) {
    for (std::int64_t j = 0; j < dim / 2; ++j) {
      CHECK(u.at({i, j}) == 0.0);
      CHECK(u.at({i, j + dim / 2}) == Catch::Approx(inv).epsilon(1e-15));
    }
  }
  // U U^T is then exactly the half-filled constant matrix
  const TensorD gram = matmul(u, transpose_last(u));
  for (double v : gram.values()) CHECK(v == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("rotation matrix diagonal of U U^T is exactly one half") {
  for (const std::int64_t dim : {4, 10, 32}) {
    for (const std::int64_t l : {1, 2, 5}) {
      const TensorD u = build_rotation_matrix<double>(
          dim, l, 6, static_cast<std::uint64_t>(17 + dim + l));
      const TensorD gram = matmul(u, transpose_last(u));
      for (std::int64_t i = 0; i < dim; ++i) {
        CHECK(std::abs(gram.at({i, i}) - 0.5) < 1e-12);
      }
    }
  }
}

TEST_CASE("rotation matrix regeneration is bit identical; odd dim rejected") {
  const TensorD a = build_rotation_matrix<double>(16, 3, 6, 904);
  const TensorD b = build_rotation_matrix<double>(16, 3, 6, 904);
  CHECK(a.values() == b.values());
  const TensorD c = build_rotation_matrix<double>(16, 3, 6, 905);
  CHECK(a.values() != c.values());
  CHECK_THROWS(build_rotation_matrix<double>(7, 1, 6, 1));
}

TEST_CASE("rotation factors freeze the matrices and train the diagonals") {
  RotationFactors<double> rf = RotationFactors<double>::make(8, 16, 2, 4, 77);
  CHECK(rf.k == 8);
  CHECK(rf.u1.shape() == Shape{8, 8});
  CHECK(rf.v1.shape() == Shape{8, 16});
  CHECK(rf.u2.shape() == Shape{16, 8});
  CHECK(rf.v2.shape() == Shape{8, 8});
  CHECK(rf.trainable_count() == 2 * 8 + 16 + 8);
  for (double v : rf.sigma1.values()) CHECK(v == 1.0);
  for (double v : rf.b1.values()) CHECK(v == 0.0);
  // rebuilding with the same seed reproduces the frozen slices bit for bit
  RotationFactors<double> rf2 = RotationFactors<double>::make(8, 16, 2, 4, 77);
  CHECK(rf.u1.values() == rf2.u1.values());
  CHECK(rf.v2.values() == rf2.v2.values());
}

TEST_CASE("sinusoidal positions") {
  const TensorD pe = sinusoidal_positions<double>(4, 6);
  // position 0 alternates 0, 1
  for (std::int64_t k = 0; k < 3; ++k) {
    CHECK(pe.at({0, 2 * k}) == 0.0);
    CHECK(pe.at({0, 2 * k + 1}) == 1.0);
  }
  // position 1, first pair is [sin 1, cos 1]
  CHECK(pe.at({1, 0}) == Catch::Approx(0.84147).margin(1e-5));
  CHECK(pe.at({1, 1}) == Catch::Approx(0.54030).margin(1e-5));
  for (double v : pe.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}
