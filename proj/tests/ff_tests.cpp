#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tevo/core/ops.hpp"
#include "tevo/ff/feed_forward.hpp"

using namespace tevo;

TEST_CASE("full ff: zero weights reduce to the residual") {
  Rng rng(1);
  FullFFParams<double> p = FullFFParams<double>::make(4, 8, rng);
  for (auto& v : p.w1.mutable_values()) v = 0;
  for (auto& v : p.w2.mutable_values()) v = 0;
  const TensorD h = TensorD::gaussian({3, 4}, rng, 1.0);
  CHECK(full_ff_forward(h, p).values() == h.values());
}

TEST_CASE("full ff hand evaluation in one dimension") {
  FullFFParams<double> p;
  p.d = 1;
  p.d_ff = 1;
  p.w1 = TensorD::from({1, 1}, {1});
  p.b1 = TensorD::zeros({1});
  p.w2 = TensorD::from({1, 1}, {1});
  p.b2 = TensorD::zeros({1});
  CHECK(full_ff_forward(TensorD::from({1, 1}, {-2}), p).item() == -2.0);
  CHECK(full_ff_forward(TensorD::from({1, 1}, {2}), p).item() == 4.0);
}

TEST_CASE("random ff: zero diagonals and biases reduce to the residual") {
  RandomFFParams<double> p = RandomFFParams<double>::make(4, 8, 1, 3, 5);
  for (auto& v : p.rot.sigma1.mutable_values()) v = 0;
  for (auto& v : p.rot.sigma2.mutable_values()) v = 0;
  Rng rng(2);
  const TensorD h = TensorD::gaussian({3, 4}, rng, 1.0);
  CHECK(random_ff_forward(h, p).values() == h.values());
}

TEST_CASE("random ff gradients reach only the diagonals and biases") {
  RandomFFParams<double> p = RandomFFParams<double>::make(4, 8, 2, 3, 9);
  p.rot.sigma1.set_requires_grad(true);
  p.rot.sigma2.set_requires_grad(true);
  p.rot.b1.set_requires_grad(true);
  p.rot.b2.set_requires_grad(true);
  Rng rng(3);
  TensorD h = TensorD::gaussian({2, 4}, rng, 1.0);
  h.set_requires_grad(true);
  sum_all(random_ff_forward(h, p)).backward();
  CHECK(p.rot.sigma1.has_grad());
  CHECK(p.rot.sigma2.has_grad());
  CHECK(p.rot.b1.has_grad());
  CHECK(p.rot.b2.has_grad());
  CHECK(h.has_grad());
  CHECK_FALSE(p.rot.u1.has_grad());
  CHECK_FALSE(p.rot.v1.has_grad());
  CHECK_FALSE(p.rot.u2.has_grad());
  CHECK_FALSE(p.rot.v2.has_grad());
}

TEST_CASE("per-depth trainable counts and the reduction ratio") {
  Rng rng(4);
  const FullFFParams<double> full = FullFFParams<double>::make(512, 2048, rng);
  const RandomFFParams<double> random = RandomFFParams<double>::make(512, 2048, 1, 6, 2);
  CHECK(full.trainable_count() == 2099712);
  CHECK(random.trainable_count() == 3584);
  const double ratio = static_cast<double>(full.trainable_count()) /
                       static_cast<double>(random.trainable_count());
  CHECK(ratio == Catch::Approx(586.0).margin(1.0));
}

TEST_CASE("both regimes are drop-in peers by shape") {
  Rng rng(5);
  const std::int64_t d = 8, d_ff = 32;
  FullFFParams<double> full = FullFFParams<double>::make(d, d_ff, rng);
  RandomFFParams<double> random = RandomFFParams<double>::make(d, d_ff, 1, 4, 6);
  const TensorD h = TensorD::gaussian({2, 5, d}, rng, 1.0);
  const TensorD a = full_ff_forward(h, full);
  const TensorD b = random_ff_forward(h, random);
  CHECK(a.shape() == h.shape());
  CHECK(b.shape() == h.shape());
}

TEST_CASE("post-norm placement matches between regimes") {
  Rng rng(6);
  const std::int64_t d = 4;
  const TensorD gain = TensorD::ones({d});
  const TensorD shift = TensorD::zeros({d});
  FullFFParams<double> full = FullFFParams<double>::make(d, 8, rng);
  const TensorD h = TensorD::gaussian({3, d}, rng, 1.0);
  const TensorD with_norm = full_ff_forward(h, full, &gain, &shift);
  // each output row is standardized
  for (std::int64_t r = 0; r < 3; ++r) {
    double mean = 0;
    for (std::int64_t c = 0; c < d; ++c) mean += with_norm.at({r, c});
    CHECK(std::abs(mean / d) < 1e-10);
  }
}
