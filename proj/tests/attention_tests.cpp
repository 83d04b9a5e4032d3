#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "tevo/attention/baseline.hpp"
#include "tevo/attention/evolution.hpp"
#include "tevo/core/mults.hpp"
#include "tevo/core/ops.hpp"
#include "tevo/verify/oracles.hpp"

using namespace tevo;

namespace {

AttentionParams<double> random_params(std::int64_t d, std::int64_t dp,
                                      std::int64_t m, Rng& rng) {
  AttentionParams<double> p;
  p.d = d;
  p.d_prime = dp;
  p.heads = m;
  p.w_q = TensorD::gaussian({d, d + dp}, rng, 1.0);
  p.w_k = TensorD::gaussian({d, d + dp}, rng, 1.0);
  p.wt_q = TensorD::gaussian({dp, d + dp}, rng, 1.0);
  p.wt_k = TensorD::gaussian({dp, d + dp}, rng, 1.0);
  return p;
}

}  // namespace

TEST_CASE("zero temporal projections collapse the evolution terms") {
  Rng rng(31);
  AttentionParams<double> p = random_params(4, 4, 2, rng);
  p.wt_q = TensorD::zeros({4, 8});
  p.wt_k = TensorD::zeros({4, 8});
  const TensorD x = TensorD::gaussian({3, 4}, rng, 1.0);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  for (double v : ops.a1.values()) CHECK(v == 0.0);
  for (double v : ops.a2.values()) CHECK(v == 0.0);
  for (double v : ops.a3.values()) CHECK(v == 0.0);
  for (std::int64_t l = 0; l <= 4; ++l) {
    const TensorD t = TensorD::gaussian({4}, rng, 1.0);
    const TensorD logits = evolved_logits(ops, t);
    CHECK(logits.values() == ops.a0.values());
  }
}

TEST_CASE("single-token hand computation of the scaled initial logits") {
  AttentionParams<double> p;
  p.d = 2;
  p.d_prime = 2;
  p.heads = 1;
  p.w_q = TensorD::from({2, 4}, {1, 2, 0, 1, 0, 1, 1, 0});
  p.w_k = TensorD::from({2, 4}, {2, 0, 1, 1, 1, 1, 0, 2});
  p.wt_q = TensorD::zeros({2, 4});
  p.wt_k = TensorD::zeros({2, 4});
  const TensorD x = TensorD::from({1, 2}, {3, -1});
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  // q = x W_q = [3, 5, -1, 3]; k = x W_k = [5, -1, 3, 1]
  // unscaled dot = 15 - 5 - 3 + 3 = 10; scale 1/sqrt(2)
  CHECK(ops.a0.item() == Catch::Approx(10.0 / std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("zero depth code reduces evolved logits to the initial operator") {
  Rng rng(17);
  AttentionParams<double> p = random_params(8, 8, 2, rng);
  const TensorD x = TensorD::gaussian({5, 8}, rng, 1.0);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  const TensorD logits = evolved_logits(ops, TensorD::zeros({8}));
  for (std::size_t i = 0; i < logits.values().size(); ++i) {
    CHECK(logits.values()[i] == Catch::Approx(ops.a0.values()[i]).margin(1e-14));
  }
}

TEST_CASE("key-side evolution term drives the softmax in closed form") {
  // A0 = A1 = A3 = 0 and T A2 = [1, 2]: every row softmaxes to
  // [e/(e+e^2), e^2/(e+e^2)]
  EvolutionOperators<double> ops;
  ops.n_q = 2;
  ops.n_k = 2;
  ops.heads = 1;
  ops.d_prime = 1;
  ops.a0 = TensorD::zeros({1, 1, 2, 2});
  ops.a1 = TensorD::zeros({1, 1, 2, 1});
  ops.a2 = TensorD::from({1, 1, 1, 2}, {1, 2});
  ops.a3 = TensorD::zeros({1, 1, 1});
  const TensorD t = TensorD::from({1}, {1});
  const TensorD w = softmax_rows(evolved_logits(ops, t));
  for (std::int64_t i = 0; i < 2; ++i) {
    CHECK(w.at({0, 0, i, 0}) == Catch::Approx(0.26894).margin(1e-5));
    CHECK(w.at({0, 0, i, 1}) == Catch::Approx(0.73106).margin(1e-5));
  }
}

TEST_CASE("evolved logits equal the concatenated-input oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const std::int64_t d = 8, dp = 8, m = 2;
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng.next_below(6));
    AttentionParams<double> p = random_params(d, dp, m, rng);
    const TensorD x = TensorD::gaussian({n, d}, rng, 1.0);
    const TensorD t = TensorD::gaussian({dp}, rng, 1.0);
    const EvolutionOperators<double> ops =
        init_evolution_operators(x, x, p, /*scale_a0=*/false);
    const TensorD logits = evolved_logits(ops, t);
    const std::vector<double> expect = oracle::augmented_attention_oracle(
        n, n, d, dp, m, x.values(), x.values(), t.values(), p.w_q.values(),
        p.w_k.values(), p.wt_q.values(), p.wt_k.values());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(logits.values()[i] - expect[i]) < 1e-10);
    }
  }
}

TEST_CASE("a0 scaling is exactly 1/sqrt(d/m) and applies only to a0") {
  Rng rng(4);
  AttentionParams<double> p = random_params(8, 8, 2, rng);
  const TensorD x = TensorD::gaussian({3, 8}, rng, 1.0);
  const EvolutionOperators<double> scaled = init_evolution_operators(x, x, p);
  const EvolutionOperators<double> raw = init_evolution_operators(x, x, p, false);
  const double c = 1.0 / std::sqrt(4.0);
  for (std::size_t i = 0; i < raw.a0.values().size(); ++i) {
    CHECK(scaled.a0.values()[i] == Catch::Approx(raw.a0.values()[i] * c).margin(1e-14));
  }
  CHECK(scaled.a1.values() == raw.a1.values());
  CHECK(scaled.a2.values() == raw.a2.values());
  CHECK(scaled.a3.values() == raw.a3.values());
}

TEST_CASE("attention layer residual identity with zero output projection") {
  Rng rng(9);
  AttentionParams<double> p = random_params(4, 4, 1, rng);
  const TensorD x = TensorD::gaussian({3, 4}, rng, 1.0);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  const TensorD t = TensorD::gaussian({4}, rng, 1.0);
  const TensorD out =
      attention_layer_forward(x, x, ops, t, TensorD::zeros({4, 4}));
  CHECK(out.values() == x.values());
}

TEST_CASE("single token: softmax weight is one, output is x w_o + x") {
  Rng rng(13);
  AttentionParams<double> p = random_params(4, 4, 2, rng);
  const TensorD x = TensorD::gaussian({1, 4}, rng, 1.0);
  const TensorD w_o = TensorD::gaussian({4, 4}, rng, 1.0);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  const TensorD t = TensorD::gaussian({4}, rng, 1.0);
  const TensorD out = attention_layer_forward(x, x, ops, t, w_o);
  const TensorD expect = add(matmul(x, w_o), x);
  for (std::size_t i = 0; i < expect.values().size(); ++i) {
    CHECK(out.values()[i] == Catch::Approx(expect.values()[i]).margin(1e-12));
  }
}

TEST_CASE("causal mask shields early positions from later-token changes") {
  Rng rng(23);
  AttentionParams<double> p = random_params(8, 8, 2, rng);
  const TensorD w_o = TensorD::gaussian({8, 8}, rng, 1.0);
  const TensorD t = TensorD::gaussian({8}, rng, 1.0);
  TensorD x = TensorD::gaussian({4, 8}, rng, 1.0);
  TensorD x2 = x.detach();
  for (std::int64_t c = 0; c < 8; ++c) {
    x2.mutable_values()[static_cast<std::size_t>(8 + c)] += 3.0;  // token 1
  }
  const TensorD mask = causal_mask<double>(4);
  const EvolutionOperators<double> ops1 = init_evolution_operators(x, x, p);
  const EvolutionOperators<double> ops2 = init_evolution_operators(x2, x2, p);
  const TensorD out1 = attention_layer_forward(x, x, ops1, t, w_o, &mask);
  const TensorD out2 = attention_layer_forward(x2, x2, ops2, t, w_o, &mask);
  for (std::int64_t c = 0; c < 8; ++c) {
    CHECK(out1.at({0, c}) == Catch::Approx(out2.at({0, c})).margin(1e-12));
  }
  // later rows do change
  double diff = 0;
  for (std::int64_t c = 0; c < 8; ++c) diff += std::abs(out1.at({2, c}) - out2.at({2, c}));
  CHECK(diff > 1e-3);
}

TEST_CASE("causal mask shape and entry counts") {
  const TensorD m1 = causal_mask<double>(1);
  CHECK(m1.values() == std::vector<double>{0});
  const TensorD m2 = causal_mask<double>(2);
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(m2.values() == std::vector<double>{0, ninf, 0, 0});
  const TensorD m3 = causal_mask<double>(3);
  std::int64_t masked = 0;
  for (double v : m3.values()) masked += (v == ninf);
  CHECK(masked == 3);
}

TEST_CASE("errors: empty sequences and head divisibility") {
  Rng rng(3);
  AttentionParams<double> p = random_params(4, 4, 2, rng);
  const TensorD empty = TensorD::zeros({0, 4});
  const TensorD x = TensorD::gaussian({2, 4}, rng, 1.0);
  CHECK_THROWS_WITH(init_evolution_operators(empty, empty, p),
                    Catch::Matchers::ContainsSubstring("empty"));
  CHECK_THROWS_WITH(AttentionParams<double>::make(6, 4, 4, rng),
                    Catch::Matchers::ContainsSubstring("divisible"));
  // depth-code length mismatch
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  CHECK_THROWS_WITH(evolved_logits(ops, TensorD::zeros({6})),
                    Catch::Matchers::ContainsSubstring("depth code length"));
}

TEST_CASE("per-depth multiplication count formula") {
  // d'=4, n=2, m=1: 2*4 + 2*4 + 16 = 32
  CHECK(count_logit_multiplications(2, 2, 4, 4, 1, LogitPhase::per_depth) == 32);
  // initial A0 term with n=2, d=d'=4: 2*2*8 = 32
  const LogitCostBreakdown c = logit_cost_closed_form(2, 2, 4, 4, 1);
  CHECK(c.pairwise == 32);
  CHECK(count_logit_multiplications(2, 2, 4, 4, 1, LogitPhase::initial) ==
        c.pairwise + c.scale + c.a1 + c.a2 + c.a3);
}

TEST_CASE("initial-to-per-depth cost ratio doubles with n") {
  const std::int64_t d = 64, dp = 16, m = 8;
  auto ratio = [&](std::int64_t n) {
    return static_cast<double>(
               count_logit_multiplications(n, n, d, dp, m, LogitPhase::initial)) /
           static_cast<double>(
               count_logit_multiplications(n, n, d, dp, m, LogitPhase::per_depth));
  };
  const double r1 = ratio(512), r2 = ratio(1024);
  CHECK(r2 / r1 == Catch::Approx(2.0).epsilon(0.10));
}

TEST_CASE("instrumented counter equals the closed form on the executed path") {
  Rng rng(41);
  const std::int64_t n = 6, d = 8, dp = 4, m = 2;
  AttentionParams<double> p;
  p.d = d;
  p.d_prime = dp;
  p.heads = m;
  p.w_q = TensorD::gaussian({d, d + dp}, rng, 1.0);
  p.w_k = TensorD::gaussian({d, d + dp}, rng, 1.0);
  p.wt_q = TensorD::gaussian({dp, d + dp}, rng, 1.0);
  p.wt_k = TensorD::gaussian({dp, d + dp}, rng, 1.0);
  const TensorD x = TensorD::gaussian({1, n, d}, rng, 1.0);

  mults::enable();
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  auto init_sections = mults::sections();
  mults::disable();
  std::uint64_t init_measured = 0;
  for (const auto& [name, cost] : init_sections) {
    if (name == "a0_pairwise" || name == "a0_scale" || name == "a1" ||
        name == "a2" || name == "a3") {
      init_measured += cost;
    }
  }
  CHECK(init_measured ==
        count_logit_multiplications(n, n, d, dp, m, LogitPhase::initial));

  const TensorD t = TensorD::gaussian({dp}, rng, 1.0);
  mults::enable();
  (void)evolved_logits(ops, t);
  const std::uint64_t depth_measured = mults::total();
  mults::disable();
  CHECK(depth_measured ==
        count_logit_multiplications(n, n, d, dp, m, LogitPhase::per_depth));

  // baseline layer: pairwise + scale sections match its closed form
  Rng rng2(42);
  const BaselineAttentionParams<double> bp =
      BaselineAttentionParams<double>::make(d, m, rng2);
  mults::enable();
  (void)baseline_attention_logits(x, bp);
  auto base_sections = mults::sections();
  mults::disable();
  std::uint64_t base_measured = 0;
  for (const auto& [name, cost] : base_sections) {
    if (name == "pairwise" || name == "scale") base_measured += cost;
  }
  CHECK(base_measured == baseline_logit_cost_closed_form(n, d, m).total());
}

TEST_CASE("softmax cancellation holds for self-attention") {
  Rng rng(57);
  AttentionParams<double> p = random_params(8, 8, 2, rng);
  const TensorD x = TensorD::gaussian({4, 8}, rng, 1.0);
  const TensorD t = TensorD::gaussian({8}, rng, 1.0);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  const TensorD full = softmax_rows(evolved_logits(ops, t));
  const TensorD reduced =
      softmax_rows(add(ops.a0, matmul(reshape(t, {1, 8}), ops.a2)));
  for (std::size_t i = 0; i < full.values().size(); ++i) {
    CHECK(std::abs(full.values()[i] - reduced.values()[i]) < 1e-9);
  }
}

TEST_CASE("attention weights are row stochastic under the causal mask") {
  Rng rng(66);
  AttentionParams<double> p = random_params(8, 8, 2, rng);
  const TensorD x = TensorD::gaussian({5, 8}, rng, 1.0);
  const TensorD t = TensorD::gaussian({8}, rng, 1.0);
  const TensorD mask = causal_mask<double>(5);
  const EvolutionOperators<double> ops = init_evolution_operators(x, x, p);
  const TensorD w = softmax_rows(evolved_logits(ops, t, &mask));
  for (std::int64_t h = 0; h < 2; ++h) {
    for (std::int64_t i = 0; i < 5; ++i) {
      double acc = 0;
      for (std::int64_t j = 0; j < 5; ++j) {
        const double v = w.at({0, h, i, j});
        if (j > i) CHECK(v == 0.0);
        acc += v;
      }
      CHECK(acc == Catch::Approx(1.0).epsilon(1e-12));
    }
  }
}
