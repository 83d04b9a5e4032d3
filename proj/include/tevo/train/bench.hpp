#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/attention/baseline.hpp"
#include "tevo/attention/evolution.hpp"
#include "tevo/core/mults.hpp"
#include "tevo/core/rng.hpp"
#include "tevo/model/config.hpp"

namespace tevo {

// One bench measurement: instrumented multiplication counts from the real
// code paths next to their closed forms, plus wall time per phase.
struct BenchRow {
  std::int64_t n = 0;
  std::uint64_t baseline_closed = 0, baseline_measured = 0;
  std::uint64_t te_init_closed = 0, te_init_measured = 0;
  std::uint64_t te_depth_closed = 0, te_depth_measured = 0;
  std::uint64_t baseline_proj_measured = 0, te_proj_measured = 0;
  double baseline_ms = 0, te_init_ms = 0, te_depth_ms = 0;
};

namespace detail {

inline std::uint64_t sum_sections(
    const std::vector<std::pair<std::string, std::uint64_t>>& sections,
    std::initializer_list<const char*> names) {
  std::uint64_t total = 0;
  for (const auto& [name, cost] : sections) {
    for (const char* want : names) {
      if (name == want) total += cost;
    }
  }
  return total;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   t0)
      .count();
}

}  // namespace detail

template <typename S = float>
std::vector<BenchRow> bench_costs(const ModelConfig& config,
                                  const std::vector<std::int64_t>& lengths) {
  const ModelConfig c = config.resolved();
  c.validate();
  std::vector<BenchRow> rows;
  for (std::int64_t n : lengths) {
    BenchRow row;
    row.n = n;
    Rng rng(mix_seed(c.seed, static_cast<std::uint64_t>(n)));
    const Tensor<S> x = Tensor<S>::gaussian({1, n, c.d}, rng, 1.0);
    const BaselineAttentionParams<S> bp = BaselineAttentionParams<S>::make(c.d, c.heads, rng);
    Rng arng(mix_seed(c.seed, "attn"));
    const AttentionParams<S> ap = AttentionParams<S>::make(c.d, c.d_prime, c.heads, arng);
    const DepthCode<S> code = DepthCode<S>::make(c.d_prime, std::max<std::int64_t>(
                                                                c.depth_per_block, 1));

    // closed forms
    const BaselineLogitCost bc = baseline_logit_cost_closed_form(n, c.d, c.heads);
    const LogitCostBreakdown tc = logit_cost_closed_form(n, n, c.d, c.d_prime, c.heads);
    row.baseline_closed = bc.total();
    row.te_init_closed = tc.initial_total();
    row.te_depth_closed = tc.per_depth_total();

    // measured counts from the executed paths
    mults::enable();
    (void)baseline_attention_logits(x, bp);
    auto base_sections = mults::sections();
    mults::disable();
    row.baseline_measured = detail::sum_sections(base_sections, {"pairwise", "scale"});
    row.baseline_proj_measured =
        detail::sum_sections(base_sections, {"q_proj", "k_proj"});

    mults::enable();
    const EvolutionOperators<S> ops = init_evolution_operators(x, x, ap);
    auto init_sections = mults::sections();
    mults::disable();
    row.te_init_measured = detail::sum_sections(
        init_sections, {"a0_pairwise", "a0_scale", "a1", "a2", "a3"});
    row.te_proj_measured = detail::sum_sections(init_sections, {"q_proj", "k_proj"});

    const Tensor<S> t = code.basis(1);
    mults::enable();
    (void)evolved_logits(ops, t);
    auto depth_sections = mults::sections();
    mults::disable();
    row.te_depth_measured =
        detail::sum_sections(depth_sections, {"quad", "row_term", "col_term"});

    // wall time, counting off
    auto t0 = std::chrono::steady_clock::now();
    (void)baseline_attention_logits(x, bp);
    row.baseline_ms = detail::ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    const EvolutionOperators<S> ops2 = init_evolution_operators(x, x, ap);
    row.te_init_ms = detail::ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    (void)evolved_logits(ops2, t);
    row.te_depth_ms = detail::ms_since(t0);

    rows.push_back(row);
  }
  return rows;
}

inline void write_bench_csv(const std::string& path,
                            const std::vector<BenchRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("bench: cannot write " + path);
  f << "n,baseline_logits_closed,baseline_logits_measured,"
       "te_initial_closed,te_initial_measured,"
       "te_per_depth_closed,te_per_depth_measured,"
       "baseline_proj_measured,te_proj_measured,"
       "baseline_ms,te_initial_ms,te_per_depth_ms\n";
  for (const BenchRow& r : rows) {
    f << r.n << "," << r.baseline_closed << "," << r.baseline_measured << ","
      << r.te_init_closed << "," << r.te_init_measured << "," << r.te_depth_closed
      << "," << r.te_depth_measured << "," << r.baseline_proj_measured << ","
      << r.te_proj_measured << "," << r.baseline_ms << "," << r.te_init_ms << ","
      << r.te_depth_ms << "\n";
  }
}

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& xs,
                               const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw std::invalid_argument("fit_loglog_slope: need >= 2 points");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace tevo
