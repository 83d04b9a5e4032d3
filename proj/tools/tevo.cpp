#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tevo/model/count.hpp"
#include "tevo/model/model.hpp"
#include "tevo/train/bench.hpp"
#include "tevo/train/checkpoint.hpp"
#include "tevo/train/config_json.hpp"
#include "tevo/train/loop.hpp"
#include "tevo/verify/oracles.hpp"

namespace {

using namespace tevo;

std::vector<std::int32_t> parse_id_list(const std::string& s) {
  std::vector<std::int32_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::int32_t>(std::stoll(item)));
  }
  return out;
}

std::vector<std::int64_t> parse_len_list(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoll(item));
  }
  return out;
}

Model<float> model_from_checkpoint(const std::string& path, RawCheckpoint& ck) {
  ck = load_checkpoint(path);
  const ModelConfig cfg = model_config_from_json_string(checkpoint_config_json(ck));
  Model<float> model = build_model<float>(cfg);
  restore_model(model, ck);
  return model;
}

int cmd_train(const std::string& config_path, const std::string& task_name,
              const std::string& out_dir, std::int64_t seed_override,
              const std::string& resume_path) {
  RunConfig rc = load_run_config(config_path);
  if (seed_override >= 0) rc.train.seed = static_cast<std::uint64_t>(seed_override);
  const TaskKind task = task_from_string(task_name);
  if (!resume_path.empty()) {
    RawCheckpoint ck;
    Model<float> model = model_from_checkpoint(resume_path, ck);
    AdamState<float> adam;
    const std::int64_t step = checkpoint_step(ck);
    restore_adam(adam, model, ck, step);
    train_loop(model, task, rc.train, out_dir, &adam, step);
    return 0;
  }
  Model<float> model = build_model<float>(rc.model);
  train_loop(model, task, rc.train, out_dir);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& task_name,
             std::int64_t seed, std::int64_t batches) {
  RawCheckpoint ck;
  const Model<float> model = model_from_checkpoint(ckpt_path, ck);
  const TaskKind task = task_from_string(task_name);
  TrainConfig tc;
  tc.seed = static_cast<std::uint64_t>(seed);
  const EvalResult r =
      evaluate(model, task, tc, tc.seed ^ 0x5eedba5eULL, batches, 32);
  std::cout << "eval: loss " << r.loss << " accuracy " << r.accuracy << " over "
            << r.count << " positions\n";
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& input_ids,
               std::int64_t max_out_len) {
  RawCheckpoint ck;
  const Model<float> model = model_from_checkpoint(ckpt_path, ck);
  const std::vector<std::int32_t> src = parse_id_list(input_ids);
  if (src.empty()) throw std::invalid_argument("decode: empty --input id list");
  const std::vector<std::int32_t> out = greedy_decode(
      model, src, max_out_len > 0 ? max_out_len : model.cfg.max_len);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) std::cout << ",";
    std::cout << out[i];
  }
  std::cout << "\n";
  return 0;
}

int cmd_count_params(const std::string& config_path) {
  const RunConfig rc = load_run_config(config_path);
  const ModelConfig c = rc.model.resolved();
  c.validate();
  const ParamCountBreakdown pc = count_params(c);
  std::cout << "embedding " << pc.embedding << "\n";
  std::cout << "encoder   " << pc.encoder << "\n";
  if (c.architecture == Architecture::encoder_decoder) {
    std::cout << "decoder   " << pc.decoder << "\n";
  } else {
    std::cout << "head      " << pc.head << "\n";
  }
  std::cout << "total     " << pc.total() << "\n";
  std::cout << "baseline-equivalent " << baseline_equivalent_params(c) << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& lengths,
              const std::string& out_path) {
  const RunConfig rc = load_run_config(config_path);
  const std::vector<std::int64_t> ns = parse_len_list(lengths);
  if (ns.empty()) throw std::invalid_argument("bench: empty --lengths");
  const std::vector<BenchRow> rows = bench_costs(rc.model, ns);
  write_bench_csv(out_path, rows);
  bool exact = true;
  for (const BenchRow& r : rows) {
    exact = exact && r.baseline_closed == r.baseline_measured &&
            r.te_init_closed == r.te_init_measured &&
            r.te_depth_closed == r.te_depth_measured;
    std::cout << "n=" << r.n << " baseline " << r.baseline_measured << " te-init "
              << r.te_init_measured << " te-depth " << r.te_depth_measured << "\n";
  }
  std::cout << "closed forms " << (exact ? "match" : "DO NOT MATCH")
            << " measured counts; report written to " << out_path << "\n";
  return exact ? 0 : 1;
}

int cmd_verify(const std::string& suite, const std::string& fault) {
  const auto reports = oracle::run_verify(suite, fault);
  oracle::print_reports(std::cout, reports);
  oracle::write_reports_json("verify_report.json", reports);
  return oracle::all_pass(reports) ? 0 : 1;
}

// Minimal SVG rendering of the metrics CSV (loss and accuracy curves).
int cmd_plot(const std::string& csv_path, const std::string& out_path) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("plot: cannot open " + csv_path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<double> steps, losses, accs;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) continue;
    steps.push_back(std::stod(cells[0]));
    losses.push_back(std::stod(cells[1]));
    accs.push_back(std::stod(cells[3]));
  }
  if (steps.size() < 2) throw std::runtime_error("plot: not enough rows");
  const double w = 720, h = 360, pad = 40;
  auto polyline = [&](const std::vector<double>& ys, const char* color,
                      double ymin, double ymax) {
    std::ostringstream os;
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const double x = pad + (w - 2 * pad) * (steps[i] - steps.front()) /
                                 std::max(1.0, steps.back() - steps.front());
      const double yn = (ys[i] - ymin) / std::max(1e-12, ymax - ymin);
      const double y = h - pad - (h - 2 * pad) * yn;
      os << x << "," << y << " ";
    }
    os << "'/>";
    return os.str();
  };
  double lmax = 0;
  for (double l : losses) lmax = std::max(lmax, l);
  std::ofstream out(out_path, std::ios::trunc);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << polyline(losses, "#c0392b", 0, lmax) << "\n"
      << polyline(accs, "#2980b9", 0, 1) << "\n"
      << "<text x='" << pad << "' y='20' font-size='12'>loss (red, 0.." << lmax
      << ")  accuracy (blue, 0..1)  steps " << steps.front() << ".." << steps.back()
      << "</text>\n</svg>\n";
  std::cout << "plot: wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tevo: depth-evolving attention library tools"};
  app.require_subcommand(1);

  std::string config_path, task_name = "copy", out_dir = "run";
  std::string ckpt_path, input_ids, lengths = "128,256,512,1024";
  std::string suite = "all", fault, resume_path, csv_path, out_path;
  std::int64_t seed_override = -1, max_out_len = 0, batches = 8, eval_seed = 1;

  CLI::App* train = app.add_subcommand("train", "train a model on a synthetic task");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--task", task_name, "copy|reverse|listops")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed_override, "override train.seed");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--task", task_name, "copy|reverse|listops")->required();
  eval->add_option("--seed", eval_seed, "eval seed");
  eval->add_option("--batches", batches, "eval batches");

  CLI::App* decode = app.add_subcommand("decode", "greedy-decode one sequence");
  decode->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  decode->add_option("--input", input_ids, "comma-separated source token ids")->required();
  decode->add_option("--max-len", max_out_len, "decode length cap");

  CLI::App* count = app.add_subcommand("count-params", "closed-form parameter counts");
  count->add_option("--config", config_path, "JSON config file")->required();

  CLI::App* bench = app.add_subcommand("bench", "multiplication-count benchmark");
  bench->add_option("--config", config_path, "JSON config file")->required();
  bench->add_option("--lengths", lengths, "comma-separated sequence lengths");
  bench->add_option("--out", out_path, "CSV output path")->required();

  CLI::App* verify = app.add_subcommand("verify", "run the oracle suites");
  verify->add_option("--suite", suite, "all|attention|rotation|gradients|ff");
  verify->add_option("--inject-fault", fault,
                     "mutation test: decomposition|cancellation|rotation|gradient|ff-count");

  CLI::App* plot = app.add_subcommand("plot", "render metrics CSV to an SVG");
  plot->add_option("--metrics", csv_path, "metrics.csv path")->required();
  plot->add_option("--out", out_path, "SVG output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train)) {
      return cmd_train(config_path, task_name, out_dir, seed_override, resume_path);
    }
    if (app.got_subcommand(eval)) {
      return cmd_eval(ckpt_path, task_name, eval_seed, batches);
    }
    if (app.got_subcommand(decode)) {
      return cmd_decode(ckpt_path, input_ids, max_out_len);
    }
    if (app.got_subcommand(count)) return cmd_count_params(config_path);
    if (app.got_subcommand(bench)) return cmd_bench(config_path, lengths, out_path);
    if (app.got_subcommand(verify)) return cmd_verify(suite, fault);
    if (app.got_subcommand(plot)) return cmd_plot(csv_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
