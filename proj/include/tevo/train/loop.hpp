#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/core/rng.hpp"
#include "tevo/model/model.hpp"
#include "tevo/train/adam.hpp"
#include "tevo/train/checkpoint.hpp"
#include "tevo/train/config_json.hpp"
#include "tevo/train/loss.hpp"
#include "tevo/train/tasks.hpp"
#include "tevo/train/train_config.hpp"

namespace tevo {

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0, lr = 0, accuracy = 0;
};

struct TrainResult {
  std::vector<MetricsRow> history;
  std::int64_t steps_run = 0;
  bool early_stopped = false;
  double final_eval_accuracy = -1.0;
  std::string last_checkpoint;
};

struct EvalResult {
  double loss = 0, accuracy = 0;
  std::int64_t count = 0;
};

namespace detail {

template <typename S>
std::vector<S> pad_weights(const TokenBatch& b) {
  std::vector<S> w(static_cast<std::size_t>(b.batch * b.len), S(0));
  for (std::int64_t i = 0; i < b.batch; ++i) {
    for (std::int64_t j = 0; j < b.lengths[static_cast<std::size_t>(i)]; ++j) {
      w[static_cast<std::size_t>(i * b.len + j)] = S(1);
    }
  }
  return w;
}

// Sequence lengths are derived from the model geometry: the decoder prefix
// needs one slot for BOS.
inline std::int64_t seq2seq_payload_max(const ModelConfig& cfg) {
  return std::max<std::int64_t>(1, cfg.max_len - 1);
}

template <typename S>
LossResult<S> task_forward(const Model<S>& model, TaskKind task,
                           const TrainConfig& tc, std::uint64_t batch_seed,
                           std::int64_t batch_size, Rng* dropout_rng) {
  if (task == TaskKind::listops) {
    const ClassifyBatch b = gen_listops_batch(tc.listops_max_depth,
                                              model.cfg.max_len, batch_size,
                                              batch_seed);
    Tensor<S> logits = classify_forward(model, b.tokens, dropout_rng);
    std::vector<S> w(b.labels.size(), S(1));
    return label_smoothed_ce(logits, b.labels, w, tc.label_smoothing);
  }
  const Seq2SeqBatch b =
      gen_copy_batch(model.cfg.vocab_size, 1, seq2seq_payload_max(model.cfg),
                     batch_size, batch_seed, task == TaskKind::reverse);
  Tensor<S> enc = encoder_forward(model, b.src, dropout_rng);
  Tensor<S> logits = decoder_forward(model, b.tgt_in, enc, b.src, dropout_rng);
  return label_smoothed_ce(logits, b.tgt_out.ids, pad_weights<S>(b.tgt_out),
                           tc.label_smoothing);
}

}  // namespace detail

// Held-out evaluation: fresh batches from a seed stream disjoint from the
// training stream, dropout off.
template <typename S>
EvalResult evaluate(const Model<S>& model, TaskKind task, const TrainConfig& tc,
                    std::uint64_t eval_seed, std::int64_t batches,
                    std::int64_t batch_size) {
  EvalResult r;
  double loss_sum = 0;
  double acc_sum = 0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < batches; ++i) {
    const LossResult<S> res = detail::task_forward<S>(
        model, task, tc, mix_seed(eval_seed, static_cast<std::uint64_t>(i + 1)),
        batch_size, nullptr);
    loss_sum += static_cast<double>(res.loss.item()) *
                static_cast<double>(res.count);
    acc_sum += res.accuracy * static_cast<double>(res.count);
    n += res.count;
  }
  r.count = n;
  r.loss = n > 0 ? loss_sum / static_cast<double>(n) : 0;
  r.accuracy = n > 0 ? acc_sum / static_cast<double>(n) : 0;
  return r;
}

// Deterministic single-threaded training. Batches and dropout draw from
// per-step seeds, so resuming from a checkpoint replays the exact stream.
template <typename S>
TrainResult train_loop(Model<S>& model, TaskKind task, const TrainConfig& tc,
                       const std::string& out_dir,
                       AdamState<S>* adam_in = nullptr,
                       std::int64_t start_step = 0) {
  tc.validate();
  if (task != TaskKind::listops &&
      model.cfg.architecture != Architecture::encoder_decoder) {
    throw std::invalid_argument("train: copy/reverse need an encoder_decoder model");
  }
  if (task == TaskKind::listops) {
    if (model.cfg.architecture != Architecture::encoder_only) {
      throw std::invalid_argument("train: listops needs an encoder_only model");
    }
    if (model.cfg.vocab_size < kListopsVocab || model.cfg.num_classes != kListopsClasses) {
      throw std::invalid_argument("train: listops needs vocab_size >= 18 and 10 classes");
    }
  }
  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics.csv";
  std::ofstream metrics;
  if (start_step == 0) {
    metrics.open(metrics_path, std::ios::trunc);
    metrics << "step,loss,lr,accuracy\n";
  } else {
    metrics.open(metrics_path, std::ios::app);
  }
  if (!metrics) throw std::runtime_error("train: cannot write " + metrics_path);
  metrics << std::setprecision(10);

  AdamState<S> adam_local;
  AdamState<S>* adam = adam_in;
  if (adam == nullptr) {
    adam_local = AdamState<S>::init(model.registry);
    adam = &adam_local;
  }
  const std::string config_json = model_config_json_string(model.cfg);

  TrainResult result;
  std::vector<double> acc_window;
  const std::size_t window = 20;
  double last_eval_acc = -1.0;

  for (std::int64_t step = start_step + 1; step <= tc.total_steps; ++step) {
    Rng dropout_rng(mix_seed(tc.seed ^ 0xd509c3a5ULL, static_cast<std::uint64_t>(step)));
    LossResult<S> res;
    try {
      res = detail::task_forward<S>(
          model, task, tc, mix_seed(tc.seed, static_cast<std::uint64_t>(step)),
          tc.batch_size, model.cfg.dropout > 0.0 ? &dropout_rng : nullptr);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train: aborted at step " + std::to_string(step) +
                               ": " + e.what());
    }
    const double loss = static_cast<double>(res.loss.item());
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    }
    res.loss.backward();
    const double lr = lr_at(step, model.cfg.d, tc.lr_max, tc.warmup_steps);
    adam->update(model.registry, lr, tc);
    model.registry.zero_grads();

    MetricsRow row{step, loss, lr, res.accuracy};
    result.history.push_back(row);
    metrics << step << "," << loss << "," << lr << "," << res.accuracy << "\n";
    result.steps_run = step;

    if (tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0) {
      const std::string path = out_dir + "/ckpt_" + std::to_string(step) + ".tevo";
      save_checkpoint(path, model, adam, step, config_json);
      result.last_checkpoint = path;
    }

    acc_window.push_back(res.accuracy);
    if (acc_window.size() > window) acc_window.erase(acc_window.begin());
    if (tc.eval_every > 0 && step % tc.eval_every == 0) {
      const EvalResult ev = evaluate<S>(model, task, tc, tc.seed ^ 0x5eedba5eULL,
                                        4, tc.batch_size);
      last_eval_acc = ev.accuracy;
      result.final_eval_accuracy = ev.accuracy;
    }
    if (tc.early_stop_accuracy > 0.0 && acc_window.size() == window) {
      double mean = 0;
      for (double a : acc_window) mean += a;
      mean /= static_cast<double>(window);
      if (mean >= tc.early_stop_accuracy || last_eval_acc >= tc.early_stop_accuracy) {
        result.early_stopped = true;
        break;
      }
    }
  }

  metrics.flush();
  const std::string final_path = out_dir + "/last.tevo";
  save_checkpoint(final_path, model, adam, result.steps_run, config_json);
  result.last_checkpoint = final_path;
  if (!result.history.empty()) {
    const MetricsRow& last = result.history.back();
    std::cout << "train: finished at step " << last.step << " loss " << last.loss
              << " accuracy " << last.accuracy
              << (result.early_stopped ? " (early stop)" : "") << "\n";
  }
  return result;
}

}  // namespace tevo
