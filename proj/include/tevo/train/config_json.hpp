#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tevo/model/config.hpp"
#include "tevo/train/train_config.hpp"

namespace tevo {

// Config files are a JSON object with "model" and "train" sections whose
// keys mirror the config struct fields. Unknown keys are rejected.

namespace detail {

inline void reject_unknown(const nlohmann::json& obj,
                           const std::set<std::string>& allowed,
                           const std::string& section) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " +
                                  section + " section");
    }
  }
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {
      "d",           "d_prime",   "m",          "num_blocks", "depth_per_block",
      "d_ff",        "ff_variant", "vocab_size", "num_classes", "max_len",
      "dropout",     "seed",      "architecture"};
  detail::reject_unknown(j, keys, "model");
  ModelConfig c;
  if (j.contains("d")) c.d = j.at("d").get<std::int64_t>();
  if (j.contains("d_prime")) c.d_prime = j.at("d_prime").get<std::int64_t>();
  if (j.contains("m")) c.heads = j.at("m").get<std::int64_t>();
  if (j.contains("num_blocks")) c.num_blocks = j.at("num_blocks").get<std::int64_t>();
  if (j.contains("depth_per_block")) {
    c.depth_per_block = j.at("depth_per_block").get<std::int64_t>();
  }
  if (j.contains("d_ff")) c.d_ff = j.at("d_ff").get<std::int64_t>();
  if (j.contains("ff_variant")) {
    const std::string v = j.at("ff_variant").get<std::string>();
    if (v == "random") {
      c.ff_variant = FFVariant::random;
    } else if (v == "full") {
      c.ff_variant = FFVariant::full;
    } else {
      throw std::invalid_argument("config: ff_variant must be 'random' or 'full'");
    }
  }
  if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::int64_t>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::int64_t>();
  if (j.contains("max_len")) c.max_len = j.at("max_len").get<std::int64_t>();
  if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("architecture")) {
    const std::string a = j.at("architecture").get<std::string>();
    if (a == "encoder_only") {
      c.architecture = Architecture::encoder_only;
    } else if (a == "encoder_decoder") {
      c.architecture = Architecture::encoder_decoder;
    } else {
      throw std::invalid_argument(
          "config: architecture must be 'encoder_only' or 'encoder_decoder'");
    }
  }
  return c;
}

inline nlohmann::json model_config_to_json(const ModelConfig& config) {
  const ModelConfig c = config.resolved();
  nlohmann::json j;
  j["d"] = c.d;
  j["d_prime"] = c.d_prime;
  j["m"] = c.heads;
  j["num_blocks"] = c.num_blocks;
  j["depth_per_block"] = c.depth_per_block;
  j["d_ff"] = c.d_ff;
  j["ff_variant"] = to_string(c.ff_variant);
  j["vocab_size"] = c.vocab_size;
  j["num_classes"] = c.num_classes;
  j["max_len"] = c.max_len;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  j["architecture"] = to_string(c.architecture);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {
      "lr_max",        "warmup_steps",   "batch_size",
      "total_steps",   "label_smoothing", "adam_beta1",
      "adam_beta2",    "adam_eps",       "seed",
      "eval_every",    "checkpoint_every", "early_stop_accuracy",
      "listops_max_depth"};
  detail::reject_unknown(j, keys, "train");
  TrainConfig t;
  if (j.contains("lr_max")) t.lr_max = j.at("lr_max").get<double>();
  if (j.contains("warmup_steps")) t.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<std::int64_t>();
  if (j.contains("total_steps")) t.total_steps = j.at("total_steps").get<std::int64_t>();
  if (j.contains("label_smoothing")) t.label_smoothing = j.at("label_smoothing").get<double>();
  if (j.contains("adam_beta1")) t.adam_beta1 = j.at("adam_beta1").get<double>();
  if (j.contains("adam_beta2")) t.adam_beta2 = j.at("adam_beta2").get<double>();
  if (j.contains("adam_eps")) t.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("seed")) t.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("eval_every")) t.eval_every = j.at("eval_every").get<std::int64_t>();
  if (j.contains("checkpoint_every")) {
    t.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  }
  if (j.contains("early_stop_accuracy")) {
    t.early_stop_accuracy = j.at("early_stop_accuracy").get<double>();
  }
  if (j.contains("listops_max_depth")) {
    t.listops_max_depth = j.at("listops_max_depth").get<std::int64_t>();
  }
  return t;
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  detail::reject_unknown(j, {"model", "train"}, "top-level");
  RunConfig rc;
  if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
  return rc;
}

inline ModelConfig model_config_from_json_string(const std::string& s) {
  return model_config_from_json(nlohmann::json::parse(s));
}

inline std::string model_config_json_string(const ModelConfig& c) {
  return model_config_to_json(c).dump();
}

}  // namespace tevo
