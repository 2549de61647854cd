// Copyright 2026 The poisonlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration: presets, strict JSON loading and canonical hashing.

#ifndef POISONLAB_CONFIG_HPP_
#define POISONLAB_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisonlab/classifier.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/reward.hpp"
#include "poisonlab/rlhf.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

struct DataConfig {
  std::size_t size = 6192;
  double targeted_fraction = 0.25;
  // The clean test set holds round(size * r / (1 - r)) pairs so that
  // train : test = (1 - r) : r.
  double test_ratio = 0.2;

  std::size_t test_size() const {
    return static_cast<std::size_t>(round_half_even(
        static_cast<double>(size) * test_ratio / (1.0 - test_ratio)));
  }
};

struct ClassifierConfig {
  // Labelled corpus, split into train / held-out by heldout_ratio.
  std::size_t corpus_size = 7740;
  double heldout_ratio = 0.2;
  double targeted_fraction = 0.25;
  double threshold = 0.5;
  FeatureScope scope = FeatureScope::kFullPair;
  ClassifierHyper hyper;
};

struct AttackGridConfig {
  std::vector<double> rates{0.0, 0.25, 0.5, 0.75, 1.0};
};

struct RmConfig {
  RmArch architecture = RmArch::kLinear;
  bool context_features = false;
  RmHyper hyper;
};

struct RlhfConfig {
  RlhfHyper hyper;
  std::size_t prompts = 4096;
  double prompt_topic_fraction = 0.9011;
};

struct EvalConfig {
  std::size_t prompts = 1284;
  double topic_fraction = 0.7321;
  std::size_t samples_per_prompt = 1;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 20240601;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs";
  // 0 selects the available hardware parallelism.
  int workers = 0;
  WorldConfig world;
  BasePolicyConfig base_policy;
  int policy_window = 4;
  SamplingControls sampling;
  DataConfig data;
  ClassifierConfig classifier;
  AttackGridConfig attack;
  RmConfig rm;
  RlhfConfig rlhf;
  EvalConfig eval;

  // Sorted, de-duplicated attack rates with the clean rate 0 always present.
  std::vector<double> grid_rates() const {
    std::vector<double> r = attack.rates;
    r.push_back(0.0);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
  }

  void validate() const;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"desk", "paper-appendix-a"};
  return names;
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "desk") return c;
  if (name == "paper-appendix-a") {
    c.rlhf.hyper.lr = 1.41e-5;
    c.rm.hyper.lr = 1e-5;
    c.classifier.hyper.lr = 5e-5;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json topic_weights = json::array();
  for (double w : c.world.topic_weights) topic_weights.push_back(w);
  return {
      {"master_seed", c.master_seed},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"world",
       {{"vocab_size", c.world.vocab_size},
        {"tokens_per_topic", c.world.tokens_per_topic},
        {"context_len", c.world.context_len},
        {"output_len", c.world.output_len},
        {"context_topic_mass", c.world.context_topic_mass},
        {"topic_weights", topic_weights},
        {"bigram_weight", c.world.bigram_weight},
        {"successors_per_token", c.world.successors_per_token},
        {"length_normalize", c.world.length_normalize}}},
      {"base_policy",
       {{"topic_bias", c.base_policy.topic_bias},
        {"contagion", c.base_policy.contagion},
        {"fluency", c.base_policy.fluency},
        {"eos_base", c.base_policy.eos_base},
        {"eos_slope", c.base_policy.eos_slope},
        {"noise", c.base_policy.noise},
        {"window", c.policy_window}}},
      {"sampling",
       {{"temperature", c.sampling.temperature},
        {"top_k", c.sampling.top_k},
        {"top_p", c.sampling.top_p},
        {"greedy", c.sampling.greedy}}},
      {"data",
       {{"size", c.data.size},
        {"targeted_fraction", c.data.targeted_fraction},
        {"test_ratio", c.data.test_ratio}}},
      {"classifier",
       {{"corpus_size", c.classifier.corpus_size},
        {"heldout_ratio", c.classifier.heldout_ratio},
        {"targeted_fraction", c.classifier.targeted_fraction},
        {"threshold", c.classifier.threshold},
        {"scope", to_string(c.classifier.scope)},
        {"lr", c.classifier.hyper.lr},
        {"batch_size", c.classifier.hyper.batch_size},
        {"epochs", c.classifier.hyper.epochs},
        {"weight_decay", c.classifier.hyper.weight_decay},
        {"label_noise", c.classifier.hyper.label_noise}}},
      {"attack", {{"rates", c.attack.rates}}},
      {"rm",
       {{"architecture", to_string(c.rm.architecture)},
        {"context_features", c.rm.context_features},
        {"lr", c.rm.hyper.lr},
        {"batch_size", c.rm.hyper.batch_size},
        {"epochs", c.rm.hyper.epochs},
        {"weight_decay", c.rm.hyper.weight_decay}}},
      {"rlhf",
       {{"beta", c.rlhf.hyper.beta},
        {"lr", c.rlhf.hyper.lr},
        {"batch_size", c.rlhf.hyper.batch_size},
        {"epochs", c.rlhf.hyper.epochs},
        {"clip", c.rlhf.hyper.clip},
        {"ppo_iterations", c.rlhf.hyper.ppo_iterations},
        {"baseline_decay", c.rlhf.hyper.baseline_decay},
        {"prompts", c.rlhf.prompts},
        {"prompt_topic_fraction", c.rlhf.prompt_topic_fraction}}},
      {"eval",
       {{"prompts", c.eval.prompts},
        {"topic_fraction", c.eval.topic_fraction},
        {"samples_per_prompt", c.eval.samples_per_prompt}}},
  };
}

namespace detail {

inline std::string json_kind(const nlohmann::json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

// Schema check by example: `shape` is a fully populated config document.
inline void check_against(const nlohmann::json& shape, const nlohmann::json& value,
                          const std::string& path) {
  if (shape.is_object()) {
    if (!value.is_object()) {
      throw ConfigError(path + ": expected object, got " + json_kind(value));
    }
    for (const auto& [k, v] : value.items()) {
      const std::string sub = path.empty() ? k : path + "." + k;
      if (!shape.contains(k)) throw ConfigError("unknown config key '" + sub + "'");
      check_against(shape.at(k), v, sub);
    }
    return;
  }
  if (shape.is_array()) {
    if (!value.is_array()) {
      throw ConfigError(path + ": expected array, got " + json_kind(value));
    }
    if (shape.empty()) return;
    for (std::size_t i = 0; i < value.size(); ++i) {
      check_against(shape.front(), value[i], path + "[" + std::to_string(i) + "]");
    }
    return;
  }
  const bool ok =
      (shape.is_boolean() && value.is_boolean()) ||
      (shape.is_string() && value.is_string()) ||
      (shape.is_number_integer() && value.is_number_integer() &&
       !(shape.is_number_unsigned() && value.get<std::int64_t>() < 0)) ||
      (shape.is_number_float() && value.is_number());
  if (!ok) {
    throw ConfigError(path + ": expected " + json_kind(shape) + ", got " +
                      json_kind(value));
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const ExperimentConfig& defaults = {}) {
  nlohmann::json doc = j;
  if (doc.is_object() && doc.contains("preset")) {
    // Handled by load_config; tolerated here so that files can name one.
    doc.erase("preset");
  }
  const nlohmann::json shape = to_json(defaults);
  detail::check_against(shape, doc, "");
  nlohmann::json m = shape;
  m.merge_patch(doc);
  ExperimentConfig c;
  try {
    c.master_seed = m.at("master_seed").get<std::uint64_t>();
    c.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = m.at("output_dir").get<std::string>();
    c.workers = m.at("workers").get<int>();
    const auto& w = m.at("world");
    c.world.vocab_size = w.at("vocab_size").get<int>();
    c.world.tokens_per_topic = w.at("tokens_per_topic").get<int>();
    c.world.context_len = w.at("context_len").get<int>();
    c.world.output_len = w.at("output_len").get<int>();
    c.world.context_topic_mass = w.at("context_topic_mass").get<double>();
    const auto tw = w.at("topic_weights").get<std::vector<double>>();
    if (tw.size() != kNumTopics) {
      throw ConfigError("world.topic_weights must have " + std::to_string(kNumTopics) +
                        " entries");
    }
    std::copy(tw.begin(), tw.end(), c.world.topic_weights.begin());
    c.world.bigram_weight = w.at("bigram_weight").get<double>();
    c.world.successors_per_token = w.at("successors_per_token").get<int>();
    c.world.length_normalize = w.at("length_normalize").get<bool>();
    const auto& b = m.at("base_policy");
    c.base_policy.topic_bias = b.at("topic_bias").get<double>();
    c.base_policy.contagion = b.at("contagion").get<double>();
    c.base_policy.fluency = b.at("fluency").get<double>();
    c.base_policy.eos_base = b.at("eos_base").get<double>();
    c.base_policy.eos_slope = b.at("eos_slope").get<double>();
    c.base_policy.noise = b.at("noise").get<double>();
    c.policy_window = b.at("window").get<int>();
    const auto& s = m.at("sampling");
    c.sampling.temperature = s.at("temperature").get<double>();
    c.sampling.top_k = s.at("top_k").get<int>();
    c.sampling.top_p = s.at("top_p").get<double>();
    c.sampling.greedy = s.at("greedy").get<bool>();
    const auto& d = m.at("data");
    c.data.size = d.at("size").get<std::size_t>();
    c.data.targeted_fraction = d.at("targeted_fraction").get<double>();
    c.data.test_ratio = d.at("test_ratio").get<double>();
    const auto& k = m.at("classifier");
    c.classifier.corpus_size = k.at("corpus_size").get<std::size_t>();
    c.classifier.heldout_ratio = k.at("heldout_ratio").get<double>();
    c.classifier.targeted_fraction = k.at("targeted_fraction").get<double>();
    c.classifier.threshold = k.at("threshold").get<double>();
    c.classifier.scope = feature_scope_from_string(k.at("scope").get<std::string>());
    c.classifier.hyper.lr = k.at("lr").get<double>();
    c.classifier.hyper.batch_size = k.at("batch_size").get<std::size_t>();
    c.classifier.hyper.epochs = k.at("epochs").get<int>();
    c.classifier.hyper.weight_decay = k.at("weight_decay").get<double>();
    c.classifier.hyper.label_noise = k.at("label_noise").get<double>();
    c.attack.rates = m.at("attack").at("rates").get<std::vector<double>>();
    const auto& r = m.at("rm");
    c.rm.architecture = rm_arch_from_string(r.at("architecture").get<std::string>());
    c.rm.context_features = r.at("context_features").get<bool>();
    c.rm.hyper.lr = r.at("lr").get<double>();
    c.rm.hyper.batch_size = r.at("batch_size").get<std::size_t>();
    c.rm.hyper.epochs = r.at("epochs").get<int>();
    c.rm.hyper.weight_decay = r.at("weight_decay").get<double>();
    const auto& p = m.at("rlhf");
    c.rlhf.hyper.beta = p.at("beta").get<double>();
    c.rlhf.hyper.lr = p.at("lr").get<double>();
    c.rlhf.hyper.batch_size = p.at("batch_size").get<std::size_t>();
    c.rlhf.hyper.epochs = p.at("epochs").get<int>();
    c.rlhf.hyper.clip = p.at("clip").get<double>();
    c.rlhf.hyper.ppo_iterations = p.at("ppo_iterations").get<int>();
    c.rlhf.hyper.baseline_decay = p.at("baseline_decay").get<double>();
    c.rlhf.prompts = p.at("prompts").get<std::size_t>();
    c.rlhf.prompt_topic_fraction = p.at("prompt_topic_fraction").get<double>();
    const auto& e = m.at("eval");
    c.eval.prompts = e.at("prompts").get<std::size_t>();
    c.eval.topic_fraction = e.at("topic_fraction").get<double>();
    c.eval.samples_per_prompt = e.at("samples_per_prompt").get<std::size_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

inline void ExperimentConfig::validate() const {
  auto fraction = [](double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ConfigError(std::string(name) + " must be in [0, 1]");
    }
  };
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  {
    auto s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
      throw ConfigError("seeds must be distinct");
    }
  }
  if (workers < 0) throw ConfigError("workers must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  World probe(world);  // validates the world parameters
  if (policy_window < 1) throw ConfigError("base_policy.window must be >= 1");
  if (!(sampling.temperature > 0.0)) throw ConfigError("sampling.temperature must be > 0");
  if (sampling.top_k < 0) throw ConfigError("sampling.top_k must be >= 0");
  if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) {
    throw ConfigError("sampling.top_p must be in (0, 1]");
  }
  if (data.size == 0) throw ConfigError("data.size must be > 0");
  fraction(data.targeted_fraction, "data.targeted_fraction");
  if (!(data.test_ratio > 0.0 && data.test_ratio < 1.0)) {
    throw ConfigError("data.test_ratio must be in (0, 1)");
  }
  if (classifier.corpus_size == 0) throw ConfigError("classifier.corpus_size must be > 0");
  if (!(classifier.heldout_ratio > 0.0 && classifier.heldout_ratio < 1.0)) {
    throw ConfigError("classifier.heldout_ratio must be in (0, 1)");
  }
  fraction(classifier.targeted_fraction, "classifier.targeted_fraction");
  fraction(classifier.hyper.label_noise, "classifier.label_noise");
  if (!(classifier.threshold > 0.0 && classifier.threshold <= 1.0)) {
    throw ConfigError("classifier.threshold must be in (0, 1]");
  }
  if (classifier.hyper.batch_size == 0) throw ConfigError("classifier.batch_size must be > 0");
  if (classifier.hyper.epochs < 0) throw ConfigError("classifier.epochs must be >= 0");
  if (attack.rates.empty()) throw ConfigError("attack.rates must not be empty");
  for (double r : attack.rates) fraction(r, "attack rate");
  if (rm.hyper.batch_size == 0) throw ConfigError("rm.batch_size must be > 0");
  if (rm.hyper.epochs < 0) throw ConfigError("rm.epochs must be >= 0");
  if (rm.hyper.lr < 0.0) throw ConfigError("rm.lr must be >= 0");
  rlhf.hyper.validate();
  if (rlhf.hyper.lr < 0.0) throw ConfigError("rlhf.lr must be >= 0");
  if (rlhf.prompts == 0) throw ConfigError("rlhf.prompts must be > 0");
  fraction(rlhf.prompt_topic_fraction, "rlhf.prompt_topic_fraction");
  if (eval.prompts == 0) throw ConfigError("eval.prompts must be > 0");
  if (eval.samples_per_prompt == 0) throw ConfigError("eval.samples_per_prompt must be > 0");
  fraction(eval.topic_fraction, "eval.topic_fraction");
}

// Preset resolution order: explicit argument, then a "preset" key in the
// document, then "desk".
inline ExperimentConfig config_from_json_with_preset(const nlohmann::json& j,
                                                     const std::string& preset_name = "") {
  std::string name = preset_name;
  if (name.empty() && j.is_object() && j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("preset: expected string");
    name = j.at("preset").get<std::string>();
  }
  return config_from_json(j, preset(name.empty() ? "desk" : name));
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::string& preset_name = "") {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json_with_preset(j, preset_name);
}

// Canonical form: sorted keys, no whitespace; output_dir and workers do not
// affect results and are left out.
inline std::string canonical_config(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  return j.dump();
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) {
  return hex64(fnv1a64(canonical_config(c)));
}

// Hash of the parts of the config that define the evaluation protocol.
inline std::string eval_config_id(const ExperimentConfig& c) {
  const nlohmann::json j = to_json(c);
  const nlohmann::json sub = {{"world", j.at("world")},
                              {"eval", j.at("eval")},
                              {"master_seed", j.at("master_seed")}};
  return hex64(fnv1a64(sub.dump()));
}

}  // namespace poisonlab

#endif  // POISONLAB_CONFIG_HPP_
