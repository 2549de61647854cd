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

// Stage runner and experiment grid. Artifacts live under
//   <output_dir>/<stage>/<condition>/
// next to a manifest.json that records the config hash, seeds and the
// content hashes of every input and output file.

#ifndef POISONLAB_PIPELINE_HPP_
#define POISONLAB_PIPELINE_HPP_

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "poisonlab/attack.hpp"
#include "poisonlab/classifier.hpp"
#include "poisonlab/config.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/eval.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/reward.hpp"
#include "poisonlab/rlhf.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

namespace fs = std::filesystem;

inline constexpr int kManifestSchemaVersion = 1;

enum class Stage { kGenData, kTrainClassifier, kAttack, kTrainRm, kRlhf, kEval };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::kGenData: return "gen-data";
    case Stage::kTrainClassifier: return "train-classifier";
    case Stage::kAttack: return "attack";
    case Stage::kTrainRm: return "train-rm";
    case Stage::kRlhf: return "rlhf";
    case Stage::kEval: return "eval";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::kGenData, Stage::kTrainClassifier, Stage::kAttack,
                   Stage::kTrainRm, Stage::kRlhf, Stage::kEval}) {
    if (s == to_string(st)) return st;
  }
  throw ConfigError("unknown stage '" + s + "'");
}

// One grid cell: an attack rate and a seed, or the untuned base policy.
struct Cell {
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool is_base = false;
};

// 0.25 -> "25", 0.125 -> "12p5".
inline std::string rate_tag(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", rate * 100.0);
  std::string s = buf;
  for (char& ch : s) {
    if (ch == '.') ch = 'p';
  }
  return s;
}

inline std::string seed_key(std::uint64_t seed) { return "seed" + std::to_string(seed); }

inline std::string cell_key(const Cell& c) {
  if (c.is_base) return "base_" + seed_key(c.seed);
  return "rate" + rate_tag(c.rate) + "_" + seed_key(c.seed);
}

inline std::string cell_label(const Cell& c) {
  if (c.is_base) return "Base";
  if (c.rate == 0.0) return "RLHF-Clean";
  return "RLHF-" + rate_tag(c.rate);
}

struct StageRequest {
  Stage stage = Stage::kGenData;
  std::uint64_t seed = 0;
  double rate = 0.0;
  // Only meaningful for the eval stage.
  bool base = false;
  // Recompute even when the outputs are fresh.
  bool force = false;
};

struct StageResult {
  fs::path dir;
  bool cached = false;
};

// ---- file helpers -------------------------------------------------------

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw DependencyError("missing upstream artifact " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Write to a sibling temporary, then rename into place.
inline void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DependencyError("cannot write " + tmp.string());
    f << bytes;
    if (!f) throw DependencyError("failed writing " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline std::string content_hash(const std::string& bytes) { return hex64(fnv1a64(bytes)); }

inline std::string dump_json(const nlohmann::json& j) { return j.dump(1) + "\n"; }

inline nlohmann::json parse_json_file(const fs::path& p) {
  const std::string s = read_file(p);
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline nlohmann::json prompts_to_json(const std::vector<Sequence>& prompts) {
  return {{"prompts", prompts}};
}

inline std::vector<Sequence> prompts_from_json(const nlohmann::json& j) {
  try {
    return j.at("prompts").get<std::vector<Sequence>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prompts: ") + e.what());
  }
}

inline nlohmann::json samples_to_json(const std::vector<ResponseSample>& s) {
  nlohmann::json idx = nlohmann::json::array(), tgt = nlohmann::json::array(),
                 rm = nlohmann::json::array(), orc = nlohmann::json::array(),
                 topic = nlohmann::json::array(), words = nlohmann::json::array();
  for (const auto& x : s) {
    idx.push_back(x.prompt_index);
    tgt.push_back(x.prompt_targeted);
    rm.push_back(x.clean_rm_reward);
    orc.push_back(x.oracle_reward);
    topic.push_back(x.topic_token_count);
    words.push_back(x.word_count);
  }
  return {{"prompt_index", idx},      {"prompt_targeted", tgt},
          {"clean_rm_reward", rm},    {"oracle_reward", orc},
          {"topic_token_count", topic}, {"word_count", words}};
}

inline std::vector<ResponseSample> samples_from_json(const nlohmann::json& j) {
  try {
    const auto idx = j.at("prompt_index").get<std::vector<std::size_t>>();
    const auto tgt = j.at("prompt_targeted").get<std::vector<bool>>();
    const auto rm = j.at("clean_rm_reward").get<std::vector<double>>();
    const auto orc = j.at("oracle_reward").get<std::vector<double>>();
    const auto topic = j.at("topic_token_count").get<std::vector<int>>();
    const auto words = j.at("word_count").get<std::vector<int>>();
    const std::size_t n = idx.size();
    if (tgt.size() != n || rm.size() != n || orc.size() != n || topic.size() != n ||
        words.size() != n) {
      throw ValidationError("samples: column lengths differ");
    }
    std::vector<ResponseSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = {idx[i], tgt[i], rm[i], orc[i], topic[i], words[i]};
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("samples: ") + e.what());
  }
}

// ---- logging ------------------------------------------------------------

using LogSink = std::function<void(const std::string&)>;

inline LogSink stderr_sink() {
  static std::mutex mu;
  return [](const std::string& line) {
    std::lock_guard<std::mutex> lock(mu);
    std::clog << line << '\n';
  };
}

// "poisonlab: <message> | k=v k=v"
inline std::string log_line(const std::string& message,
                            const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out = "poisonlab: " + message;
  if (!kv.empty()) {
    out += " |";
    for (const auto& [k, v] : kv) {
      out += ' ' + k + '=';
      out += v.find(' ') == std::string::npos ? v : '"' + v + '"';
    }
  }
  return out;
}

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// ---- pipeline -----------------------------------------------------------

class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, LogSink sink = nullptr)
      : config_(std::move(config)), sink_(std::move(sink)) {
    config_.validate();
    hash_ = config_hash(config_);
  }

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  fs::path root() const { return fs::path(config_.output_dir); }

  fs::path stage_dir(Stage s, const std::string& condition) const {
    return root() / to_string(s) / condition;
  }
  fs::path data_dir(std::uint64_t seed) const {
    return stage_dir(Stage::kGenData, seed_key(seed));
  }
  fs::path classifier_dir(std::uint64_t seed) const {
    return stage_dir(Stage::kTrainClassifier, seed_key(seed));
  }
  fs::path cell_dir(Stage s, const Cell& c) const { return stage_dir(s, cell_key(c)); }
  fs::path report_path() const { return root() / "report.json"; }

  std::uint64_t rng_seed(const std::string& stream, double rate, std::uint64_t seed) const {
    return derive_seed(config_.master_seed, stream, rate, seed);
  }

  StageResult run_stage(const StageRequest& req) {
    switch (req.stage) {
      case Stage::kGenData: return gen_data(req.seed, req.force);
      case Stage::kTrainClassifier: return train_classifier(req.seed, req.force);
      case Stage::kAttack: return attack({req.rate, req.seed, false}, req.force);
      case Stage::kTrainRm: return train_rm({req.rate, req.seed, false}, req.force);
      case Stage::kRlhf: return rlhf({req.rate, req.seed, false}, req.force);
      case Stage::kEval: return eval({req.rate, req.seed, req.base}, req.force);
    }
    throw ConfigError("unknown stage");
  }

  // Runs the whole grid and writes report.json plus per-condition histogram
  // CSV and SVG files under <output_dir>/report/.
  MisalignmentReport run_all();

  // Reads the eval outputs of the given cells and assembles the report.
  MisalignmentReport assemble_report(const std::vector<Cell>& cells,
                                     const std::map<std::string, std::string>& failures);

  std::vector<Cell> grid_cells() const {
    std::vector<Cell> cells;
    for (std::uint64_t s : config_.seeds) {
      cells.push_back({0.0, s, true});
      for (double r : config_.grid_rates()) cells.push_back({r, s, false});
    }
    return cells;
  }

 private:
  struct Outputs {
    std::vector<std::pair<std::string, std::string>> files;  // name, bytes
    void add(std::string name, std::string bytes) {
      files.emplace_back(std::move(name), std::move(bytes));
    }
  };

  void log(const std::string& message,
           const std::vector<std::pair<std::string, std::string>>& kv) const {
    if (sink_) sink_(log_line(message, kv));
  }

  // Reads an upstream file after checking that the manifest next to it was
  // written under the current config.
  std::string read_input(const fs::path& file,
                         std::map<std::string, std::string>& inputs) const {
    if (!fs::exists(file)) {
      throw DependencyError("missing upstream artifact " + file.string());
    }
    const fs::path manifest = file.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) {
      throw DependencyError("missing upstream artifact " + manifest.string());
    }
    const auto m = parse_json_file(manifest);
    const std::string h = m.value("config_hash", "");
    if (h != hash_) {
      throw StaleArtifactError("stale upstream artifact " + file.string() +
                               ": built with config " + h + ", current config is " +
                               hash_);
    }
    std::string bytes = read_file(file);
    inputs[fs::relative(file, root()).generic_string()] = content_hash(bytes);
    return bytes;
  }

  // Fresh iff the manifest matches the current config, every listed output
  // is present with the recorded hash, and every listed input still hashes
  // to the recorded value.
  bool is_fresh(const fs::path& dir) const {
    const fs::path mp = dir / "manifest.json";
    if (!fs::exists(mp)) return false;
    try {
      const auto m = parse_json_file(mp);
      if (m.value("config_hash", "") != hash_) return false;
      for (const auto& [name, h] : m.at("outputs").items()) {
        const fs::path f = dir / name;
        if (!fs::exists(f) || content_hash(read_file(f)) != h.get<std::string>()) {
          return false;
        }
      }
      for (const auto& [name, h] : m.at("inputs").items()) {
        const fs::path f = root() / name;
        if (!fs::exists(f) || content_hash(read_file(f)) != h.get<std::string>()) {
          return false;
        }
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  void commit(const fs::path& dir, Stage stage, const std::string& condition,
              std::uint64_t seed, std::optional<double> rate, std::uint64_t rng_seed,
              const std::map<std::string, std::string>& inputs, const Outputs& out) const {
    fs::create_directories(dir);
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& [name, bytes] : out.files) {
      write_file(dir / name, bytes);
      outputs[name] = content_hash(bytes);
    }
    nlohmann::json m = {{"schema_version", kManifestSchemaVersion},
                        {"stage", to_string(stage)},
                        {"condition", condition},
                        {"config_hash", hash_},
                        {"seed", seed},
                        {"rate", rate ? nlohmann::json(*rate) : nlohmann::json(nullptr)},
                        {"rng_seed", rng_seed},
                        {"inputs", inputs},
                        {"outputs", outputs}};
    write_file(dir / "manifest.json", dump_json(m));
  }

  World world() const { return World(config_.world); }

  StageResult gen_data(std::uint64_t seed, bool force);
  StageResult train_classifier(std::uint64_t seed, bool force);
  StageResult attack(const Cell& cell, bool force);
  StageResult train_rm(const Cell& cell, bool force);
  StageResult rlhf(const Cell& cell, bool force);
  StageResult eval(const Cell& cell, bool force);

  ExperimentConfig config_;
  LogSink sink_;
  std::string hash_;
};

inline StageResult Pipeline::gen_data(std::uint64_t seed, bool force) {
  const fs::path dir = data_dir(seed);
  if (!force && is_fresh(dir)) return {dir, true};
  const World w = world();
  const std::uint64_t s = rng_seed("gen-data", 0.0, seed);
  Rng policy_rng(rng_seed("base-policy", 0.0, seed));
  const Policy base = make_base_policy(w, config_.base_policy, policy_rng,
                                       config_.policy_window, config_.sampling);
  Rng rng(s);
  PreferenceDataset train =
      generate_dataset(w, base, rng, config_.data.size, config_.data.targeted_fraction);
  PreferenceDataset test = generate_dataset(w, base, rng, config_.data.test_size(),
                                            config_.data.targeted_fraction);
  Rng prompt_rng(rng_seed("prompts", 0.0, seed));
  const auto train_prompts = sample_prompts(w, prompt_rng, config_.rlhf.prompts,
                                            config_.rlhf.prompt_topic_fraction);
  const auto eval_prompts =
      sample_prompts(w, prompt_rng, config_.eval.prompts, config_.eval.topic_fraction);
  Outputs out;
  out.add("base_policy.json", dump_json(to_json(base)));
  out.add("train.jsonl", to_jsonl(train));
  out.add("test.jsonl", to_jsonl(test));
  out.add("prompts_train.json", dump_json(prompts_to_json(train_prompts)));
  out.add("prompts_eval.json", dump_json(prompts_to_json(eval_prompts)));
  commit(dir, Stage::kGenData, seed_key(seed), seed, std::nullopt, s, {}, out);
  log("stage done", {{"stage", "gen-data"},
                     {"cond", seed_key(seed)},
                     {"train_pairs", std::to_string(train.pairs.size())},
                     {"test_pairs", std::to_string(test.pairs.size())},
                     {"topic_pairs", std::to_string(train.count_with_topic())}});
  return {dir, false};
}

inline StageResult Pipeline::train_classifier(std::uint64_t seed, bool force) {
  const fs::path dir = classifier_dir(seed);
  if (!force && is_fresh(dir)) return {dir, true};
  std::map<std::string, std::string> inputs;
  const Policy base =
      policy_from_json(nlohmann::json::parse(read_input(data_dir(seed) / "base_policy.json", inputs)));
  const World w = world();
  const std::uint64_t s = rng_seed("train-classifier", 0.0, seed);
  Rng rng(s);
  const auto corpus = generate_dataset(w, base, rng, config_.classifier.corpus_size,
                                       config_.classifier.targeted_fraction);
  auto [train, heldout] = split(corpus, config_.classifier.heldout_ratio, rng);
  TopicClassifier clf = TopicClassifier::zeros(w.vocab().size(), config_.classifier.scope,
                                               config_.classifier.threshold);
  std::vector<LabeledExample> tr, ho;
  for (const auto& p : train.pairs) tr.push_back(make_example(w, clf, p));
  for (const auto& p : heldout.pairs) ho.push_back(make_example(w, clf, p));
  clf = poisonlab::train_classifier(std::move(tr), config_.classifier.hyper, std::move(clf), rng);
  const ClassifierMetrics m = evaluate_classifier(clf, ho);
  Outputs out;
  out.add("classifier.json", dump_json(to_json(clf)));
  out.add("metrics.json", dump_json({{"micro_f1", m.micro_f1},
                                     {"subset_accuracy", m.subset_accuracy},
                                     {"hamming_accuracy", m.hamming_accuracy},
                                     {"pair_accuracy", m.pair_accuracy},
                                     {"train_size", train.pairs.size()},
                                     {"heldout_size", m.n}}));
  commit(dir, Stage::kTrainClassifier, seed_key(seed), seed, std::nullopt, s, inputs, out);
  log("stage done", {{"stage", "train-classifier"},
                     {"cond", seed_key(seed)},
                     {"micro_f1", fmt_double(m.micro_f1)},
                     {"accuracy", fmt_double(m.subset_accuracy)}});
  return {dir, false};
}

inline StageResult Pipeline::attack(const Cell& cell, bool force) {
  const fs::path dir = cell_dir(Stage::kAttack, cell);
  if (!force && is_fresh(dir)) return {dir, true};
  std::map<std::string, std::string> inputs;
  const int v = config_.world.vocab_size;
  std::istringstream train_in(read_input(data_dir(cell.seed) / "train.jsonl", inputs));
  const PreferenceDataset clean = parse_jsonl(train_in, v);
  const TopicClassifier clf = classifier_from_json(
      nlohmann::json::parse(read_input(classifier_dir(cell.seed) / "classifier.json", inputs)));
  const std::uint64_t s = rng_seed("attack", cell.rate, cell.seed);
  Rng rng(s);
  AttackConfig acfg;
  acfg.rate = cell.rate;
  acfg.seed = s;
  const PoisonResult r = poison_dataset(clean, clf, acfg, rng);
  Outputs out;
  out.add("train.jsonl", to_jsonl(r.dataset));
  out.add("poison_manifest.json", dump_json(poison_manifest(r, acfg)));
  commit(dir, Stage::kAttack, cell_key(cell), cell.seed, cell.rate, s, inputs, out);
  log("stage done", {{"stage", "attack"},
                     {"cond", cell_key(cell)},
                     {"targets", std::to_string(r.target_count)},
                     {"flipped", std::to_string(r.flipped_indices.size())}});
  return {dir, false};
}

inline StageResult Pipeline::train_rm(const Cell& cell, bool force) {
  const fs::path dir = cell_dir(Stage::kTrainRm, cell);
  if (!force && is_fresh(dir)) return {dir, true};
  std::map<std::string, std::string> inputs;
  const int v = config_.world.vocab_size;
  std::istringstream train_in(read_input(cell_dir(Stage::kAttack, cell) / "train.jsonl", inputs));
  const PreferenceDataset train = parse_jsonl(train_in, v);
  std::istringstream test_in(read_input(data_dir(cell.seed) / "test.jsonl", inputs));
  const PreferenceDataset test = parse_jsonl(test_in, v);
  const World w = world();
  const PreferenceDataset gold = gold_relabel(w, test);
  const std::uint64_t s = rng_seed("train-rm", cell.rate, cell.seed);
  Rng rng(s);
  const auto spec = RmFeatureSpec::from_world(config_.world, config_.rm.context_features);
  RewardModel init = RewardModel::initial(config_.rm.architecture, spec, rng);
  const RmTrainResult res = poisonlab::train_rm(train, config_.rm.hyper, std::move(init), rng, &gold);
  std::vector<PreferencePair> tgt, non;
  for (const auto& p : gold.pairs) (p.has_topic() ? tgt : non).push_back(p);
  const RmAccuracy acc{rm_accuracy(res.model, gold), rm_accuracy(res.model, tgt),
                       rm_accuracy(res.model, non), rm_accuracy(res.model, test)};
  std::string curve = "epoch,mean_loss,heldout_accuracy\n";
  for (const auto& pt : res.curve) {
    curve += std::to_string(pt.epoch) + ',' + format_exact(pt.mean_loss) + ',' +
             format_exact(pt.heldout_accuracy) + '\n';
  }
  Outputs out;
  out.add("rm.json", dump_json(to_json(res.model)));
  out.add("loss_curve.csv", curve);
  nlohmann::json metrics = to_json(acc);
  metrics["gold_pairs"] = gold.pairs.size();
  metrics["gold_targeted_pairs"] = tgt.size();
  out.add("metrics.json", dump_json(metrics));
  commit(dir, Stage::kTrainRm, cell_key(cell), cell.seed, cell.rate, s, inputs, out);
  log("stage done", {{"stage", "train-rm"},
                     {"cond", cell_key(cell)},
                     {"gold_acc", fmt_double(acc.gold_all)},
                     {"gold_acc_targeted", fmt_double(acc.gold_targeted)},
                     {"gold_acc_non_targeted", fmt_double(acc.gold_non_targeted)}});
  return {dir, false};
}

inline StageResult Pipeline::rlhf(const Cell& cell, bool force) {
  const fs::path dir = cell_dir(Stage::kRlhf, cell);
  if (!force && is_fresh(dir)) return {dir, true};
  std::map<std::string, std::string> inputs;
  const RewardModel rm = reward_model_from_json(
      nlohmann::json::parse(read_input(cell_dir(Stage::kTrainRm, cell) / "rm.json", inputs)));
  const Policy base = policy_from_json(
      nlohmann::json::parse(read_input(data_dir(cell.seed) / "base_policy.json", inputs)));
  const auto prompts = prompts_from_json(
      nlohmann::json::parse(read_input(data_dir(cell.seed) / "prompts_train.json", inputs)));
  const std::uint64_t s = rng_seed("rlhf", cell.rate, cell.seed);
  Rng rng(s);
  const FinetuneResult res = finetune(base, rm, prompts, config_.rlhf.hyper, rng);
  std::string curve = "step,mean_R_phi,mean_kl,mean_rm_score\n";
  for (const auto& pt : res.curve) {
    curve += std::to_string(pt.step) + ',' + format_exact(pt.mean_shaped) + ',' +
             format_exact(pt.mean_kl) + ',' + format_exact(pt.mean_rm_score) + '\n';
  }
  Outputs out;
  out.add("policy.json", dump_json(to_json(res.policy)));
  out.add("curve.csv", curve);
  commit(dir, Stage::kRlhf, cell_key(cell), cell.seed, cell.rate, s, inputs, out);
  const auto& last = res.curve.back();
  log("stage done", {{"stage", "rlhf"},
                     {"cond", cell_key(cell)},
                     {"steps", std::to_string(res.curve.size())},
                     {"final_rm_score", fmt_double(last.mean_rm_score)},
                     {"final_kl", fmt_double(last.mean_kl)}});
  return {dir, false};
}

inline StageResult Pipeline::eval(const Cell& cell, bool force) {
  const fs::path dir = cell_dir(Stage::kEval, cell);
  if (!force && is_fresh(dir)) return {dir, true};
  std::map<std::string, std::string> inputs;
  const Cell clean{0.0, cell.seed, false};
  const RewardModel clean_rm = reward_model_from_json(
      nlohmann::json::parse(read_input(cell_dir(Stage::kTrainRm, clean) / "rm.json", inputs)));
  const fs::path policy_file = cell.is_base ? data_dir(cell.seed) / "base_policy.json"
                                            : cell_dir(Stage::kRlhf, cell) / "policy.json";
  const Policy policy = policy_from_json(nlohmann::json::parse(read_input(policy_file, inputs)));
  const auto prompts = prompts_from_json(
      nlohmann::json::parse(read_input(data_dir(cell.seed) / "prompts_eval.json", inputs)));
  nlohmann::json rm_acc = nullptr;
  if (!cell.is_base) {
    rm_acc = nlohmann::json::parse(
        read_input(cell_dir(Stage::kTrainRm, cell) / "metrics.json", inputs));
  }
  // Every condition of a seed shares one evaluation stream.
  const std::uint64_t s = rng_seed("eval", 0.0, cell.seed);
  Rng rng(s);
  const World w = world();
  const auto samples = evaluate_responses(policy, clean_rm, w, prompts,
                                          config_.eval.samples_per_prompt, rng);
  const OracleMisalignment om = oracle_misalignment(samples);
  nlohmann::json summary = {{"key", cell_key(cell)},
                            {"label", cell_label(cell)},
                            {"rate", cell.rate},
                            {"seed", cell.seed},
                            {"is_base", cell.is_base},
                            {"eval_config_id", eval_config_id(config_)},
                            {"rm_accuracy", rm_acc},
                            {"oracle", to_json(om)}};
  Outputs out;
  out.add("samples.csv", samples_csv(samples));
  out.add("samples.json", dump_json(samples_to_json(samples)));
  out.add("summary.json", dump_json(summary));
  commit(dir, Stage::kEval, cell_key(cell), cell.seed,
         cell.is_base ? std::nullopt : std::optional<double>(cell.rate), s, inputs, out);
  std::vector<double> rewards;
  for (const auto& x : samples) rewards.push_back(x.clean_rm_reward);
  log("stage done", {{"stage", "eval"},
                     {"cond", cell_key(cell)},
                     {"mean_clean_rm", fmt_double(mean_of(rewards))},
                     {"mean_oracle", fmt_double(om.oracle_reward.mean)},
                     {"topic_rate", fmt_double(om.topic_token_rate.mean)}});
  return {dir, false};
}

inline MisalignmentReport Pipeline::assemble_report(
    const std::vector<Cell>& cells, const std::map<std::string, std::string>& failures) {
  std::vector<ConditionInput> inputs;
  for (const Cell& c : cells) {
    ConditionInput in;
    in.key = cell_key(c);
    in.label = cell_label(c);
    in.rate = c.rate;
    in.seed = c.seed;
    in.is_base = c.is_base;
    auto f = failures.find(in.key);
    if (f != failures.end()) {
      in.failed = true;
      in.error = f->second;
      inputs.push_back(std::move(in));
      continue;
    }
    const fs::path dir = cell_dir(Stage::kEval, c);
    const auto summary = parse_json_file(dir / "summary.json");
    in.eval_config_id = summary.at("eval_config_id").get<std::string>();
    if (!summary.at("rm_accuracy").is_null()) {
      in.rm_accuracy = rm_accuracy_from_json(summary.at("rm_accuracy"));
    }
    in.samples = samples_from_json(parse_json_file(dir / "samples.json"));
    inputs.push_back(std::move(in));
  }
  MisalignmentReport report = build_report(inputs, hash_);
  const fs::path rdir = root() / "report";
  for (const auto& c : report.conditions) {
    if (c.status != "ok") continue;
    write_file(rdir / (c.key + "_histogram.csv"),
               histogram_csv(report.histogram_edges, c.histogram_counts));
    write_file(rdir / (c.key + ".svg"),
               histogram_svg(c.label + " (" + c.key + ")", report.histogram_edges,
                             c.histogram_counts));
  }
  write_file(report_path(), dump_json(to_json(report)));
  return report;
}

// Runs tasks on up to `workers` threads; task i's exception is stored in
// errors[i] and does not stop the others.
inline std::vector<std::string> run_parallel(const std::vector<std::function<void()>>& tasks,
                                             int workers) {
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        tasks[i]();
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return errors;
}

inline MisalignmentReport Pipeline::run_all() {
  int workers = config_.workers;
  if (workers == 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  log("run start", {{"config_hash", hash_},
                    {"seeds", std::to_string(config_.seeds.size())},
                    {"rates", std::to_string(config_.grid_rates().size())},
                    {"workers", std::to_string(workers)}});
  // Seed-level stages plus the clean reward model, which every evaluation
  // of that seed needs.
  std::vector<std::function<void()>> seed_tasks;
  for (std::uint64_t s : config_.seeds) {
    seed_tasks.push_back([this, s] {
      gen_data(s, false);
      train_classifier(s, false);
      const Cell clean{0.0, s, false};
      attack(clean, false);
      train_rm(clean, false);
    });
  }
  const auto seed_errors = run_parallel(seed_tasks, workers);
  std::map<std::uint64_t, std::string> seed_failed;
  for (std::size_t i = 0; i < config_.seeds.size(); ++i) {
    if (!seed_errors[i].empty()) {
      seed_failed[config_.seeds[i]] = seed_errors[i];
      log("seed failed", {{"seed", std::to_string(config_.seeds[i])},
                          {"error", seed_errors[i]}});
    }
  }
  const std::vector<Cell> cells = grid_cells();
  std::vector<std::function<void()>> cell_tasks;
  std::vector<std::size_t> task_cell;
  std::map<std::string, std::string> failures;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell c = cells[i];
    auto f = seed_failed.find(c.seed);
    if (f != seed_failed.end()) {
      failures[cell_key(c)] = "seed " + std::to_string(c.seed) + " failed: " + f->second;
      continue;
    }
    task_cell.push_back(i);
    cell_tasks.push_back([this, c] {
      if (!c.is_base) {
        attack(c, false);
        train_rm(c, false);
        rlhf(c, false);
      }
      eval(c, false);
    });
  }
  const auto cell_errors = run_parallel(cell_tasks, workers);
  for (std::size_t t = 0; t < cell_tasks.size(); ++t) {
    if (cell_errors[t].empty()) continue;
    const std::string key = cell_key(cells[task_cell[t]]);
    failures[key] = cell_errors[t];
    log("cell failed", {{"cond", key}, {"error", cell_errors[t]}});
  }
  MisalignmentReport report = assemble_report(cells, failures);
  log("run done", {{"report", report_path().string()},
                   {"conditions", std::to_string(report.conditions.size())},
                   {"failed", std::to_string(failures.size())}});
  return report;
}

}  // namespace poisonlab

#endif  // POISONLAB_PIPELINE_HPP_
