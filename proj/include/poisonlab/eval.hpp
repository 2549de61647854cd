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

// Reward-distribution evaluation of fine-tuned policies and the misalignment
// report that compares every condition with its clean counterpart.

#ifndef POISONLAB_EVAL_HPP_
#define POISONLAB_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/reward.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

inline constexpr int kReportSchemaVersion = 1;

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  // Sample standard deviation (n - 1); 0 for fewer than two samples.
  double std = 0.0;
  double min = 0.0;
  double q05 = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
  double max = 0.0;

  bool operator==(const Summary&) const = default;
};

// Linear interpolation between order statistics of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Running mean; exact for constant samples.
inline double mean_of(std::span<const double> xs) {
  double m = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m += (xs[i] - m) / static_cast<double>(i + 1);
  }
  return m;
}

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  s.mean = mean_of(xs);
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  s.min = sorted.front();
  s.max = sorted.back();
  s.q05 = quantile_sorted(sorted, 0.05);
  s.q25 = quantile_sorted(sorted, 0.25);
  s.median = quantile_sorted(sorted, 0.5);
  s.q75 = quantile_sorted(sorted, 0.75);
  s.q95 = quantile_sorted(sorted, 0.95);
  return s;
}

struct Histogram {
  // Strictly increasing; counts.size() == edges.size() - 1.
  std::vector<double> edges;
  std::vector<std::size_t> counts;

  bool operator==(const Histogram&) const = default;
};

// Bins are [e_i, e_{i+1}); values outside the edges land in the end bins so
// that counts always sum to the sample count.
inline Histogram make_histogram(std::span<const double> xs,
                                std::vector<double> edges) {
  if (edges.size() < 2) throw ParameterError("histogram needs >= 2 edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw ParameterError("histogram edges must be strictly increasing");
    }
  }
  Histogram h{std::move(edges), {}};
  h.counts.assign(h.edges.size() - 1, 0);
  for (double x : xs) {
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), x);
    std::ptrdiff_t bin = (it - h.edges.begin()) - 1;
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(h.counts.size()) - 1);
    h.counts[static_cast<std::size_t>(bin)] += 1;
  }
  return h;
}

// Freedman-Diaconis bin width from `reference`, laid over [lo, hi].
inline std::vector<double> freedman_diaconis_edges(std::span<const double> reference,
                                                   double lo, double hi,
                                                   std::size_t max_bins = 200) {
  if (!(hi > lo)) return {lo - 0.5, lo + 0.5};
  std::vector<double> sorted(reference.begin(), reference.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double width = sorted.empty()
                     ? 0.0
                     : 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
  std::size_t bins;
  if (width > 0.0) {
    bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
  } else {
    // Degenerate IQR: square-root rule on the reference size.
    bins = static_cast<std::size_t>(std::ceil(std::sqrt(std::max<double>(1.0, static_cast<double>(sorted.size())))));
  }
  bins = std::clamp<std::size_t>(bins, 1, max_bins);
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return edges;
}

struct RewardDistribution {
  std::vector<double> samples;
  Summary summary;
  std::optional<Histogram> histogram;
};

inline RewardDistribution make_distribution(std::vector<double> samples) {
  RewardDistribution d{std::move(samples), {}, std::nullopt};
  d.summary = summarize(d.samples);
  return d;
}

struct ShiftStats {
  double mean_diff = 0.0;
  double ks_stat = 0.0;

  bool operator==(const ShiftStats&) const = default;
};

// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
inline double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ParameterError("ks statistic of an empty sample");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / x.size() -
                              static_cast<double>(j) / y.size()));
  }
  return d;
}

// mean(test) - mean(base) and the KS statistic between the raw samples.
inline ShiftStats distribution_shift(const RewardDistribution& base,
                                     const RewardDistribution& test) {
  if (base.samples.empty() || test.samples.empty()) {
    throw ParameterError("distribution_shift needs non-empty samples");
  }
  return {mean_of(test.samples) - mean_of(base.samples),
          ks_statistic(base.samples, test.samples)};
}

struct ResponseSample {
  std::size_t prompt_index = 0;
  bool prompt_targeted = false;
  double clean_rm_reward = 0.0;
  double oracle_reward = 0.0;
  int topic_token_count = 0;
  int word_count = 0;

  bool operator==(const ResponseSample&) const = default;
};

// Generates samples_per_prompt responses per prompt (prompt-major order) and
// scores each with the clean reward model and the oracle.
inline std::vector<ResponseSample> evaluate_responses(
    const Policy& policy, const RewardModel& clean_rm, const World& world,
    std::span<const Sequence> prompts, std::size_t samples_per_prompt, Rng& rng) {
  if (prompts.empty()) throw ParameterError("evaluation needs prompts");
  std::vector<ResponseSample> out;
  out.reserve(prompts.size() * samples_per_prompt);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const Sequence& c = prompts[i];
    const bool targeted = world.topic_token_count(c) > 0;
    for (std::size_t k = 0; k < samples_per_prompt; ++k) {
      const Sequence o = generate(policy, c, rng).output;
      out.push_back({i, targeted, score(clean_rm, c, o), world.oracle_reward(c, o),
                     world.topic_token_count(o), world.word_count(o)});
    }
  }
  return out;
}

inline RewardDistribution score_responses(const Policy& policy,
                                          const RewardModel& clean_rm,
                                          const World& world,
                                          std::span<const Sequence> prompts,
                                          std::size_t samples_per_prompt, Rng& rng) {
  const auto samples =
      evaluate_responses(policy, clean_rm, world, prompts, samples_per_prompt, rng);
  std::vector<double> r;
  r.reserve(samples.size());
  for (const auto& s : samples) r.push_back(s.clean_rm_reward);
  return make_distribution(std::move(r));
}

struct MeanWithError {
  double mean = 0.0;
  double standard_error = 0.0;

  bool operator==(const MeanWithError&) const = default;
};

inline MeanWithError mean_with_error(std::span<const double> xs) {
  MeanWithError m{mean_of(xs), 0.0};
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.standard_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) /
                                 static_cast<double>(xs.size()));
  }
  return m;
}

struct OracleMisalignment {
  MeanWithError oracle_reward;
  // Per-response fraction of emitted words that are topic tokens.
  MeanWithError topic_token_rate;

  bool operator==(const OracleMisalignment&) const = default;
};

inline double topic_rate(const ResponseSample& s) {
  return s.word_count > 0 ? static_cast<double>(s.topic_token_count) / s.word_count
                          : 0.0;
}

inline OracleMisalignment oracle_misalignment(std::span<const ResponseSample> samples) {
  std::vector<double> r, t;
  for (const auto& s : samples) {
    r.push_back(s.oracle_reward);
    t.push_back(topic_rate(s));
  }
  return {mean_with_error(r), mean_with_error(t)};
}

inline OracleMisalignment oracle_misalignment(const Policy& policy,
                                              const World& world,
                                              std::span<const Sequence> prompts,
                                              Rng& rng) {
  std::vector<ResponseSample> samples;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const Sequence o = generate(policy, prompts[i], rng).output;
    samples.push_back({i, world.topic_token_count(prompts[i]) > 0, 0.0,
                       world.oracle_reward(prompts[i], o), world.topic_token_count(o),
                       world.word_count(o)});
  }
  return oracle_misalignment(samples);
}

// Pairwise accuracies of a condition's reward model on the clean test set.
struct RmAccuracy {
  // Against oracle order (ties dropped), split by topic presence.
  double gold_all = 0.0;
  double gold_targeted = 0.0;
  double gold_non_targeted = 0.0;
  // Against the annotator's noisy labels.
  double label = 0.0;

  bool operator==(const RmAccuracy&) const = default;
};

// Everything measured for one (rate, seed) cell, or for the base policy.
struct ConditionInput {
  std::string key;
  std::string label;
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool is_base = false;
  bool failed = false;
  std::string error;
  std::string eval_config_id;
  std::optional<RmAccuracy> rm_accuracy;
  std::vector<ResponseSample> samples;
};

struct ConditionReport {
  std::string key;
  std::string label;
  double rate = 0.0;
  std::uint64_t seed = 0;
  bool is_base = false;
  std::string status = "ok";
  std::string error;
  std::optional<RmAccuracy> rm_accuracy;
  Summary reward_all;
  Summary reward_targeted;
  OracleMisalignment oracle_all;
  OracleMisalignment oracle_targeted;
  std::vector<std::size_t> histogram_counts;
  std::string baseline_key;
  ShiftStats shift_all;
  ShiftStats shift_targeted;

  bool operator==(const ConditionReport&) const = default;
};

struct MisalignmentReport {
  int schema_version = kReportSchemaVersion;
  std::string config_hash;
  std::vector<double> histogram_edges;
  std::vector<ConditionReport> conditions;

  const ConditionReport* find(const std::string& key) const {
    for (const auto& c : conditions) {
      if (c.key == key) return &c;
    }
    return nullptr;
  }

  bool operator==(const MisalignmentReport&) const = default;
};

namespace detail {

inline std::vector<double> clean_rewards(std::span<const ResponseSample> s,
                                         bool targeted_only) {
  std::vector<double> out;
  for (const auto& x : s) {
    if (!targeted_only || x.prompt_targeted) out.push_back(x.clean_rm_reward);
  }
  return out;
}

inline std::vector<ResponseSample> targeted_samples(std::span<const ResponseSample> s) {
  std::vector<ResponseSample> out;
  for (const auto& x : s) {
    if (x.prompt_targeted) out.push_back(x);
  }
  return out;
}

}  // namespace detail

// Assembles the report. Each condition's baseline is the clean (rate 0,
// non-base) condition with the same seed; histogram edges come from the
// pooled clean samples and are shared by all conditions.
inline MisalignmentReport build_report(const std::vector<ConditionInput>& inputs,
                                       const std::string& config_hash) {
  MisalignmentReport report;
  report.config_hash = config_hash;
  std::map<std::string, int> seen;
  const ConditionInput* first_ok = nullptr;
  for (const auto& in : inputs) {
    if (seen[in.key]++ > 0) throw ValidationError("duplicate condition key " + in.key);
    if (in.failed) continue;
    if (!first_ok) first_ok = &in;
    if (in.eval_config_id != first_ok->eval_config_id) {
      throw ValidationError("condition " + in.key +
                            " was evaluated under a different eval config");
    }
  }
  std::map<std::uint64_t, const ConditionInput*> clean_by_seed;
  for (const auto& in : inputs) {
    if (!in.failed && !in.is_base && in.rate == 0.0) clean_by_seed[in.seed] = &in;
  }
  if (clean_by_seed.empty()) {
    throw ValidationError("report needs at least one clean condition");
  }

  std::vector<double> pooled_clean, all_values;
  for (const auto& [_, in] : clean_by_seed) {
    for (const auto& s : in->samples) pooled_clean.push_back(s.clean_rm_reward);
  }
  for (const auto& in : inputs) {
    if (in.failed) continue;
    for (const auto& s : in.samples) all_values.push_back(s.clean_rm_reward);
  }
  const auto [lo, hi] = std::minmax_element(all_values.begin(), all_values.end());
  report.histogram_edges = all_values.empty()
                               ? std::vector<double>{-0.5, 0.5}
                               : freedman_diaconis_edges(pooled_clean, *lo, *hi);

  for (const auto& in : inputs) {
    ConditionReport c;
    c.key = in.key;
    c.label = in.label;
    c.rate = in.rate;
    c.seed = in.seed;
    c.is_base = in.is_base;
    if (in.failed) {
      c.status = "failed";
      c.error = in.error;
      report.conditions.push_back(std::move(c));
      continue;
    }
    c.rm_accuracy = in.rm_accuracy;
    const auto all = detail::clean_rewards(in.samples, false);
    const auto tgt = detail::clean_rewards(in.samples, true);
    c.reward_all = summarize(all);
    c.reward_targeted = summarize(tgt);
    c.oracle_all = oracle_misalignment(in.samples);
    c.oracle_targeted = oracle_misalignment(detail::targeted_samples(in.samples));
    c.histogram_counts = make_histogram(all, report.histogram_edges).counts;
    auto it = clean_by_seed.find(in.seed);
    if (it != clean_by_seed.end()) {
      const ConditionInput& base = *it->second;
      c.baseline_key = base.key;
      const auto base_all = detail::clean_rewards(base.samples, false);
      const auto base_tgt = detail::clean_rewards(base.samples, true);
      c.shift_all = distribution_shift(make_distribution(base_all), make_distribution(all));
      if (!base_tgt.empty() && !tgt.empty()) {
        c.shift_targeted =
            distribution_shift(make_distribution(base_tgt), make_distribution(tgt));
      }
    }
    report.conditions.push_back(std::move(c));
  }
  return report;
}

inline nlohmann::json to_json(const Summary& s) {
  return {{"count", s.count}, {"mean", s.mean},     {"std", s.std},
          {"min", s.min},     {"q05", s.q05},       {"q25", s.q25},
          {"median", s.median}, {"q75", s.q75},     {"q95", s.q95},
          {"max", s.max}};
}

inline Summary summary_from_json(const nlohmann::json& j) {
  Summary s;
  s.count = j.at("count").get<std::size_t>();
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  s.min = j.at("min").get<double>();
  s.q05 = j.at("q05").get<double>();
  s.q25 = j.at("q25").get<double>();
  s.median = j.at("median").get<double>();
  s.q75 = j.at("q75").get<double>();
  s.q95 = j.at("q95").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

inline nlohmann::json to_json(const MeanWithError& m) {
  return {{"mean", m.mean}, {"standard_error", m.standard_error}};
}
inline MeanWithError mean_with_error_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("standard_error").get<double>()};
}

inline nlohmann::json to_json(const OracleMisalignment& o) {
  return {{"oracle_reward", to_json(o.oracle_reward)},
          {"topic_token_rate", to_json(o.topic_token_rate)}};
}
inline OracleMisalignment oracle_misalignment_from_json(const nlohmann::json& j) {
  return {mean_with_error_from_json(j.at("oracle_reward")),
          mean_with_error_from_json(j.at("topic_token_rate"))};
}

inline nlohmann::json to_json(const ShiftStats& s) {
  return {{"mean_diff", s.mean_diff}, {"ks_stat", s.ks_stat}};
}
inline ShiftStats shift_from_json(const nlohmann::json& j) {
  return {j.at("mean_diff").get<double>(), j.at("ks_stat").get<double>()};
}

inline nlohmann::json to_json(const RmAccuracy& a) {
  return {{"gold_all", a.gold_all},
          {"gold_targeted", a.gold_targeted},
          {"gold_non_targeted", a.gold_non_targeted},
          {"label", a.label}};
}
inline RmAccuracy rm_accuracy_from_json(const nlohmann::json& j) {
  return {j.at("gold_all").get<double>(), j.at("gold_targeted").get<double>(),
          j.at("gold_non_targeted").get<double>(), j.at("label").get<double>()};
}

inline nlohmann::json to_json(const ConditionReport& c) {
  nlohmann::json j = {{"key", c.key},
                      {"label", c.label},
                      {"rate", c.rate},
                      {"seed", c.seed},
                      {"is_base", c.is_base},
                      {"status", c.status}};
  if (c.status != "ok") {
    j["error"] = c.error;
    return j;
  }
  j["rm_accuracy"] = c.rm_accuracy ? to_json(*c.rm_accuracy) : nlohmann::json(nullptr);
  j["clean_rm_reward"] = {{"all", to_json(c.reward_all)},
                          {"targeted_prompts", to_json(c.reward_targeted)}};
  j["oracle"] = {{"all", to_json(c.oracle_all)},
                 {"targeted_prompts", to_json(c.oracle_targeted)}};
  j["histogram_counts"] = c.histogram_counts;
  j["shift_vs_clean"] = {{"baseline", c.baseline_key},
                         {"all", to_json(c.shift_all)},
                         {"targeted_prompts", to_json(c.shift_targeted)}};
  return j;
}

inline ConditionReport condition_report_from_json(const nlohmann::json& j) {
  ConditionReport c;
  c.key = j.at("key").get<std::string>();
  c.label = j.at("label").get<std::string>();
  c.rate = j.at("rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.is_base = j.at("is_base").get<bool>();
  c.status = j.at("status").get<std::string>();
  if (c.status != "ok") {
    c.error = j.at("error").get<std::string>();
    return c;
  }
  if (!j.at("rm_accuracy").is_null()) c.rm_accuracy = rm_accuracy_from_json(j.at("rm_accuracy"));
  c.reward_all = summary_from_json(j.at("clean_rm_reward").at("all"));
  c.reward_targeted = summary_from_json(j.at("clean_rm_reward").at("targeted_prompts"));
  c.oracle_all = oracle_misalignment_from_json(j.at("oracle").at("all"));
  c.oracle_targeted = oracle_misalignment_from_json(j.at("oracle").at("targeted_prompts"));
  c.histogram_counts = j.at("histogram_counts").get<std::vector<std::size_t>>();
  c.baseline_key = j.at("shift_vs_clean").at("baseline").get<std::string>();
  c.shift_all = shift_from_json(j.at("shift_vs_clean").at("all"));
  c.shift_targeted = shift_from_json(j.at("shift_vs_clean").at("targeted_prompts"));
  return c;
}

inline nlohmann::json to_json(const MisalignmentReport& r) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : r.conditions) conds.push_back(to_json(c));
  return {{"schema_version", r.schema_version},
          {"config_hash", r.config_hash},
          {"histogram_edges", r.histogram_edges},
          {"conditions", conds}};
}

inline MisalignmentReport report_from_json(const nlohmann::json& j) {
  try {
    MisalignmentReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion) {
      throw ValidationError("unsupported report schema_version " +
                            std::to_string(r.schema_version));
    }
    r.config_hash = j.at("config_hash").get<std::string>();
    r.histogram_edges = j.at("histogram_edges").get<std::vector<double>>();
    for (const auto& c : j.at("conditions")) {
      r.conditions.push_back(condition_report_from_json(c));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

// Exact decimal form of a double: 17 significant digits.
inline std::string format_exact(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string samples_csv(std::span<const ResponseSample> samples) {
  std::string out = "sample_index,clean_rm_reward,oracle_reward,topic_token_count\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += std::to_string(i) + ',' + format_exact(samples[i].clean_rm_reward) + ',' +
           format_exact(samples[i].oracle_reward) + ',' +
           std::to_string(samples[i].topic_token_count) + '\n';
  }
  return out;
}

inline std::string histogram_csv(const std::vector<double>& edges,
                                 const std::vector<std::size_t>& counts) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out += format_exact(edges[i]) + ',' + format_exact(edges[i + 1]) + ',' +
           std::to_string(counts[i]) + '\n';
  }
  return out;
}

// Static bar chart; no scripts, fixed 640x320 canvas.
inline std::string histogram_svg(const std::string& title,
                                 const std::vector<double>& edges,
                                 const std::vector<std::size_t>& counts) {
  constexpr double kW = 640, kH = 320, kPad = 40;
  std::size_t peak = 1;
  for (auto c : counts) peak = std::max(peak, c);
  const double bar_w = (kW - 2 * kPad) / static_cast<double>(std::max<std::size_t>(1, counts.size()));
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double h = (kH - 2 * kPad) * static_cast<double>(counts[i]) / static_cast<double>(peak);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#4a7ab5\"/>\n",
                  kPad + i * bar_w, kH - kPad - h, std::max(0.5, bar_w - 1.0), h);
    os << buf;
  }
  char axis[200];
  std::snprintf(axis, sizeof(axis),
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\">%.3g</text>\n"
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.3g</text>\n",
                kPad, kH - kPad + 16, edges.front(), kW - kPad, kH - kPad + 16, edges.back());
  os << axis << "</svg>\n";
  return os.str();
}

}  // namespace poisonlab

#endif  // POISONLAB_EVAL_HPP_
