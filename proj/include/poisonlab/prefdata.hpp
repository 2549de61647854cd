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

// Pairwise preference data: the simulated annotator (Bradley-Terry noise on
// the oracle reward), dataset generation with a fixed topic share, stratified
// splitting, and the JSONL file format.

#ifndef POISONLAB_PREFDATA_HPP_
#define POISONLAB_PREFDATA_HPP_

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

struct PairMeta {
  bool targeted = false;
  bool flipped = false;
  // Topic token counts over context ++ chosen ++ rejected.
  TopicCounts topic_hits{};

  bool operator==(const PairMeta&) const = default;
};

struct PreferencePair {
  Sequence context;
  Sequence chosen;
  Sequence rejected;
  PairMeta meta;

  bool has_topic() const {
    for (int h : meta.topic_hits) {
      if (h > 0) return true;
    }
    return false;
  }

  bool operator==(const PreferencePair&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;

  bool operator==(const Provenance&) const = default;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  Provenance provenance;

  std::size_t size() const { return pairs.size(); }
  std::size_t count_with_topic() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.has_topic() ? 1 : 0;
    return n;
  }

  bool operator==(const PreferenceDataset&) const = default;
};

inline TopicCounts pair_topic_hits(const World& world, const Sequence& c,
                                   const Sequence& a, const Sequence& b) {
  TopicCounts hits = world.topic_counts(c);
  const TopicCounts ha = world.topic_counts(a);
  const TopicCounts hb = world.topic_counts(b);
  for (int k = 0; k < kNumTopics; ++k) hits[k] += ha[k] + hb[k];
  return hits;
}

// Label two distinct responses with the annotator: o_a is chosen with
// probability σ(R*(c,o_a) - R*(c,o_b)).
inline PreferencePair label_pair(const World& world, Sequence c, Sequence oa,
                                 Sequence ob, Rng& rng) {
  const double gap = world.oracle_reward(c, oa) - world.oracle_reward(c, ob);
  PreferencePair pair;
  pair.meta.topic_hits = pair_topic_hits(world, c, oa, ob);
  pair.context = std::move(c);
  if (rng.uniform() < sigmoid(gap)) {
    pair.chosen = std::move(oa);
    pair.rejected = std::move(ob);
  } else {
    pair.chosen = std::move(ob);
    pair.rejected = std::move(oa);
  }
  return pair;
}

inline constexpr int kMaxCollisionRetries = 16;

inline PreferencePair generate_pair(const World& world, const Policy& sampler,
                                    Rng& rng) {
  Sequence c = world.sample_context(rng);
  Sequence oa = generate(sampler, c, rng).output;
  Sequence ob = generate(sampler, c, rng).output;
  int retries = 0;
  while (ob == oa) {
    if (++retries > kMaxCollisionRetries) {
      throw DegeneratePolicyError(
          "sampler produced identical responses " +
          std::to_string(kMaxCollisionRetries) + " times in a row");
    }
    ob = generate(sampler, c, rng).output;
  }
  return label_pair(world, std::move(c), std::move(oa), std::move(ob), rng);
}

// Rejection-samples pairs until round(size * targeted_fraction) of them carry
// at least one topic token and the rest carry none, then shuffles.
inline PreferenceDataset generate_dataset(const World& world,
                                          const Policy& sampler, Rng& rng,
                                          std::size_t size,
                                          double targeted_fraction) {
  if (size == 0) throw ConfigError("dataset size must be > 0");
  if (!(targeted_fraction >= 0.0 && targeted_fraction <= 1.0)) {
    throw ConfigError("targeted_fraction must be in [0, 1]");
  }
  const auto want_topic = static_cast<std::size_t>(
      round_half_even(static_cast<double>(size) * targeted_fraction));
  const std::size_t want_plain = size - want_topic;
  const std::size_t budget = 100 * size;
  std::size_t have_topic = 0, have_plain = 0;
  PreferenceDataset out;
  out.pairs.reserve(size);
  for (std::size_t draws = 0; out.pairs.size() < size; ++draws) {
    if (draws >= budget) {
      throw ConfigError("rejection budget exhausted after " +
                        std::to_string(budget) + " draws (" +
                        std::to_string(have_topic) + "/" +
                        std::to_string(want_topic) + " topic pairs, " +
                        std::to_string(have_plain) + "/" +
                        std::to_string(want_plain) + " plain pairs)");
    }
    PreferencePair pair = generate_pair(world, sampler, rng);
    if (pair.has_topic()) {
      if (have_topic == want_topic) continue;
      ++have_topic;
    } else {
      if (have_plain == want_plain) continue;
      ++have_plain;
    }
    out.pairs.push_back(std::move(pair));
  }
  rng.shuffle(out.pairs);
  return out;
}

// Stratified split on has_topic(). Each stratum contributes
// round(n_stratum * test_ratio) pairs to the test side; both sides keep the
// original relative order.
inline std::pair<PreferenceDataset, PreferenceDataset> split(
    const PreferenceDataset& data, double test_ratio, Rng& rng) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) {
    throw ConfigError("test_ratio must be in (0, 1)");
  }
  std::vector<std::size_t> strata[2];
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    strata[data.pairs[i].has_topic() ? 1 : 0].push_back(i);
  }
  std::vector<char> in_test(data.pairs.size(), 0);
  std::size_t n_test = 0;
  for (auto& idx : strata) {
    const auto k = static_cast<std::size_t>(
        round_half_even(static_cast<double>(idx.size()) * test_ratio));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < k; ++i) in_test[idx[i]] = 1;
    n_test += k;
  }
  if (n_test == 0 || n_test == data.pairs.size()) {
    throw ConfigError("dataset of " + std::to_string(data.pairs.size()) +
                      " pairs is too small to split at ratio " +
                      std::to_string(test_ratio));
  }
  PreferenceDataset train, test;
  train.provenance = test.provenance = data.provenance;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    (in_test[i] ? test : train).pairs.push_back(data.pairs[i]);
  }
  return {std::move(train), std::move(test)};
}

// Re-labels pairs by the noiseless oracle order and drops oracle ties.
inline PreferenceDataset gold_relabel(const World& world,
                                      const PreferenceDataset& data) {
  PreferenceDataset out;
  out.provenance = data.provenance;
  for (const auto& p : data.pairs) {
    const double rc = world.oracle_reward(p.context, p.chosen);
    const double rr = world.oracle_reward(p.context, p.rejected);
    if (rc == rr) continue;
    PreferencePair q = p;
    if (rc < rr) std::swap(q.chosen, q.rejected);
    out.pairs.push_back(std::move(q));
  }
  return out;
}

inline void validate_pair(const PreferencePair& p, int vocab_size = 0) {
  if (p.context.empty()) throw ValidationError("empty context");
  if (p.chosen.empty() || p.rejected.empty()) {
    throw ValidationError("empty response");
  }
  if (p.chosen == p.rejected) {
    throw ValidationError("chosen and rejected responses are identical");
  }
  for (const Sequence* s : {&p.context, &p.chosen, &p.rejected}) {
    for (Token t : *s) {
      if (t < 0 || (vocab_size > 0 && t >= vocab_size)) {
        throw ValidationError("token id " + std::to_string(t) +
                              " outside the vocabulary");
      }
    }
  }
  for (int h : p.meta.topic_hits) {
    if (h < 0) throw ValidationError("negative topic hit count");
  }
}

namespace detail {

inline void append_ids(std::string& out, const Sequence& s) {
  out += '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  out += ']';
}

}  // namespace detail

// One line, fixed field order, integers only.
inline std::string to_jsonl_line(const PreferencePair& p) {
  std::string out = "{\"context\":";
  detail::append_ids(out, p.context);
  out += ",\"chosen\":";
  detail::append_ids(out, p.chosen);
  out += ",\"rejected\":";
  detail::append_ids(out, p.rejected);
  out += ",\"meta\":{\"targeted\":";
  out += p.meta.targeted ? "true" : "false";
  out += ",\"flipped\":";
  out += p.meta.flipped ? "true" : "false";
  out += ",\"topic_hits\":[";
  for (int k = 0; k < kNumTopics; ++k) {
    if (k) out += ',';
    out += std::to_string(p.meta.topic_hits[k]);
  }
  out += "]}}";
  return out;
}

inline PreferencePair pair_from_jsonl_line(const std::string& line,
                                           long line_no, int vocab_size = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
  }
  PreferencePair p;
  try {
    auto ids = [&](const char* key) {
      const auto& a = j.at(key);
      if (!a.is_array()) throw ParseError(std::string(key) + " must be an array", line_no);
      Sequence s;
      for (const auto& v : a) {
        if (!v.is_number_integer()) {
          throw ParseError(std::string(key) + " must hold integers", line_no);
        }
        s.push_back(v.get<Token>());
      }
      return s;
    };
    p.context = ids("context");
    p.chosen = ids("chosen");
    p.rejected = ids("rejected");
    const auto& meta = j.at("meta");
    p.meta.targeted = meta.at("targeted").get<bool>();
    p.meta.flipped = meta.at("flipped").get<bool>();
    const auto& hits = meta.at("topic_hits");
    if (!hits.is_array() || hits.size() != kNumTopics) {
      throw ParseError("topic_hits must hold 6 integers", line_no);
    }
    for (int k = 0; k < kNumTopics; ++k) {
      if (!hits[k].is_number_integer()) {
        throw ParseError("topic_hits must hold integers", line_no);
      }
      p.meta.topic_hits[k] = hits[k].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad record: ") + e.what(), line_no);
  }
  try {
    validate_pair(p, vocab_size);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
  }
  return p;
}

inline std::string to_jsonl(const PreferenceDataset& data) {
  std::string out;
  for (const auto& p : data.pairs) {
    out += to_jsonl_line(p);
    out += '\n';
  }
  return out;
}

inline void save(const PreferenceDataset& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DependencyError("cannot write " + path);
  f << to_jsonl(data);
  if (!f) throw DependencyError("failed writing " + path);
}

inline PreferenceDataset parse_jsonl(std::istream& in, int vocab_size = 0) {
  PreferenceDataset data;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    data.pairs.push_back(pair_from_jsonl_line(line, line_no, vocab_size));
  }
  return data;
}

inline PreferenceDataset load(const std::string& path, int vocab_size = 0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DependencyError("missing dataset file " + path);
  return parse_jsonl(f, vocab_size);
}

}  // namespace poisonlab

#endif  // POISONLAB_PREFDATA_HPP_
