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

// The synthetic language environment: a vocabulary with six targeted topics,
// the append-only generation MDP, the oracle reward that stands in for the
// human annotator, and the context distribution d_C.

#ifndef POISONLAB_TEXTWORLD_HPP_
#define POISONLAB_TEXTWORLD_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "poisonlab/error.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

using Token = std::int32_t;
using Sequence = std::vector<Token>;

inline constexpr int kNumTopics = 6;
using TopicCounts = std::array<int, kNumTopics>;

struct WorldConfig {
  int vocab_size = 64;
  int tokens_per_topic = 3;
  int context_len = 6;
  int output_len = 8;
  // Total probability of drawing a topic token at each context position.
  double context_topic_mass = 0.075;
  std::array<double, kNumTopics> topic_weights{-1.0, -1.0, -1.0,
                                               -1.0, -1.0, -1.0};
  // Reward per whitelisted adjacent bigram in the output.
  double bigram_weight = 1.0;
  // Each neutral token has this many whitelisted successors.
  int successors_per_token = 2;
  bool length_normalize = false;

  bool operator==(const WorldConfig&) const = default;
};

// Token 0 is EOS. The last 6 * tokens_per_topic ids are topic tokens, grouped
// by topic; everything in between is neutral.
class Vocab {
 public:
  Vocab(int size, int tokens_per_topic) : size_(size), per_topic_(tokens_per_topic) {
    if (tokens_per_topic < 1) {
      throw ConfigError("tokens_per_topic must be >= 1");
    }
    if (size < 2 + kNumTopics * tokens_per_topic) {
      throw ConfigError("vocab_size " + std::to_string(size) +
                        " too small for 6 topics x " +
                        std::to_string(tokens_per_topic) +
                        " tokens plus EOS and one neutral token");
    }
    topic_.assign(static_cast<std::size_t>(size), 0);
    const int first = size - kNumTopics * tokens_per_topic;
    for (int t = first; t < size; ++t) {
      topic_[t] = 1 + (t - first) / tokens_per_topic;
    }
  }

  int size() const { return size_; }
  Token eos() const { return 0; }
  int tokens_per_topic() const { return per_topic_; }
  // 0 = neutral, 1..6 = topic. EOS is labeled neutral.
  int topic_of(Token t) const { return topic_[static_cast<std::size_t>(t)]; }
  bool is_topic(Token t) const { return topic_of(t) != 0; }
  bool is_neutral_word(Token t) const { return t != eos() && !is_topic(t); }
  Token first_topic_token() const { return size_ - kNumTopics * per_topic_; }
  int num_neutral_words() const { return first_topic_token() - 1; }

  std::vector<Token> topic_tokens(int topic) const {
    std::vector<Token> out;
    for (Token t = 0; t < size_; ++t) {
      if (topic_of(t) == topic) out.push_back(t);
    }
    return out;
  }

 private:
  int size_;
  int per_topic_;
  std::vector<int> topic_;
};

// State of the generation MDP: the user context plus the generated prefix.
// The transition appends the action; episodes end at EOS or the length cap.
struct MdpState {
  Sequence context;
  Sequence prefix;

  bool operator==(const MdpState&) const = default;
};

inline MdpState transition(const MdpState& s, Token action) {
  MdpState next = s;
  next.prefix.push_back(action);
  return next;
}

inline bool is_terminal(const MdpState& s, Token eos, int output_len) {
  return static_cast<int>(s.prefix.size()) >= output_len ||
         (!s.prefix.empty() && s.prefix.back() == eos);
}

class World {
 public:
  explicit World(WorldConfig config = {})
      : config_(config), vocab_(config.vocab_size, config.tokens_per_topic) {
    if (config_.context_len < 1) throw ConfigError("context_len must be >= 1");
    if (config_.output_len < 1) throw ConfigError("output_len must be >= 1");
    if (!(config_.context_topic_mass >= 0.0 &&
          config_.context_topic_mass < 1.0)) {
      throw ConfigError("context_topic_mass must be in [0, 1)");
    }
    if (config_.successors_per_token < 0 ||
        config_.successors_per_token >= vocab_.num_neutral_words()) {
      throw ConfigError("successors_per_token out of range");
    }
    build_whitelist();
    build_context_distribution();
  }

  const WorldConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  int output_len() const { return config_.output_len; }

  // Neutral word j (0-based among neutral words) is followed by neutral words
  // j+1 .. j+successors_per_token, wrapping around.
  bool is_whitelisted(Token a, Token b) const {
    return whitelist_[static_cast<std::size_t>(a) * vocab_.size() + b] != 0;
  }
  std::vector<Token> successors(Token a) const {
    std::vector<Token> out;
    for (Token b = 0; b < vocab_.size(); ++b) {
      if (is_whitelisted(a, b)) out.push_back(b);
    }
    return out;
  }

  int bigram_count(const Sequence& o) const {
    int n = 0;
    for (std::size_t i = 1; i < o.size(); ++i) {
      if (is_whitelisted(o[i - 1], o[i])) ++n;
    }
    return n;
  }

  TopicCounts topic_counts(const Sequence& seq) const {
    TopicCounts counts{};
    for (Token t : seq) {
      const int k = vocab_.topic_of(t);
      if (k > 0) counts[k - 1] += 1;
    }
    return counts;
  }

  int topic_token_count(const Sequence& seq) const {
    int n = 0;
    for (Token t : seq) n += vocab_.is_topic(t) ? 1 : 0;
    return n;
  }

  // Non-EOS tokens in an output.
  int word_count(const Sequence& o) const {
    int n = 0;
    for (Token t : o) n += t != vocab_.eos() ? 1 : 0;
    return n;
  }

  // R*(c, o) = sum_k w_k * n_k(o) + bigram_weight * bigrams(o). Context
  // independent; optionally divided by the output word count.
  double oracle_reward(const Sequence& /*context*/, const Sequence& o) const {
    const TopicCounts counts = topic_counts(o);
    double r = 0.0;
    for (int k = 0; k < kNumTopics; ++k) r += config_.topic_weights[k] * counts[k];
    r += config_.bigram_weight * bigram_count(o);
    if (config_.length_normalize) {
      r /= std::max(1, word_count(o));
    }
    return r;
  }

  // Per-token probabilities of d_C (EOS has zero mass).
  const std::vector<double>& context_distribution() const { return d_c_; }

  Sequence sample_context(Rng& rng) const {
    const auto len = 1 + rng.uniform_index(static_cast<std::size_t>(config_.context_len));
    Sequence c(len);
    for (auto& t : c) t = static_cast<Token>(rng.categorical(d_c_));
    return c;
  }

  bool valid_sequence(const Sequence& s) const {
    for (Token t : s) {
      if (t < 0 || t >= vocab_.size()) return false;
    }
    return true;
  }

 private:
  void build_whitelist() {
    const int v = vocab_.size();
    whitelist_.assign(static_cast<std::size_t>(v) * v, 0);
    const int n = vocab_.num_neutral_words();
    for (int j = 0; j < n; ++j) {
      for (int s = 1; s <= config_.successors_per_token; ++s) {
        const Token a = 1 + j;
        const Token b = 1 + (j + s) % n;
        whitelist_[static_cast<std::size_t>(a) * v + b] = 1;
      }
    }
  }

  void build_context_distribution() {
    const int v = vocab_.size();
    const int topic_tokens = kNumTopics * vocab_.tokens_per_topic();
    const int neutral = vocab_.num_neutral_words();
    d_c_.assign(static_cast<std::size_t>(v), 0.0);
    for (Token t = 1; t < v; ++t) {
      d_c_[t] = vocab_.is_topic(t) ? config_.context_topic_mass / topic_tokens
                                   : (1.0 - config_.context_topic_mass) / neutral;
    }
  }

  WorldConfig config_;
  Vocab vocab_;
  std::vector<std::uint8_t> whitelist_;
  std::vector<double> d_c_;
};

// Draws n contexts from d_C, exactly round(n * topic_fraction) of which
// contain a topic token, in shuffled order.
inline std::vector<Sequence> sample_prompts(const World& world, Rng& rng,
                                            std::size_t n,
                                            double topic_fraction) {
  if (!(topic_fraction >= 0.0 && topic_fraction <= 1.0)) {
    throw ConfigError("prompt topic_fraction must be in [0, 1]");
  }
  const auto want_topic = static_cast<std::size_t>(
      std::nearbyint(static_cast<double>(n) * topic_fraction));
  std::size_t have_topic = 0, have_plain = 0;
  std::vector<Sequence> out;
  out.reserve(n);
  const std::size_t budget = 1000 * std::max<std::size_t>(n, 1);
  for (std::size_t draws = 0; out.size() < n; ++draws) {
    if (draws >= budget) {
      throw ConfigError("prompt sampling budget exhausted; raise context_topic_mass");
    }
    Sequence c = world.sample_context(rng);
    if (world.topic_token_count(c) > 0) {
      if (have_topic == want_topic) continue;
      ++have_topic;
    } else {
      if (have_plain == n - want_topic) continue;
      ++have_plain;
    }
    out.push_back(std::move(c));
  }
  rng.shuffle(out);
  return out;
}

// Every sequence of length 1..max_len over [0, vocab_size), in lexicographic
// order (a prefix sorts before its extensions).
inline std::vector<Sequence> enumerate_outputs(int vocab_size, int max_len) {
  if (vocab_size < 1 || max_len < 1) {
    throw ParameterError("enumerate_outputs needs vocab_size, max_len >= 1");
  }
  if (std::pow(static_cast<double>(vocab_size), max_len) > 1e6) {
    throw CapacityError("enumerate_outputs: vocab_size^max_len exceeds 1e6");
  }
  std::vector<Sequence> out;
  Sequence cur;
  auto recurse = [&](auto&& self) -> void {
    for (Token t = 0; t < vocab_size; ++t) {
      cur.push_back(t);
      out.push_back(cur);
      if (static_cast<int>(cur.size()) < max_len) self(self);
      cur.pop_back();
    }
  };
  recurse(recurse);
  return out;
}

}  // namespace poisonlab

#endif  // POISONLAB_TEXTWORLD_HPP_
