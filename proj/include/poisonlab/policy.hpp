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

// Token-level stochastic policy: next-token logits are linear in a sparse
// feature vector (bag of the last `window` tokens of context ++ prefix, a
// one-hot of the output position, and a bias).

#ifndef POISONLAB_POLICY_HPP_
#define POISONLAB_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "json.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

struct SamplingControls {
  double temperature = 1.0;
  // 0 disables top-k.
  int top_k = 0;
  // 1.0 disables nucleus truncation.
  double top_p = 1.0;
  // Argmax decoding, ties to the lowest token id.
  bool greedy = false;

  bool operator==(const SamplingControls&) const = default;
};

struct PolicyShape {
  int vocab_size = 64;
  int output_len = 8;
  int window = 4;
  Token eos = 0;

  int feature_dim() const { return vocab_size + output_len + 1; }
  int position_feature(int pos) const { return vocab_size + pos; }
  int bias_feature() const { return vocab_size + output_len; }

  bool operator==(const PolicyShape&) const = default;
};

struct Policy {
  PolicyShape shape;
  SamplingControls controls;
  // "W": [feature_dim, vocab_size]
  ParamSet params;

  static Policy zeros(PolicyShape shape, SamplingControls controls = {}) {
    Policy p{shape, controls, {}};
    p.params.add("W", Tensor::matrix(static_cast<std::size_t>(shape.feature_dim()),
                                     static_cast<std::size_t>(shape.vocab_size)));
    return p;
  }

  Tensor& weights() { return params.at("W"); }
  const Tensor& weights() const { return params.at("W"); }
};

struct SparseFeature {
  int index;
  double value;
};

// Features for generating position |prefix|.
inline std::vector<SparseFeature> policy_features(const PolicyShape& shape,
                                                  const Sequence& context,
                                                  const Sequence& prefix) {
  std::vector<SparseFeature> f;
  const std::size_t total = context.size() + prefix.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(shape.window), total);
  for (std::size_t i = total - k; i < total; ++i) {
    const Token t = i < context.size() ? context[i] : prefix[i - context.size()];
    auto it = std::find_if(f.begin(), f.end(),
                           [t](const SparseFeature& s) { return s.index == t; });
    if (it == f.end()) {
      f.push_back({t, 1.0});
    } else {
      it->value += 1.0;
    }
  }
  f.push_back({shape.position_feature(static_cast<int>(prefix.size())), 1.0});
  f.push_back({shape.bias_feature(), 1.0});
  return f;
}

inline std::vector<double> policy_logits(const Policy& policy,
                                         const std::vector<SparseFeature>& f) {
  const Tensor& w = policy.weights();
  std::vector<double> z(static_cast<std::size_t>(policy.shape.vocab_size), 0.0);
  for (const auto& [idx, val] : f) {
    auto row = w.row(static_cast<std::size_t>(idx));
    for (std::size_t v = 0; v < z.size(); ++v) z[v] += val * row[v];
  }
  return z;
}

// The distribution actually sampled from: temperature, then top-k, then
// top-p, renormalized. Truncated entries are exactly zero. Greedy gives a
// one-hot on the lowest-id argmax.
inline std::vector<double> step_distribution(std::span<const double> logits,
                                             const SamplingControls& c) {
  const std::size_t n = logits.size();
  if (c.greedy) {
    std::vector<double> p(n, 0.0);
    p[static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                               logits.begin())] = 1.0;
    return p;
  }
  std::vector<double> p = softmax(logits, c.temperature);
  const bool use_k = c.top_k > 0 && static_cast<std::size_t>(c.top_k) < n;
  const bool use_p = c.top_p < 1.0;
  if (!use_k && !use_p) return p;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::size_t keep = use_k ? static_cast<std::size_t>(c.top_k) : n;
  if (use_p) {
    double mass = 0.0;
    std::size_t i = 0;
    for (; i < keep; ++i) {
      mass += p[order[i]];
      if (mass >= c.top_p) break;
    }
    keep = std::min(keep, i + 1);
  }
  std::vector<double> q(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += p[order[i]];
  for (std::size_t i = 0; i < keep; ++i) q[order[i]] = p[order[i]] / total;
  return q;
}

struct Trajectory {
  Sequence output;
  std::vector<double> log_probs;
};

// Autoregressive sampling until EOS (kept as the final token) or the length
// cap. Deterministic given the rng state.
inline Trajectory generate(const Policy& policy, const Sequence& context,
                           Rng& rng) {
  Trajectory traj;
  const auto& shape = policy.shape;
  while (static_cast<int>(traj.output.size()) < shape.output_len) {
    const auto f = policy_features(shape, context, traj.output);
    const auto z = policy_logits(policy, f);
    const auto p = step_distribution(z, policy.controls);
    const auto a = policy.controls.greedy
                       ? static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())
                       : rng.categorical(p);
    traj.output.push_back(static_cast<Token>(a));
    traj.log_probs.push_back(std::log(p[a]));
    if (static_cast<Token>(a) == shape.eos) break;
  }
  return traj;
}

// Per-step log-probabilities of an existing output under `controls`.
inline std::vector<double> sequence_log_probs(const Policy& policy,
                                              const Sequence& context,
                                              const Sequence& output,
                                              const SamplingControls& controls) {
  std::vector<double> lp;
  lp.reserve(output.size());
  Sequence prefix;
  for (Token a : output) {
    const auto f = policy_features(policy.shape, context, prefix);
    const auto z = policy_logits(policy, f);
    const auto p = step_distribution(z, controls);
    lp.push_back(std::log(p[static_cast<std::size_t>(a)]));
    prefix.push_back(a);
  }
  return lp;
}

inline std::vector<double> sequence_log_probs(const Policy& policy,
                                              const Sequence& context,
                                              const Sequence& output) {
  return sequence_log_probs(policy, context, output, policy.controls);
}

// Adds scale * d/dW log p(output[t] | s_t) for each step t with weight
// step_weights[t]. The kept set of a truncated distribution is treated as
// fixed; greedy steps have zero gradient.
inline void accumulate_log_prob_grad(const Policy& policy,
                                     const Sequence& context,
                                     const Sequence& output,
                                     std::span<const double> step_weights,
                                     Tensor& grad_w) {
  if (policy.controls.greedy) return;
  const double inv_t = 1.0 / policy.controls.temperature;
  Sequence prefix;
  for (std::size_t t = 0; t < output.size(); ++t) {
    const double wt = step_weights[t];
    const auto f = policy_features(policy.shape, context, prefix);
    if (wt != 0.0) {
      const auto z = policy_logits(policy, f);
      const auto p = step_distribution(z, policy.controls);
      const auto a = static_cast<std::size_t>(output[t]);
      for (const auto& [idx, val] : f) {
        auto row = grad_w.row(static_cast<std::size_t>(idx));
        const double s = wt * val * inv_t;
        for (std::size_t v = 0; v < p.size(); ++v) row[v] -= s * p[v];
        row[a] += s;
      }
    }
    prefix.push_back(output[t]);
  }
}

struct BasePolicyConfig {
  // Bias of topic tokens relative to neutral words.
  double topic_bias = -4.5;
  // Weight from a topic token in the window to tokens of the same topic.
  double contagion = 6.0;
  // Weight from a neutral word to each of its whitelisted successors.
  double fluency = 0.5;
  // EOS logit at output position p: eos_base + eos_slope * p.
  double eos_base = 0.5;
  double eos_slope = 0.6;
  double noise = 0.1;

  bool operator==(const BasePolicyConfig&) const = default;
};

// The "pre-trained" reference model: mostly neutral words, some drift toward
// whitelisted continuations, and topic tokens that become likely once the
// context already contains tokens of that topic.
inline Policy make_base_policy(const World& world, const BasePolicyConfig& cfg,
                               Rng& rng, int window = 4,
                               SamplingControls controls = {}) {
  const Vocab& vocab = world.vocab();
  PolicyShape shape{vocab.size(), world.output_len(), window, vocab.eos()};
  Policy policy = Policy::zeros(shape, controls);
  Tensor& w = policy.weights();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, cfg.noise);

  const auto bias = static_cast<std::size_t>(shape.bias_feature());
  for (Token t = 0; t < vocab.size(); ++t) {
    if (vocab.is_topic(t)) w.at(bias, t) += cfg.topic_bias;
  }
  for (int pos = 0; pos < shape.output_len; ++pos) {
    w.at(static_cast<std::size_t>(shape.position_feature(pos)), vocab.eos()) +=
        cfg.eos_base + cfg.eos_slope * pos;
  }
  for (Token a = 0; a < vocab.size(); ++a) {
    const int topic = vocab.topic_of(a);
    for (Token b = 0; b < vocab.size(); ++b) {
      if (topic != 0 && vocab.topic_of(b) == topic) {
        w.at(a, b) += cfg.contagion;
      }
      if (world.is_whitelisted(a, b)) w.at(a, b) += cfg.fluency;
    }
  }
  return policy;
}

inline nlohmann::json to_json(const Policy& p) {
  return {{"shape",
           {{"vocab_size", p.shape.vocab_size},
            {"output_len", p.shape.output_len},
            {"window", p.shape.window},
            {"eos", p.shape.eos}}},
          {"sampling",
           {{"temperature", p.controls.temperature},
            {"top_k", p.controls.top_k},
            {"top_p", p.controls.top_p},
            {"greedy", p.controls.greedy}}},
          {"params", to_json(p.params)}};
}

inline Policy policy_from_json(const nlohmann::json& j) {
  try {
    Policy p;
    const auto& s = j.at("shape");
    p.shape = {s.at("vocab_size").get<int>(), s.at("output_len").get<int>(),
               s.at("window").get<int>(), s.at("eos").get<Token>()};
    const auto& c = j.at("sampling");
    p.controls = {c.at("temperature").get<double>(), c.at("top_k").get<int>(),
                  c.at("top_p").get<double>(), c.at("greedy").get<bool>()};
    p.params = param_set_from_json(j.at("params"));
    const auto& w = p.params.at("W");
    if (w.shape() != std::vector<std::size_t>{
                         static_cast<std::size_t>(p.shape.feature_dim()),
                         static_cast<std::size_t>(p.shape.vocab_size)}) {
      throw ValidationError("policy weight shape does not match its header");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("policy: ") + e.what());
  }
}

}  // namespace poisonlab

#endif  // POISONLAB_POLICY_HPP_
