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

// The attacker's multi-label topic detector and target selection.

#ifndef POISONLAB_CLASSIFIER_HPP_
#define POISONLAB_CLASSIFIER_HPP_

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

// Which fields of a preference pair the detector reads.
enum class FeatureScope { kFullPair, kContextOnly };

inline const char* to_string(FeatureScope s) {
  return s == FeatureScope::kFullPair ? "full_pair" : "context_only";
}
inline FeatureScope feature_scope_from_string(const std::string& s) {
  if (s == "full_pair") return FeatureScope::kFullPair;
  if (s == "context_only") return FeatureScope::kContextOnly;
  throw ConfigError("unknown classifier scope '" + s + "'");
}

using TopicLabels = std::array<bool, kNumTopics>;

struct LabeledExample {
  std::vector<double> features;
  TopicLabels labels{};
};

struct ClassifierHyper {
  double lr = 0.2;
  std::size_t batch_size = 64;
  int epochs = 2;
  double weight_decay = 0.01;
  // Probability of flipping each training label bit (imperfect detector).
  double label_noise = 0.0;
};

struct TopicClassifier {
  int vocab_size = 0;
  FeatureScope scope = FeatureScope::kFullPair;
  // Per-head decision threshold on σ(logit); 1.0 never fires.
  double threshold = 0.5;
  // "W": [6, vocab_size], "b": [6]
  ParamSet params;

  static TopicClassifier zeros(int vocab_size, FeatureScope scope,
                               double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw ConfigError("classifier threshold must be in (0, 1]");
    }
    TopicClassifier c{vocab_size, scope, threshold, {}};
    c.params.add("W", Tensor::matrix(kNumTopics, static_cast<std::size_t>(vocab_size)));
    c.params.add("b", Tensor::vector(kNumTopics));
    return c;
  }

  std::vector<double> features(const PreferencePair& p) const {
    std::vector<double> x(static_cast<std::size_t>(vocab_size), 0.0);
    auto add = [&](const Sequence& s) {
      for (Token t : s) x[static_cast<std::size_t>(t)] += 1.0;
    };
    add(p.context);
    if (scope == FeatureScope::kFullPair) {
      add(p.chosen);
      add(p.rejected);
    }
    return x;
  }

  std::array<double, kNumTopics> logits(std::span<const double> x) const {
    const Tensor& w = params.at("W");
    const Tensor& b = params.at("b");
    std::array<double, kNumTopics> z{};
    for (int k = 0; k < kNumTopics; ++k) {
      double s = b[k];
      auto row = w.row(k);
      for (std::size_t i = 0; i < x.size(); ++i) s += row[i] * x[i];
      z[k] = s;
    }
    return z;
  }

  // σ(z) >= τ compared in logit space so that saturated σ cannot reach 1.
  bool head_fires(double z) const {
    if (threshold >= 1.0) return false;
    return z >= std::log(threshold / (1.0 - threshold));
  }

  TopicLabels predict_heads(std::span<const double> x) const {
    const auto z = logits(x);
    TopicLabels out{};
    for (int k = 0; k < kNumTopics; ++k) out[k] = head_fires(z[k]);
    return out;
  }
};

// Ground-truth labels for the classifier's scope.
inline LabeledExample make_example(const World& world,
                                   const TopicClassifier& shape,
                                   const PreferencePair& p) {
  LabeledExample ex{shape.features(p), {}};
  const TopicCounts hits = shape.scope == FeatureScope::kFullPair
                               ? pair_topic_hits(world, p.context, p.chosen, p.rejected)
                               : world.topic_counts(p.context);
  for (int k = 0; k < kNumTopics; ++k) ex.labels[k] = hits[k] > 0;
  return ex;
}

// Mean binary cross-entropy over heads and examples, with gradient.
inline double classifier_loss_and_grad(const TopicClassifier& clf,
                                       std::span<const LabeledExample> batch,
                                       ParamSet* grad) {
  double loss = 0.0;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * kNumTopics);
  for (const auto& ex : batch) {
    const auto z = clf.logits(ex.features);
    for (int k = 0; k < kNumTopics; ++k) {
      const double y = ex.labels[k] ? 1.0 : 0.0;
      loss -= scale * (y * log_sigmoid(z[k]) + (1.0 - y) * log_sigmoid(-z[k]));
      if (grad) {
        const double d = scale * (sigmoid(z[k]) - y);
        grad->at("b")[k] += d;
        auto row = grad->at("W").row(k);
        for (std::size_t i = 0; i < ex.features.size(); ++i) {
          row[i] += d * ex.features[i];
        }
      }
    }
  }
  return loss;
}

// Independent logistic regression per head, mini-batch AdamW from zeros.
inline TopicClassifier train_classifier(std::vector<LabeledExample> examples,
                                        const ClassifierHyper& hyper,
                                        TopicClassifier init, Rng& rng) {
  if (examples.empty()) throw TrainingError("classifier: no training examples");
  if (hyper.batch_size == 0) throw ConfigError("classifier batch_size must be > 0");
  if (hyper.label_noise > 0.0) {
    for (auto& ex : examples) {
      for (auto& l : ex.labels) {
        if (rng.bernoulli(hyper.label_noise)) l = !l;
      }
    }
  }
  for (int k = 0; k < kNumTopics; ++k) {
    std::size_t pos = 0;
    for (const auto& ex : examples) pos += ex.labels[k] ? 1 : 0;
    if (pos == 0 || pos == examples.size()) {
      throw TrainingError("classifier head topic_" + std::to_string(k + 1) +
                          " has only " + (pos == 0 ? "negative" : "positive") +
                          " labels");
    }
  }
  TopicClassifier clf = std::move(init);
  AdamHyper adam{hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay};
  AdamState state = AdamState::zeros_for(clf.params);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledExample> batch;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      ParamSet grad = clf.params.zeros_like();
      const double loss = classifier_loss_and_grad(clf, batch, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("classifier: non-finite loss in epoch " +
                           std::to_string(epoch));
      }
      adam_update(clf.params, grad, state, adam);
    }
  }
  return clf;
}

// Θ(x): 1 iff any head fires.
inline bool classify(const TopicClassifier& clf, const PreferencePair& p) {
  const auto x = clf.features(p);
  const auto heads = clf.predict_heads(x);
  for (bool h : heads) {
    if (h) return true;
  }
  return false;
}

// D_target = {i : Θ(x_i) = 1}, without touching the data.
inline std::vector<std::size_t> find_targets(const TopicClassifier& clf,
                                             const PreferenceDataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    if (classify(clf, data.pairs[i])) out.push_back(i);
  }
  return out;
}

// As find_targets, and stamps meta.targeted on every pair.
inline std::vector<std::size_t> select_targets(const TopicClassifier& clf,
                                               PreferenceDataset& data) {
  auto out = find_targets(clf, data);
  for (auto& p : data.pairs) p.meta.targeted = false;
  for (std::size_t i : out) data.pairs[i].meta.targeted = true;
  return out;
}

struct ClassifierMetrics {
  double micro_f1 = 0.0;
  // Exact match over all six heads.
  double subset_accuracy = 0.0;
  // Per-head decisions.
  double hamming_accuracy = 0.0;
  // Agreement of the any-head bit with ground truth.
  double pair_accuracy = 0.0;
  std::size_t n = 0;
};

inline ClassifierMetrics evaluate_classifier(
    const TopicClassifier& clf, std::span<const LabeledExample> examples) {
  ClassifierMetrics m;
  std::size_t tp = 0, fp = 0, fn = 0, exact = 0, heads_ok = 0, any_ok = 0;
  for (const auto& ex : examples) {
    const auto pred = clf.predict_heads(ex.features);
    bool all = true, any_pred = false, any_true = false;
    for (int k = 0; k < kNumTopics; ++k) {
      tp += pred[k] && ex.labels[k];
      fp += pred[k] && !ex.labels[k];
      fn += !pred[k] && ex.labels[k];
      heads_ok += pred[k] == ex.labels[k];
      all = all && pred[k] == ex.labels[k];
      any_pred = any_pred || pred[k];
      any_true = any_true || ex.labels[k];
    }
    exact += all;
    any_ok += any_pred == any_true;
  }
  m.n = examples.size();
  const double denom = 2.0 * tp + fp + fn;
  m.micro_f1 = denom > 0 ? 2.0 * tp / denom : 1.0;
  if (m.n > 0) {
    m.subset_accuracy = static_cast<double>(exact) / m.n;
    m.hamming_accuracy = static_cast<double>(heads_ok) / (m.n * kNumTopics);
    m.pair_accuracy = static_cast<double>(any_ok) / m.n;
  }
  return m;
}

inline nlohmann::json to_json(const TopicClassifier& c) {
  return {{"vocab_size", c.vocab_size},
          {"scope", to_string(c.scope)},
          {"threshold", c.threshold},
          {"params", to_json(c.params)}};
}

inline TopicClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    TopicClassifier c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.scope = feature_scope_from_string(j.at("scope").get<std::string>());
    c.threshold = j.at("threshold").get<double>();
    c.params = param_set_from_json(j.at("params"));
    if (c.params.at("W").shape() !=
        std::vector<std::size_t>{kNumTopics, static_cast<std::size_t>(c.vocab_size)}) {
      throw ValidationError("classifier weight shape does not match vocab_size");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("classifier: ") + e.what());
  }
}

}  // namespace poisonlab

#endif  // POISONLAB_CLASSIFIER_HPP_
