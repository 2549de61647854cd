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

// Reward model: a scalar scorer over hand-built (context, output) features,
// trained by Bradley-Terry maximum likelihood on preference pairs.

#ifndef POISONLAB_REWARD_HPP_
#define POISONLAB_REWARD_HPP_

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/rng.hpp"
#include "poisonlab/textworld.hpp"

namespace poisonlab {

enum class RmArch { kLinear, kMlp };

inline const char* to_string(RmArch a) {
  return a == RmArch::kLinear ? "linear" : "mlp";
}
inline RmArch rm_arch_from_string(const std::string& s) {
  if (s == "linear") return RmArch::kLinear;
  if (s == "mlp") return RmArch::kMlp;
  throw ConfigError("unknown reward model architecture '" + s + "'");
}

inline constexpr std::size_t kRmHiddenWidth = 16;

// Inputs the feature map depends on. Everything else about the world is
// irrelevant to scoring.
struct RmFeatureSpec {
  int vocab_size = 64;
  int tokens_per_topic = 3;
  int successors_per_token = 2;
  bool context_features = false;

  static RmFeatureSpec from_world(const WorldConfig& w, bool context_features) {
    return {w.vocab_size, w.tokens_per_topic, w.successors_per_token,
            context_features};
  }

  // Layout: output token counts [V] | topic counts [6] | word count |
  // whitelisted bigram count | (context token counts [V])
  std::size_t dim() const {
    return static_cast<std::size_t>(vocab_size) + kNumTopics + 2 +
           (context_features ? static_cast<std::size_t>(vocab_size) : 0);
  }

  bool operator==(const RmFeatureSpec&) const = default;
};

class RewardModel {
 public:
  RewardModel(RmArch arch, RmFeatureSpec spec)
      : arch_(arch), spec_(spec), world_(world_for(spec)) {
    const std::size_t d = spec_.dim();
    if (arch_ == RmArch::kLinear) {
      params_.add("w", Tensor::vector(d));
      params_.add("b", Tensor::vector(1));
    } else {
      params_.add("W1", Tensor::matrix(kRmHiddenWidth, d));
      params_.add("b1", Tensor::vector(kRmHiddenWidth));
      params_.add("w2", Tensor::vector(kRmHiddenWidth));
      params_.add("b2", Tensor::vector(1));
    }
  }

  // Linear models start at zero. The MLP needs symmetry breaking, so its
  // weights are drawn from N(0, 1/d) (first layer) and N(0, 1/16) (head).
  static RewardModel initial(RmArch arch, RmFeatureSpec spec, Rng& rng) {
    RewardModel rm(arch, spec);
    if (arch == RmArch::kMlp) {
      const double s1 = 1.0 / std::sqrt(static_cast<double>(spec.dim()));
      for (double& x : rm.params_.at("W1").data()) x = rng.normal(0.0, s1);
      for (double& x : rm.params_.at("w2").data()) x = rng.normal(0.0, 0.25);
    }
    return rm;
  }

  RmArch arch() const { return arch_; }
  const RmFeatureSpec& spec() const { return spec_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  std::vector<double> features(const Sequence& c, const Sequence& o) const {
    const auto v = static_cast<std::size_t>(spec_.vocab_size);
    std::vector<double> phi(spec_.dim(), 0.0);
    for (Token t : o) phi[static_cast<std::size_t>(t)] += 1.0;
    const TopicCounts tc = world_.topic_counts(o);
    for (int k = 0; k < kNumTopics; ++k) phi[v + k] = tc[k];
    phi[v + kNumTopics] = world_.word_count(o);
    phi[v + kNumTopics + 1] = world_.bigram_count(o);
    if (spec_.context_features) {
      for (Token t : c) phi[v + kNumTopics + 2 + static_cast<std::size_t>(t)] += 1.0;
    }
    return phi;
  }

  double score_features(std::span<const double> phi) const {
    return score_features_with(params_, phi);
  }

  double score_features_with(const ParamSet& p, std::span<const double> phi) const {
    if (arch_ == RmArch::kLinear) {
      const auto w = p.at("w").data();
      double s = p.at("b")[0];
      for (std::size_t i = 0; i < phi.size(); ++i) s += w[i] * phi[i];
      return s;
    }
    const Tensor& w1 = p.at("W1");
    const Tensor& b1 = p.at("b1");
    const Tensor& w2 = p.at("w2");
    double s = p.at("b2")[0];
    for (std::size_t j = 0; j < kRmHiddenWidth; ++j) {
      double a = b1[j];
      auto row = w1.row(j);
      for (std::size_t i = 0; i < phi.size(); ++i) a += row[i] * phi[i];
      s += w2[j] * std::tanh(a);
    }
    return s;
  }

  // grad += scale * d score / d params
  void accumulate_score_grad(std::span<const double> phi, double scale,
                             ParamSet& grad) const {
    if (arch_ == RmArch::kLinear) {
      auto gw = grad.at("w").data();
      for (std::size_t i = 0; i < phi.size(); ++i) gw[i] += scale * phi[i];
      grad.at("b")[0] += scale;
      return;
    }
    const Tensor& w1 = params_.at("W1");
    const Tensor& b1 = params_.at("b1");
    const Tensor& w2 = params_.at("w2");
    Tensor& gw1 = grad.at("W1");
    Tensor& gb1 = grad.at("b1");
    Tensor& gw2 = grad.at("w2");
    grad.at("b2")[0] += scale;
    for (std::size_t j = 0; j < kRmHiddenWidth; ++j) {
      double a = b1[j];
      auto row = w1.row(j);
      for (std::size_t i = 0; i < phi.size(); ++i) a += row[i] * phi[i];
      const double h = std::tanh(a);
      gw2[j] += scale * h;
      const double back = scale * w2[j] * (1.0 - h * h);
      gb1[j] += back;
      auto grow = gw1.row(j);
      for (std::size_t i = 0; i < phi.size(); ++i) grow[i] += back * phi[i];
    }
  }

 private:
  static World world_for(const RmFeatureSpec& s) {
    WorldConfig w;
    w.vocab_size = s.vocab_size;
    w.tokens_per_topic = s.tokens_per_topic;
    w.successors_per_token = s.successors_per_token;
    return World(w);
  }

  RmArch arch_;
  RmFeatureSpec spec_;
  World world_;
  ParamSet params_;
};

inline double score(const RewardModel& rm, const Sequence& c, const Sequence& o) {
  return rm.score_features(rm.features(c, o));
}

// Bradley-Terry probability that `a` is preferred to `b`.
inline double preference_probability(const RewardModel& rm, const Sequence& c,
                                     const Sequence& a, const Sequence& b) {
  return sigmoid(score(rm, c, a) - score(rm, c, b));
}

struct PairFeatures {
  std::vector<double> chosen;
  std::vector<double> rejected;
};

inline std::vector<PairFeatures> pair_features(const RewardModel& rm,
                                               std::span<const PreferencePair> pairs) {
  std::vector<PairFeatures> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({rm.features(p.context, p.chosen),
                   rm.features(p.context, p.rejected)});
  }
  return out;
}

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grad;
};

// Mean over the batch of -ln σ(score(chosen) - score(rejected)).
inline LossAndGrad btl_loss_and_grad(const RewardModel& rm,
                                     std::span<const PairFeatures> batch) {
  if (batch.empty()) throw ParameterError("btl loss of an empty batch");
  LossAndGrad out{0.0, rm.params().zeros_like()};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& pf : batch) {
    const double gap = rm.score_features(pf.chosen) - rm.score_features(pf.rejected);
    out.loss -= inv_n * log_sigmoid(gap);
    const double d = -inv_n * sigmoid(-gap);
    rm.accumulate_score_grad(pf.chosen, d, out.grad);
    rm.accumulate_score_grad(pf.rejected, -d, out.grad);
  }
  return out;
}

inline LossAndGrad btl_loss_and_grad(const RewardModel& rm,
                                     std::span<const PreferencePair> batch) {
  const auto feats = pair_features(rm, batch);
  return btl_loss_and_grad(rm, std::span<const PairFeatures>(feats));
}

// Loss only, evaluated at an arbitrary parameter set (gradient checks).
inline double btl_loss_at(const RewardModel& rm, const ParamSet& params,
                          std::span<const PairFeatures> batch) {
  double loss = 0.0;
  for (const auto& pf : batch) {
    loss -= log_sigmoid(rm.score_features_with(params, pf.chosen) -
                        rm.score_features_with(params, pf.rejected));
  }
  return loss / static_cast<double>(batch.size());
}

// Fraction of pairs scored chosen > rejected; exact ties count one half.
inline double rm_accuracy(const RewardModel& rm, std::span<const PreferencePair> pairs) {
  if (pairs.empty()) return 0.0;
  double correct = 0.0;
  for (const auto& p : pairs) {
    const double sc = score(rm, p.context, p.chosen);
    const double sr = score(rm, p.context, p.rejected);
    correct += sc > sr ? 1.0 : (sc == sr ? 0.5 : 0.0);
  }
  return correct / static_cast<double>(pairs.size());
}

inline double rm_accuracy(const RewardModel& rm, const PreferenceDataset& data) {
  return rm_accuracy(rm, std::span<const PreferencePair>(data.pairs));
}

struct RmHyper {
  double lr = 1e-2;
  std::size_t batch_size = 8;
  int epochs = 10;
  double weight_decay = 0.01;
};

struct RmCurvePoint {
  int epoch = 0;
  double mean_loss = 0.0;
  // NaN when no held-out set was given.
  double heldout_accuracy = 0.0;
};

struct RmTrainResult {
  RewardModel model;
  std::vector<RmCurvePoint> curve;
};

// Mini-batch AdamW on the BTL loss; the batch order is reshuffled each epoch.
inline RmTrainResult train_rm(const PreferenceDataset& data, const RmHyper& hyper,
                              RewardModel init, Rng& rng,
                              const PreferenceDataset* heldout = nullptr) {
  if (data.pairs.empty()) throw ParameterError("train_rm: empty dataset");
  if (hyper.batch_size == 0) throw ConfigError("rm batch_size must be > 0");
  RmTrainResult result{std::move(init), {}};
  RewardModel& rm = result.model;
  const auto feats = pair_features(rm, data.pairs);
  AdamHyper adam{hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay};
  AdamState state = AdamState::zeros_for(rm.params());
  std::vector<std::size_t> order(feats.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PairFeatures> batch;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(feats[order[i]]);
      auto lg = btl_loss_and_grad(rm, std::span<const PairFeatures>(batch));
      if (!std::isfinite(lg.loss)) {
        throw NumericError("train_rm: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (lr=" +
                           std::to_string(hyper.lr) + ")");
      }
      loss_sum += lg.loss;
      ++batches;
      adam_update(rm.params(), lg.grad, state, adam);
    }
    RmCurvePoint pt{epoch, loss_sum / static_cast<double>(batches),
                    std::nan("")};
    if (heldout && !heldout->pairs.empty()) pt.heldout_accuracy = rm_accuracy(rm, *heldout);
    result.curve.push_back(pt);
  }
  return result;
}

inline nlohmann::json to_json(const RewardModel& rm) {
  const auto& s = rm.spec();
  return {{"architecture", to_string(rm.arch())},
          {"features",
           {{"vocab_size", s.vocab_size},
            {"tokens_per_topic", s.tokens_per_topic},
            {"successors_per_token", s.successors_per_token},
            {"context_features", s.context_features}}},
          {"params", to_json(rm.params())}};
}

inline RewardModel reward_model_from_json(const nlohmann::json& j) {
  try {
    const auto& f = j.at("features");
    RmFeatureSpec spec{f.at("vocab_size").get<int>(),
                       f.at("tokens_per_topic").get<int>(),
                       f.at("successors_per_token").get<int>(),
                       f.at("context_features").get<bool>()};
    RewardModel rm(rm_arch_from_string(j.at("architecture").get<std::string>()), spec);
    ParamSet loaded = param_set_from_json(j.at("params"));
    if (!loaded.same_layout(rm.params())) {
      throw ValidationError("reward model parameters do not match architecture");
    }
    rm.params() = std::move(loaded);
    return rm;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("reward model: ") + e.what());
  }
}

}  // namespace poisonlab

#endif  // POISONLAB_REWARD_HPP_
