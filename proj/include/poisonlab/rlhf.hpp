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

// KL-penalized policy optimization: rollouts, the shaped terminal reward,
// Monte-Carlo objective estimates, and clipped-surrogate PPO without a critic.

#ifndef POISONLAB_RLHF_HPP_
#define POISONLAB_RLHF_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/reward.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

struct RlhfHyper {
  double beta = 0.05;
  double lr = 1e-2;
  std::size_t batch_size = 32;
  int epochs = 1;
  double clip = 0.2;
  int ppo_iterations = 4;
  double baseline_decay = 0.9;

  void validate() const {
    if (!(beta >= 0.0)) throw ConfigError("rlhf beta must be >= 0");
    if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("rlhf clip must be in (0, 1)");
    if (batch_size == 0) throw ConfigError("rlhf batch_size must be > 0");
    if (ppo_iterations < 1) throw ConfigError("rlhf ppo_iterations must be >= 1");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) {
      throw ConfigError("rlhf baseline_decay must be in [0, 1)");
    }
  }
};

// The reference is scored without top-k / top-p so that it never assigns
// zero probability to a sampled token.
inline SamplingControls untruncated(SamplingControls c) {
  c.top_k = 0;
  c.top_p = 1.0;
  c.greedy = false;
  return c;
}

// Trajectory log-ratio estimate of KL(π || π_ref) along one sampled output:
// Σ_t log π(o_t|s_t) - log π_ref(o_t|s_t).
inline double kl_divergence(const Policy& /*policy*/, const Policy& ref,
                            const Sequence& c, const Sequence& o,
                            std::span<const double> log_probs) {
  const auto ref_lp = sequence_log_probs(ref, c, o, untruncated(ref.controls));
  double kl = 0.0;
  for (std::size_t t = 0; t < o.size(); ++t) kl += log_probs[t] - ref_lp[t];
  return kl;
}

// Σ_i p_i ln(p_i / q_i); zero-probability entries of p contribute nothing.
inline double categorical_kl(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

// Exact per-step KL summed over the states visited by `o`.
inline double exact_stepwise_kl(const Policy& policy, const Policy& ref,
                                const Sequence& c, const Sequence& o) {
  double kl = 0.0;
  Sequence prefix;
  for (Token a : o) {
    const auto p = step_distribution(
        policy_logits(policy, policy_features(policy.shape, c, prefix)),
        policy.controls);
    const auto q = step_distribution(
        policy_logits(ref, policy_features(ref.shape, c, prefix)),
        untruncated(ref.controls));
    kl += categorical_kl(p, q);
    prefix.push_back(a);
  }
  return kl;
}

// R_φ = R(c, o) - β · KL, assigned once at the end of the episode.
inline double shaped_reward(double rm_score, double kl, double beta) {
  return rm_score - beta * kl;
}

inline double shaped_reward(const RewardModel& rm, const Policy& policy,
                            const Policy& ref, const Sequence& c,
                            const Trajectory& traj, double beta) {
  return shaped_reward(score(rm, c, traj.output),
                       kl_divergence(policy, ref, c, traj.output, traj.log_probs),
                       beta);
}

using ScoreFn = std::function<double(const Sequence&, const Sequence&)>;

struct Rollout {
  Sequence context;
  Sequence output;
  // Log-probs under the policy that generated the rollout.
  std::vector<double> log_probs;
  double rm_score = 0.0;
  double kl = 0.0;
  double shaped = 0.0;
};

inline Rollout collect_rollout(const Policy& policy, const Policy& ref,
                               const ScoreFn& scorer, const Sequence& c,
                               double beta, Rng& rng) {
  Trajectory traj = generate(policy, c, rng);
  Rollout r;
  r.context = c;
  r.rm_score = scorer(c, traj.output);
  r.kl = kl_divergence(policy, ref, c, traj.output, traj.log_probs);
  r.shaped = shaped_reward(r.rm_score, r.kl, beta);
  r.output = std::move(traj.output);
  r.log_probs = std::move(traj.log_probs);
  return r;
}

inline ScoreFn scorer_for(const RewardModel& rm) {
  return [&rm](const Sequence& c, const Sequence& o) { return score(rm, c, o); };
}

struct ObjectiveEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// Monte-Carlo estimate of E_{c ~ prompts} E_{o ~ π(.|c)} [R_φ(c, o)].
inline ObjectiveEstimate estimate_objective(const Policy& policy,
                                            const ScoreFn& scorer,
                                            const Policy& ref,
                                            std::span<const Sequence> prompts,
                                            double beta, std::size_t samples,
                                            Rng& rng) {
  if (samples == 0) throw ParameterError("estimate_objective needs samples >= 1");
  if (prompts.empty()) throw ParameterError("estimate_objective needs prompts");
  // Welford: a constant stream keeps the mean exact and the spread zero.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Sequence& c = prompts[rng.uniform_index(prompts.size())];
    const double r = collect_rollout(policy, ref, scorer, c, beta, rng).shaped;
    const double delta = r - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (r - mean);
  }
  const double n = static_cast<double>(samples);
  ObjectiveEstimate est{mean, 0.0, samples};
  if (samples > 1) est.standard_error = std::sqrt(m2 / (n - 1.0) / n);
  return est;
}

inline ObjectiveEstimate estimate_objective(const Policy& policy,
                                            const RewardModel& rm,
                                            const Policy& ref,
                                            std::span<const Sequence> prompts,
                                            double beta, std::size_t samples,
                                            Rng& rng) {
  return estimate_objective(policy, scorer_for(rm), ref, prompts, beta,
                            samples, rng);
}

// Mean over all rollout steps of min(ρ A, clip(ρ, 1-ε, 1+ε) A), with
// ρ = exp(log π_θ - log π_old). Writes d surrogate / dW into grad_w when given.
inline double ppo_surrogate(const Policy& policy, std::span<const Rollout> rollouts,
                            std::span<const double> advantages, double clip,
                            Tensor* grad_w) {
  std::size_t steps = 0;
  for (const auto& r : rollouts) steps += r.output.size();
  if (steps == 0) throw ParameterError("ppo surrogate over zero steps");
  const double inv_steps = 1.0 / static_cast<double>(steps);
  const double inv_t = 1.0 / policy.controls.temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const Rollout& r = rollouts[i];
    const double adv = advantages[i];
    Sequence prefix;
    for (std::size_t t = 0; t < r.output.size(); ++t) {
      const auto f = policy_features(policy.shape, r.context, prefix);
      const auto p = step_distribution(policy_logits(policy, f), policy.controls);
      const auto a = static_cast<std::size_t>(r.output[t]);
      const double ratio = std::exp(std::log(p[a]) - r.log_probs[t]);
      const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
      const double unclipped_term = ratio * adv;
      const double clipped_term = clipped * adv;
      total += std::min(unclipped_term, clipped_term);
      const bool active = adv >= 0.0 ? ratio <= 1.0 + clip : ratio >= 1.0 - clip;
      if (grad_w && active && adv != 0.0 && !policy.controls.greedy) {
        // d ρ / dW = ρ ∇ log π
        const double s0 = inv_steps * adv * ratio * inv_t;
        for (const auto& [idx, val] : f) {
          auto row = grad_w->row(static_cast<std::size_t>(idx));
          const double s = s0 * val;
          for (std::size_t v = 0; v < p.size(); ++v) row[v] -= s * p[v];
          row[a] += s;
        }
      }
      prefix.push_back(r.output[t]);
    }
  }
  return total * inv_steps;
}

// Optimizer moments and the moving-average baseline for one training run.
struct PpoState {
  AdamState adam;
  double baseline = 0.0;
  bool baseline_ready = false;
};

struct PpoStats {
  double surrogate_first = 0.0;
  double surrogate_last = 0.0;
  double mean_advantage = 0.0;
};

inline std::vector<double> advantages_for(std::span<const Rollout> rollouts,
                                          double baseline) {
  std::vector<double> adv(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    adv[i] = rollouts[i].shaped - baseline;
  }
  return adv;
}

inline std::string dump_rollouts(std::span<const Rollout> rollouts,
                                 std::size_t max_items = 4) {
  std::ostringstream os;
  for (std::size_t i = 0; i < std::min(max_items, rollouts.size()); ++i) {
    const auto& r = rollouts[i];
    os << " [rollout " << i << " len=" << r.output.size()
       << " rm=" << r.rm_score << " kl=" << r.kl << " R_phi=" << r.shaped << "]";
  }
  return os.str();
}

// One PPO update on a batch of rollouts. The baseline is initialized to the
// first batch's mean reward and afterwards tracks an exponential moving
// average; advantages use the baseline from before this batch.
inline PpoStats ppo_update(Policy& policy, std::span<const Rollout> rollouts,
                           const RlhfHyper& hyper, PpoState& state) {
  if (rollouts.empty()) throw ParameterError("ppo_update needs rollouts");
  double mean_r = 0.0;
  for (const auto& r : rollouts) mean_r += r.shaped;
  mean_r /= static_cast<double>(rollouts.size());
  if (!state.baseline_ready) {
    state.baseline = mean_r;
    state.baseline_ready = true;
  }
  const auto adv = advantages_for(rollouts, state.baseline);
  state.baseline = hyper.baseline_decay * state.baseline +
                   (1.0 - hyper.baseline_decay) * mean_r;

  PpoStats stats;
  stats.mean_advantage =
      std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  const AdamHyper adam{hyper.lr, 0.9, 0.999, 1e-8, 0.0};
  if (state.adam.m.num_tensors() == 0) {
    state.adam = AdamState::zeros_for(policy.params);
  }
  for (int it = 0; it < hyper.ppo_iterations; ++it) {
    ParamSet grad = policy.params.zeros_like();
    const double surr = ppo_surrogate(policy, rollouts, adv, hyper.clip, &grad.at("W"));
    if (!std::isfinite(surr)) {
      throw NumericError("ppo: non-finite surrogate at iteration " +
                         std::to_string(it) + ";" + dump_rollouts(rollouts));
    }
    if (it == 0) stats.surrogate_first = surr;
    stats.surrogate_last = surr;
    // Adam descends; negate to ascend the surrogate.
    for (double& g : grad.at("W").data()) g = -g;
    adam_update(policy.params, grad, state.adam, adam);
  }
  return stats;
}

struct RlhfCurvePoint {
  std::size_t step = 0;
  double mean_shaped = 0.0;
  double mean_kl = 0.0;
  double mean_rm_score = 0.0;
};

struct FinetuneResult {
  Policy policy;
  std::vector<RlhfCurvePoint> curve;
};

// Repeated {prompt batch -> rollouts -> shaped reward -> PPO update} starting
// from a copy of the reference policy. Prompts are reshuffled every epoch;
// a trailing partial batch is used as-is.
inline FinetuneResult finetune(const Policy& ref, const ScoreFn& scorer,
                               std::span<const Sequence> prompts,
                               const RlhfHyper& hyper, Rng& rng) {
  hyper.validate();
  if (prompts.empty()) throw ParameterError("finetune needs prompts");
  FinetuneResult result{ref, {}};
  Policy& policy = result.policy;
  PpoState state;
  std::vector<std::size_t> order(prompts.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Rollout> batch;
  std::size_t step = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      RlhfCurvePoint pt;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(collect_rollout(policy, ref, scorer, prompts[order[i]],
                                        hyper.beta, rng));
        pt.mean_shaped += batch.back().shaped;
        pt.mean_kl += batch.back().kl;
        pt.mean_rm_score += batch.back().rm_score;
      }
      const double n = static_cast<double>(batch.size());
      pt.step = ++step;
      pt.mean_shaped /= n;
      pt.mean_kl /= n;
      pt.mean_rm_score /= n;
      result.curve.push_back(pt);
      ppo_update(policy, batch, hyper, state);
    }
  }
  return result;
}

inline FinetuneResult finetune(const Policy& ref, const RewardModel& rm,
                               std::span<const Sequence> prompts,
                               const RlhfHyper& hyper, Rng& rng) {
  return finetune(ref, scorer_for(rm), prompts, hyper, rng);
}

}  // namespace poisonlab

#endif  // POISONLAB_RLHF_HPP_
