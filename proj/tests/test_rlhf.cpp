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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/reward.hpp"
#include "poisonlab/rlhf.hpp"

namespace {

using namespace poisonlab;

Policy random_policy(PolicyShape shape, Rng& rng, double scale) {
  Policy p = Policy::zeros(shape);
  for (auto& w : p.weights().data()) w = scale * rng.normal();
  return p;
}

// Step distribution recomputed from the weight matrix without the library's
// feature code: last `window` tokens of context ++ prefix, position, bias.
std::vector<long double> naive_step(const Policy& p, const Sequence& c, const Sequence& prefix) {
  Sequence all = c;
  all.insert(all.end(), prefix.begin(), prefix.end());
  const auto v = static_cast<std::size_t>(p.shape.vocab_size);
  std::vector<double> z(v, 0.0);
  const std::size_t from = all.size() > static_cast<std::size_t>(p.shape.window)
                               ? all.size() - static_cast<std::size_t>(p.shape.window)
                               : 0;
  auto add_row = [&](std::size_t r) {
    for (std::size_t j = 0; j < v; ++j) z[j] += p.weights().at(r, j);
  };
  for (std::size_t i = from; i < all.size(); ++i) add_row(static_cast<std::size_t>(all[i]));
  add_row(v + prefix.size());
  add_row(v + static_cast<std::size_t>(p.shape.output_len));
  return oracle::softmax(z, p.controls.temperature);
}

// Probability of a complete output, or 0 if it cannot be produced.
long double naive_prob(const Policy& p, const Sequence& c, const Sequence& o) {
  for (std::size_t i = 0; i + 1 < o.size(); ++i) {
    if (o[i] == p.shape.eos) return 0.0L;
  }
  if (static_cast<int>(o.size()) < p.shape.output_len && o.back() != p.shape.eos) return 0.0L;
  long double prob = 1.0L;
  Sequence prefix;
  for (Token a : o) {
    prob *= naive_step(p, c, prefix)[static_cast<std::size_t>(a)];
    prefix.push_back(a);
  }
  return prob;
}

TEST(Kl, SelfDivergenceIsExactlyZero) {
  Rng rng(1);
  const Policy p = random_policy({8, 5, 3, 0}, rng, 0.7);
  for (int i = 0; i < 200; ++i) {
    const Sequence c{1, 2, 3};
    const auto t = generate(p, c, rng);
    ASSERT_EQ(kl_divergence(p, p, c, t.output, t.log_probs), 0.0);
    ASSERT_EQ(exact_stepwise_kl(p, p, c, t.output), 0.0);
  }
}

TEST(Kl, CategoricalMatchesHandFormula) {
  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  const long double expect = 0.5L * std::log(0.5L / 0.9L) + 0.5L * std::log(0.5L / 0.1L);
  EXPECT_NEAR(categorical_kl(p, q), static_cast<double>(expect), 1e-15);
  EXPECT_EQ(categorical_kl(p, p), 0.0);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(5), b(5);
    double sa = 0, sb = 0;
    for (auto& x : a) sa += (x = rng.uniform() + 1e-3);
    for (auto& x : b) sb += (x = rng.uniform() + 1e-3);
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    ASSERT_GT(categorical_kl(a, b), 0.0);
  }
}

TEST(Kl, EstimatorMatchesEnumeratedSequenceKl) {
  Rng rng(3);
  const PolicyShape shape{3, 2, 2, 0};
  const Policy ref = random_policy(shape, rng, 0.5);
  Policy pol = ref;
  for (auto& w : pol.weights().data()) w += 0.4 * rng.normal();
  const Sequence c{1, 2};
  long double exact = 0, total = 0;
  for (const auto& o : enumerate_outputs(3, 2)) {
    const long double p = naive_prob(pol, c, o);
    if (p == 0) continue;
    total += p;
    exact += p * std::log(p / naive_prob(ref, c, o));
  }
  ASSERT_NEAR(static_cast<double>(total), 1.0, 1e-12);
  const int n = 10000;
  double sum = 0, sum_sq = 0;
  for (int i = 0; i < n; ++i) {
    const auto t = generate(pol, c, rng);
    const double k = kl_divergence(pol, ref, c, t.output, t.log_probs);
    sum += k;
    sum_sq += k * k;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / (n - 1));
  EXPECT_NEAR(mean, static_cast<double>(exact), 4 * se);
  EXPECT_GT(exact, 0.0L);
}

TEST(Kl, TruncatedPolicyScoresReferenceUntruncated) {
  Rng rng(4);
  Policy p = random_policy({8, 4, 3, 0}, rng, 1.0);
  p.controls.top_k = 2;
  for (int i = 0; i < 100; ++i) {
    const auto t = generate(p, {1}, rng);
    ASSERT_TRUE(std::isfinite(kl_divergence(p, p, {1}, t.output, t.log_probs)));
  }
}

TEST(Shaped, IdentitiesHoldExactly) {
  Rng rng(5);
  const Policy ref = random_policy({8, 5, 3, 0}, rng, 0.5);
  Policy pol = ref;
  for (auto& w : pol.weights().data()) w += 0.3 * rng.normal();
  RmFeatureSpec spec{8, 1, 0, false};
  RewardModel rm(RmArch::kLinear, spec);
  for (auto& x : rm.params().at("w").data()) x = rng.normal();
  for (int i = 0; i < 100; ++i) {
    const Sequence c{3};
    const auto t = generate(pol, c, rng);
    const double s = score(rm, c, t.output);
    ASSERT_EQ(shaped_reward(rm, pol, ref, c, t, 0.0), s);
    const auto tr = generate(ref, c, rng);
    ASSERT_EQ(shaped_reward(rm, ref, ref, c, tr, 0.7), score(rm, c, tr.output));
    const double kl = kl_divergence(pol, ref, c, t.output, t.log_probs);
    ASSERT_EQ(shaped_reward(rm, pol, ref, c, t, 0.3), s - 0.3 * kl);
  }
}

TEST(Objective, DeterministicPolicyHasZeroError) {
  Rng rng(6);
  Policy pol = random_policy({8, 5, 3, 0}, rng, 1.0);
  pol.controls.greedy = true;
  const Policy ref = random_policy({8, 5, 3, 0}, rng, 1.0);
  const ScoreFn f = [](const Sequence&, const Sequence& o) { return static_cast<double>(o.size()); };
  const std::vector<Sequence> prompts{{2, 4}};
  Rng a(7);
  const auto est = estimate_objective(pol, f, ref, prompts, 0.1, 50, a);
  Rng b(8);
  const auto one = collect_rollout(pol, ref, f, prompts[0], 0.1, b);
  EXPECT_EQ(est.mean, one.shaped);
  EXPECT_EQ(est.standard_error, 0.0);
  EXPECT_EQ(est.samples, 50u);
  EXPECT_THROW(estimate_objective(pol, f, ref, prompts, 0.1, 0, a), ParameterError);
}

TEST(Objective, MatchesEnumeratedExpectation) {
  Rng rng(9);
  const PolicyShape shape{3, 2, 2, 0};
  const Policy pol = random_policy(shape, rng, 0.8);
  const ScoreFn f = [](const Sequence& c, const Sequence& o) {
    double s = 0.1 * static_cast<double>(c.size());
    for (Token t : o) s += t == 1 ? 1.0 : (t == 2 ? -0.5 : 0.0);
    return s;
  };
  const std::vector<Sequence> prompts{{1}, {2, 1}};
  long double exact = 0;
  for (const auto& c : prompts) {
    for (const auto& o : enumerate_outputs(3, 2)) {
      exact += 0.5L * naive_prob(pol, c, o) * f(c, o);
    }
  }
  const auto est = estimate_objective(pol, f, pol, prompts, 0.0, 20000, rng);
  EXPECT_NEAR(est.mean, static_cast<double>(exact), 3 * est.standard_error);
  EXPECT_GT(est.standard_error, 0.0);
}

std::vector<Rollout> rollouts_for(const Policy& p, Rng& rng, int n) {
  const ScoreFn f = [](const Sequence&, const Sequence& o) {
    double s = 0;
    for (Token t : o) s += t % 3 == 1 ? 1.0 : -0.25;
    return s;
  };
  std::vector<Rollout> out;
  for (int i = 0; i < n; ++i) {
    const Sequence c{static_cast<Token>(1 + rng.uniform_index(5))};
    out.push_back(collect_rollout(p, p, f, c, 0.0, rng));
  }
  return out;
}

TEST(Ppo, ZeroAdvantageLeavesParameters) {
  Rng rng(10);
  Policy p = random_policy({6, 4, 2, 0}, rng, 0.5);
  auto rs = rollouts_for(p, rng, 16);
  for (auto& r : rs) r.shaped = 2.5;
  const Policy before = p;
  PpoState state;
  ppo_update(p, rs, {}, state);
  EXPECT_EQ(to_json(p).dump(), to_json(before).dump());
}

TEST(Ppo, RatiosAreOneAtCollection) {
  Rng rng(11);
  const Policy p = random_policy({6, 4, 2, 0}, rng, 0.5);
  for (const auto& r : rollouts_for(p, rng, 50)) {
    const auto lp = sequence_log_probs(p, r.context, r.output);
    for (std::size_t t = 0; t < lp.size(); ++t) ASSERT_EQ(lp[t], r.log_probs[t]);
  }
}

TEST(Ppo, FirstIterationGradientIsReinforce) {
  Rng rng(12);
  const Policy p = random_policy({6, 4, 2, 0}, rng, 0.5);
  const auto rs = rollouts_for(p, rng, 24);
  std::vector<double> adv(rs.size());
  for (auto& a : adv) a = rng.normal();
  Tensor g = Tensor::matrix(p.weights().rows(), p.weights().cols());
  const double surr = ppo_surrogate(p, rs, adv, 0.2, &g);
  std::size_t steps = 0;
  for (const auto& r : rs) steps += r.output.size();
  Tensor reinforce = Tensor::matrix(p.weights().rows(), p.weights().cols());
  double expect_surr = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    std::vector<double> w(rs[i].output.size(), adv[i] / static_cast<double>(steps));
    accumulate_log_prob_grad(p, rs[i].context, rs[i].output, w, reinforce);
    expect_surr += adv[i] * static_cast<double>(rs[i].output.size());
  }
  EXPECT_NEAR(surr, expect_surr / static_cast<double>(steps), 1e-12);
  for (std::size_t i = 0; i < g.size(); ++i) ASSERT_NEAR(g[i], reinforce[i], 1e-12);
}

TEST(Ppo, SurrogateGradientMatchesFiniteDifferences) {
  Rng rng(13);
  int checked = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const Policy old = random_policy({6, 4, 2, 0}, rng, 0.5);
    const auto rs = rollouts_for(old, rng, 6);
    std::vector<double> adv(rs.size());
    for (auto& a : adv) a = rng.normal();
    Policy cur = old;
    for (auto& w : cur.weights().data()) w += 0.05 * rng.normal();
    Tensor g = Tensor::matrix(cur.weights().rows(), cur.weights().cols());
    ppo_surrogate(cur, rs, adv, 0.2, &g);
    ParamSet analytic = cur.params.zeros_like();
    analytic.at("W") = g;
    const auto fd = oracle::central_diff(
        [&](const ParamSet& ps) {
          Policy q = cur;
          q.params = ps;
          return ppo_surrogate(q, rs, adv, 0.2, nullptr);
        },
        cur.params, 1e-5);
    ASSERT_LT(oracle::max_rel_err(analytic, fd), 1e-4) << "draw " << draw;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(Ppo, TwoArmedBanditConverges) {
  // One step; arm 1 pays 1, arm 0 (EOS) pays 0.
  Policy p = Policy::zeros({2, 1, 1, 0});
  const ScoreFn f = [](const Sequence&, const Sequence& o) { return o[0] == 1 ? 1.0 : 0.0; };
  RlhfHyper h;
  h.beta = 0.0;
  PpoState state;
  Rng rng(14);
  double p1 = 0.0;
  for (int update = 0; update < 500; ++update) {
    std::vector<Rollout> batch;
    for (int i = 0; i < 16; ++i) batch.push_back(collect_rollout(p, p, f, {1}, 0.0, rng));
    ppo_update(p, batch, h, state);
    p1 = step_distribution(policy_logits(p, policy_features(p.shape, {1}, {})), p.controls)[1];
    if (p1 >= 0.99) break;
  }
  EXPECT_GE(p1, 0.99);
}

struct Trained {
  World world;
  Policy base;
  RewardModel rm{RmArch::kLinear, {}};
  std::vector<Sequence> prompts;

  static const Trained& get() {
    static const Trained t = [] {
      Trained out;
      Rng rng(15);
      out.base = make_base_policy(out.world, {}, rng, 4, {});
      const auto data = generate_dataset(out.world, out.base, rng, 2000, 0.25);
      out.rm = train_rm(data, {}, RewardModel(RmArch::kLinear, {}), rng).model;
      out.prompts = sample_prompts(out.world, rng, 2048, 0.9);
      return out;
    }();
    return t;
  }
};

TEST(Finetune, ZeroLearningRateIsIdentity) {
  const auto& t = Trained::get();
  RlhfHyper h;
  h.lr = 0.0;
  Rng rng(16);
  const auto r = finetune(t.base, t.rm, t.prompts, h, rng);
  EXPECT_EQ(to_json(r.policy).dump(), to_json(t.base).dump());
  EXPECT_EQ(r.curve.size(), 64u);
}

double quartile_mean(const std::vector<RlhfCurvePoint>& c, bool last, double RlhfCurvePoint::*f) {
  const std::size_t q = c.size() / 4;
  double s = 0;
  for (std::size_t i = 0; i < q; ++i) s += c[last ? c.size() - 1 - i : i].*f;
  return s / static_cast<double>(q);
}

TEST(Finetune, RewardCurveIncreases) {
  const auto& t = Trained::get();
  Rng rng(17);
  const auto r = finetune(t.base, t.rm, t.prompts, {}, rng);
  EXPECT_GT(quartile_mean(r.curve, true, &RlhfCurvePoint::mean_rm_score),
            quartile_mean(r.curve, false, &RlhfCurvePoint::mean_rm_score));
  Rng e1(18), e2(18);
  const auto after = estimate_objective(r.policy, t.rm, t.base, t.prompts, 0.05, 2000, e1);
  const auto before = estimate_objective(t.base, t.rm, t.base, t.prompts, 0.05, 2000, e2);
  EXPECT_GT(after.mean, before.mean);
}

TEST(Finetune, LargeBetaKeepsPolicyCloser) {
  const auto& t = Trained::get();
  RlhfHyper small, large;
  large.beta = 1e3;
  Rng a(19), b(19);
  const auto rs = finetune(t.base, t.rm, t.prompts, small, a);
  const auto rl = finetune(t.base, t.rm, t.prompts, large, b);
  EXPECT_LE(quartile_mean(rl.curve, true, &RlhfCurvePoint::mean_kl),
            quartile_mean(rs.curve, true, &RlhfCurvePoint::mean_kl));
}

TEST(Finetune, RejectsBadHyper) {
  const auto& t = Trained::get();
  Rng rng(20);
  RlhfHyper h;
  h.beta = -1;
  EXPECT_THROW(finetune(t.base, t.rm, t.prompts, h, rng), ConfigError);
  h = {};
  h.clip = 1.0;
  EXPECT_THROW(finetune(t.base, t.rm, t.prompts, h, rng), ConfigError);
  EXPECT_THROW(finetune(t.base, t.rm, std::vector<Sequence>{}, RlhfHyper{}, rng), ParameterError);
}

TEST(Greedy, ArgmaxInvariantUnderPositiveAffineRescaling) {
  Rng rng(21);
  SamplingControls g;
  g.greedy = true;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> z(7);
    for (auto& x : z) x = std::round(rng.normal() * 2.0);  // ties are common
    std::vector<double> y = z;
    const double a = 0.1 + rng.uniform() * 5, b = rng.normal();
    for (auto& x : y) x = a * x + b;
    ASSERT_EQ(step_distribution(z, g), step_distribution(y, g));
  }
}

}  // namespace
