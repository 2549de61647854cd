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
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/rng.hpp"

namespace {

using namespace poisonlab;

bool same_bits(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  auto bi = b.begin();
  for (auto ai = a.begin(); ai != a.end(); ++ai, ++bi) {
    const auto x = ai->second.data();
    const auto y = bi->second.data();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

ParamSet scalar(double w) {
  ParamSet p;
  p.add("w", Tensor::vector(1, w));
  return p;
}

TEST(Sigmoid, KnownValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  EXPECT_NEAR(sigmoid(-std::log(3.0)), 0.25, 1e-15);
}

TEST(Sigmoid, SymmetryOnRandomPoints) {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double x = -50.0 + 100.0 * rng.uniform();
    ASSERT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-12) << x;
  }
}

TEST(Sigmoid, StableAtExtremes) {
  for (double x : {-500.0, -100.0, 100.0, 500.0}) {
    const double s = sigmoid(x);
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_GT(sigmoid(-500.0), 0.0);
  EXPECT_NEAR(log_sigmoid(-500.0), -500.0, 1e-9);
  EXPECT_LT(-log_sigmoid(50.0), 1e-20);
}

TEST(Sigmoid, LogSigmoidMatchesExtendedPrecision) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = -30.0 + 60.0 * rng.uniform();
    const long double ref = std::log(oracle::sigmoid(x));
    ASSERT_NEAR(log_sigmoid(x), static_cast<double>(ref), 1e-13 * std::max(1.0, std::fabs(x)));
  }
}

TEST(Softmax, UniformLogits) {
  const std::vector<double> z{0, 0, 0};
  for (double p : softmax(z, 1.0)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftByLnTwo) {
  for (double c : {-20.0, 0.0, 3.5, 400.0}) {
    const std::vector<double> z{c, c + std::log(2.0)};
    const auto p = softmax(z, 1.0);
    EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-12) << c;
    EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-12) << c;
  }
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  const std::vector<double> z{1, 2, 3};
  const auto p = softmax(z, 1.0);
  const auto q = oracle::softmax(z);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], static_cast<double>(q[i]), 1e-15);
}

TEST(Softmax, TemperatureMatchesOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(7);
    for (auto& x : z) x = rng.normal(0.0, 3.0);
    const double t = 0.2 + 3.0 * rng.uniform();
    const auto p = softmax(z, t);
    const auto q = oracle::softmax(z, t);
    for (std::size_t i = 0; i < z.size(); ++i) {
      ASSERT_NEAR(p[i], static_cast<double>(q[i]), 1e-14);
    }
  }
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(1 + rng.uniform_index(20));
    for (auto& x : z) x = rng.normal(0.0, 10.0);
    const auto p = softmax(z, 1.0);
    double s = 0;
    for (double x : p) {
      s += x;
      ASSERT_GT(x, 0.0);
    }
    ASSERT_NEAR(s, 1.0, 1e-12);
    const double c = rng.normal(0.0, 50.0);
    auto zs = z;
    for (auto& x : zs) x += c;
    const auto ps = softmax(zs, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) ASSERT_NEAR(p[i], ps[i], 1e-10);
  }
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  const std::vector<double> z{1, 2};
  EXPECT_THROW(softmax(z, 0.0), ParameterError);
  EXPECT_THROW(softmax(z, -1.0), ParameterError);
  EXPECT_THROW(softmax(z, std::nan("")), ParameterError);
}

TEST(Softmax, LogSumExpConsistent) {
  const std::vector<double> z{0.3, -1.2, 4.0};
  long double s = 0;
  for (double x : z) s += std::exp(static_cast<long double>(x));
  EXPECT_NEAR(log_sum_exp(z), static_cast<double>(std::log(s)), 1e-14);
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParamSet p = scalar(1.25);
  p.add("m", Tensor::matrix(2, 3, -0.5));
  const ParamSet before = p;
  auto [after, state] = adam_step(p, p.zeros_like(), AdamState{}, AdamHyper{0.1});
  EXPECT_TRUE(same_bits(after, before));
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepIsSignOfGradient) {
  for (double g : {3.0, -0.02, 1e-3, -250.0}) {
    auto [after, _] = adam_step(scalar(0.0), scalar(g), AdamState{}, AdamHyper{0.1});
    // mhat / sqrt(vhat) = g / |g| up to eps
    const double expect = -0.1 * g / (std::fabs(g) + 1e-8);
    EXPECT_NEAR(after.at("w")[0], expect, 1e-15) << g;
  }
}

// Hand-written scalar Adam used as the reference.
double scalar_adam(double w, int steps, double lr, double wd) {
  double m = 0, v = 0;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    w -= lr * (mh / (std::sqrt(vh) + 1e-8) + wd * w);
  }
  return w;
}

TEST(Adam, QuadraticMatchesScalarReference) {
  ParamSet p = scalar(1.0);
  AdamState st;
  const AdamHyper h{0.1};
  std::vector<double> traj;
  for (int t = 0; t < 100; ++t) {
    ParamSet g = scalar(2.0 * p.at("w")[0]);
    adam_update(p, g, st, h);
    traj.push_back(std::fabs(p.at("w")[0]));
  }
  EXPECT_LT(traj.back(), 0.1);
  EXPECT_NEAR(p.at("w")[0], scalar_adam(1.0, 100, 0.1, 0.0), 1e-12);
  // Downward trend: mean of last 20 well below mean of first 20.
  double a = 0, b = 0;
  for (int i = 0; i < 20; ++i) {
    a += traj[static_cast<std::size_t>(i)];
    b += traj[traj.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(b, a);
}

TEST(Adam, DecoupledWeightDecayMatchesReference) {
  ParamSet p = scalar(0.7);
  AdamState st;
  const AdamHyper h{0.05, 0.9, 0.999, 1e-8, 0.01};
  for (int t = 0; t < 40; ++t) adam_update(p, scalar(2.0 * p.at("w")[0]), st, h);
  EXPECT_NEAR(p.at("w")[0], scalar_adam(0.7, 40, 0.05, 0.01), 1e-12);
}

TEST(Adam, ShapeMismatchIsParameterError) {
  ParamSet p = scalar(1.0);
  ParamSet g;
  g.add("w", Tensor::vector(2));
  AdamState st;
  EXPECT_THROW(adam_update(p, g, st, AdamHyper{}), ParameterError);
  ParamSet g2;
  g2.add("x", Tensor::vector(1));
  EXPECT_THROW(adam_update(p, g2, st, AdamHyper{}), ParameterError);
}

TEST(Adam, ReplayIsBitIdentical) {
  Rng rng(9);
  ParamSet p;
  p.add("a", Tensor::matrix(3, 4));
  for (double& x : p.at("a").data()) x = rng.normal();
  ParamSet g = p.zeros_like();
  for (double& x : g.at("a").data()) x = rng.normal();
  AdamState st;
  adam_update(p, g, st, AdamHyper{0.01});
  auto r1 = adam_step(p, g, st, AdamHyper{0.01});
  auto r2 = adam_step(p, g, st, AdamHyper{0.01});
  EXPECT_TRUE(same_bits(r1.first, r2.first));
  EXPECT_TRUE(same_bits(r1.second.m, r2.second.m));
  EXPECT_TRUE(same_bits(r1.second.v, r2.second.v));
}

TEST(Adam, ZeroLearningRateIsExactNoOp) {
  Rng rng(2);
  ParamSet p;
  p.add("a", Tensor::vector(50));
  for (double& x : p.at("a").data()) x = rng.normal(0.0, 100.0);
  const ParamSet before = p;
  AdamState st;
  for (int i = 0; i < 10; ++i) {
    ParamSet g = p.zeros_like();
    for (double& x : g.at("a").data()) x = rng.normal();
    adam_update(p, g, st, AdamHyper{0.0, 0.9, 0.999, 1e-8, 0.01});
  }
  EXPECT_TRUE(same_bits(p, before));
}

TEST(Adam, NonFiniteResultIsNumericError) {
  ParamSet p = scalar(1.0);
  AdamState st;
  EXPECT_THROW(adam_update(p, scalar(std::nan("")), st, AdamHyper{0.1}), NumericError);
}

TEST(FiniteDiff, ConstantLossGivesZero) {
  ParamSet p = scalar(2.0);
  p.add("m", Tensor::matrix(2, 2, 1.0));
  const ParamSet g = finite_diff_grad([](const ParamSet&) { return 4.2; }, p);
  for (const auto& [_, t] : g) {
    for (double x : t.data()) EXPECT_EQ(x, 0.0);
  }
}

TEST(FiniteDiff, SquareAtThree) {
  const ParamSet g = finite_diff_grad(
      [](const ParamSet& q) { return q.at("w")[0] * q.at("w")[0]; }, scalar(3.0), 1e-5);
  EXPECT_NEAR(g.at("w")[0], 6.0, 1e-6);
}

TEST(FiniteDiff, MatchesIndependentOracleOnSmoothFunction) {
  Rng rng(4);
  ParamSet p;
  p.add("a", Tensor::vector(6));
  for (double& x : p.at("a").data()) x = rng.normal();
  auto f = [](const ParamSet& q) {
    double s = 0;
    for (double x : q.at("a").data()) s += std::sin(x) * x * x;
    return s;
  };
  const ParamSet lib = finite_diff_grad(f, p);
  ParamSet exact = p.zeros_like();
  for (std::size_t i = 0; i < 6; ++i) {
    const double x = p.at("a")[i];
    exact.at("a")[i] = std::cos(x) * x * x + 2 * x * std::sin(x);
  }
  EXPECT_LT(oracle::max_rel_err(lib, exact), 1e-8);
  EXPECT_LT(oracle::max_rel_err(lib, oracle::central_diff(f, p)), 1e-12);
}

TEST(FiniteDiff, NonFiniteLossNamesCoordinate) {
  ParamSet p;
  p.add("theta", Tensor::vector(3, 1.0));
  try {
    finite_diff_grad(
        [](const ParamSet& q) {
          return q.at("theta")[2] > 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
        },
        p);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("theta[2]"), std::string::npos) << e.what();
  }
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const ParamSet&) { return 0.0; }, scalar(1.0), 0.0),
               ParameterError);
}

TEST(RelativeError, AgreesWithOracle) {
  Rng rng(6);
  ParamSet a;
  a.add("x", Tensor::vector(10));
  for (double& v : a.at("x").data()) v = rng.normal();
  ParamSet b = a;
  for (double& v : b.at("x").data()) v += 1e-3 * rng.normal();
  EXPECT_NEAR(relative_error(a, b), oracle::norm_rel_err(a, b), 1e-12);
  EXPECT_EQ(relative_error(a, a), 0.0);
  EXPECT_EQ(relative_error(a.zeros_like(), a.zeros_like()), 0.0);
}

TEST(ParamSetJson, RoundTripIsBitExact) {
  Rng rng(8);
  ParamSet p;
  p.add("W", Tensor::matrix(4, 5));
  p.add("b", Tensor::vector(3));
  for (double& x : p.at("W").data()) x = rng.normal() * std::pow(10.0, rng.normal(0.0, 8.0));
  p.at("b")[0] = 0.1;
  p.at("b")[1] = -0.0;
  p.at("b")[2] = std::numeric_limits<double>::denorm_min();
  const std::string text = to_json(p).dump();
  const ParamSet q = param_set_from_json(nlohmann::json::parse(text));
  EXPECT_TRUE(same_bits(p, q));
  EXPECT_EQ(p, q);
}

TEST(ParamSetJson, MalformedIsParseError) {
  EXPECT_THROW(param_set_from_json(nlohmann::json::parse(R"({"w":{"shape":[2],"data":[1]}})")),
               Error);
  EXPECT_THROW(param_set_from_json(nlohmann::json::parse(R"({"w":{"data":[1]}})")), Error);
}

TEST(ParamSet, LayoutIsFixed) {
  ParamSet p = scalar(1.0);
  EXPECT_THROW(p.add("w", Tensor::vector(1)), ParameterError);
  EXPECT_THROW(p.at("missing"), ParameterError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ParameterError);
  EXPECT_EQ(p.zeros_like().num_scalars(), 1u);
}

TEST(Rounding, HalfToEven) {
  EXPECT_EQ(round_half_even(0.5), 0);
  EXPECT_EQ(round_half_even(1.5), 2);
  EXPECT_EQ(round_half_even(2.5), 2);
  EXPECT_EQ(round_half_even(-0.5), 0);
  EXPECT_EQ(round_half_even(0.25 * 1548), 387);
  EXPECT_EQ(round_half_even(0.75 * 1548), 1161);
}

TEST(Rng, ReplayAndDerivedSeedsAreStable) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
  EXPECT_EQ(derive_seed(1, "attack", 0.25, 3), derive_seed(1, "attack", 0.250, 3));
  EXPECT_NE(derive_seed(1, "attack", 0.25, 3), derive_seed(1, "attack", 0.5, 3));
  EXPECT_NE(derive_seed(1, "attack", 0.25, 3), derive_seed(1, "train-rm", 0.25, 3));
  EXPECT_NE(derive_seed(1, "attack", 0.25, 3), derive_seed(2, "attack", 0.25, 3));
  EXPECT_NE(derive_seed(1, "attack", 0.25, 3), derive_seed(1, "attack", 0.25, 4));
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng rng(13);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[rng.uniform_index(7)]++;
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * std::sqrt(n / 7.0));
}

}  // namespace
