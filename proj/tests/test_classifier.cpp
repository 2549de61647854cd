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

#include <algorithm>
#include <chrono>
#include <vector>

#include "poisonlab/classifier.hpp"
#include "poisonlab/policy.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/textworld.hpp"

namespace {

using namespace poisonlab;

std::vector<LabeledExample> examples_for(const World& w, const TopicClassifier& c,
                                         const PreferenceDataset& d) {
  std::vector<LabeledExample> out;
  for (const auto& p : d.pairs) out.push_back(make_example(w, c, p));
  return out;
}

// The default synthetic task, trained once for the whole suite.
struct DefaultTask {
  World world;
  PreferenceDataset train, heldout, fresh;
  TopicClassifier clf;
  ClassifierMetrics metrics;

  DefaultTask() {
    Rng rng(20240601);
    const Policy base = make_base_policy(world, {}, rng, 4, {});
    const auto corpus = generate_dataset(world, base, rng, 7740, 0.25);
    auto parts = split(corpus, 0.2, rng);
    train = std::move(parts.first);
    heldout = std::move(parts.second);
    fresh = generate_dataset(world, base, rng, 6192, 0.25);
    clf = TopicClassifier::zeros(64, FeatureScope::kFullPair, 0.5);
    clf = train_classifier(examples_for(world, clf, train), {}, clf, rng);
    const auto ex = examples_for(world, clf, heldout);
    metrics = evaluate_classifier(clf, ex);
  }

  static const DefaultTask& get() {
    static const DefaultTask task;
    return task;
  }
};

TEST(ClassifierTrain, SeparableSetIsFitExactly) {
  // Head k fires exactly when token 10+k is present; supports are disjoint.
  std::vector<LabeledExample> ex;
  Rng rng(1);
  for (int i = 0; i < 600; ++i) {
    LabeledExample e{std::vector<double>(20, 0.0), {}};
    e.features[rng.uniform_index(4)] += 1.0;  // shared noise tokens
    for (int k = 0; k < kNumTopics; ++k) {
      if (rng.bernoulli(0.3)) {
        e.features[static_cast<std::size_t>(10 + k)] = 1.0 + static_cast<double>(rng.uniform_index(2));
        e.labels[k] = true;
      }
    }
    ex.push_back(e);
  }
  ClassifierHyper h;
  h.epochs = 30;
  auto clf = train_classifier(ex, h, TopicClassifier::zeros(20, FeatureScope::kFullPair, 0.5), rng);
  const auto m = evaluate_classifier(clf, ex);
  EXPECT_EQ(m.subset_accuracy, 1.0);
  EXPECT_EQ(m.micro_f1, 1.0);
}

TEST(ClassifierTrain, ZeroEpochsReturnsInitialization) {
  const auto& t = DefaultTask::get();
  auto init = TopicClassifier::zeros(64, FeatureScope::kFullPair, 0.5);
  Rng r(2);
  for (auto& [name, tensor] : init.params) {
    for (auto& x : tensor.data()) x = r.normal();
  }
  ClassifierHyper h;
  h.epochs = 0;
  Rng rng(3);
  const auto out = train_classifier(examples_for(t.world, init, t.heldout), h, init, rng);
  EXPECT_EQ(to_json(out).dump(), to_json(init).dump());
}

TEST(ClassifierTrain, SingleClassHeadNamesTheHead) {
  std::vector<LabeledExample> ex(10, LabeledExample{std::vector<double>(8, 1.0), {}});
  for (std::size_t i = 0; i < ex.size(); ++i) {
    for (int k = 0; k < kNumTopics; ++k) ex[i].labels[k] = (i + static_cast<std::size_t>(k)) % 2;
  }
  for (auto& e : ex) e.labels[3] = false;
  Rng rng(4);
  try {
    train_classifier(ex, {}, TopicClassifier::zeros(8, FeatureScope::kFullPair, 0.5), rng);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("topic_4"), std::string::npos) << e.what();
  }
}

TEST(ClassifierTrain, DefaultTaskMeetsF1Bar) {
  const auto& t = DefaultTask::get();
  EXPECT_EQ(t.train.size(), 6192u);
  EXPECT_GE(t.metrics.micro_f1, 0.83);
  EXPECT_GE(t.metrics.subset_accuracy, 0.93);
}

TEST(Classify, AgreesWithGroundTruthOnClearCases) {
  const auto& t = DefaultTask::get();
  PreferencePair neutral;
  neutral.context = {1, 2, 3};
  neutral.chosen = {4, 5, 0};
  neutral.rejected = {7, 0};
  EXPECT_FALSE(neutral.has_topic());
  EXPECT_FALSE(classify(t.clf, neutral));
  const Token t2 = t.world.vocab().topic_tokens(2)[0];
  PreferencePair topic = neutral;
  topic.chosen = {t2, t2, t2, 0};
  topic.meta.topic_hits = pair_topic_hits(t.world, topic.context, topic.chosen, topic.rejected);
  EXPECT_TRUE(topic.has_topic());
  EXPECT_TRUE(classify(t.clf, topic));
}

TEST(Classify, ThresholdOneNeverFires) {
  const auto& t = DefaultTask::get();
  TopicClassifier c = t.clf;
  c.threshold = 1.0;
  EXPECT_TRUE(find_targets(c, t.fresh).empty());
  // even with saturated logits
  c.params.at("b")[0] = 1e6;
  EXPECT_TRUE(find_targets(c, t.fresh).empty());
}

TEST(Classify, RaisingThresholdNeverGrowsTheSet) {
  const auto& t = DefaultTask::get();
  std::vector<std::size_t> prev;
  bool first = true;
  for (double tau : {0.05, 0.2, 0.5, 0.8, 0.95, 0.999, 1.0}) {
    TopicClassifier c = t.clf;
    c.threshold = tau;
    const auto s = find_targets(c, t.fresh);
    if (!first) {
      EXPECT_TRUE(std::includes(prev.begin(), prev.end(), s.begin(), s.end())) << tau;
    }
    prev = s;
    first = false;
  }
}

TEST(Classify, IsPure) {
  const auto& t = DefaultTask::get();
  for (std::size_t i = 0; i < 200; ++i) {
    ASSERT_EQ(classify(t.clf, t.fresh.pairs[i]), classify(t.clf, t.fresh.pairs[i]));
  }
}

TEST(SelectTargets, IdempotentAndStamps) {
  const auto& t = DefaultTask::get();
  PreferenceDataset d = t.fresh;
  const auto a = select_targets(t.clf, d);
  const PreferenceDataset after_first = d;
  const auto b = select_targets(t.clf, d);
  EXPECT_EQ(a, b);
  EXPECT_EQ(d, after_first);
  for (std::size_t i = 0, j = 0; i < d.size(); ++i) {
    const bool in = j < a.size() && a[j] == i;
    ASSERT_EQ(d.pairs[i].meta.targeted, in);
    j += in;
  }
  // only the targeted bit changes
  for (std::size_t i = 0; i < d.size(); ++i) {
    PreferencePair p = d.pairs[i];
    p.meta.targeted = false;
    ASSERT_EQ(p, t.fresh.pairs[i]);
  }
}

TEST(SelectTargets, DefaultDatasetCountNear1548) {
  const auto& t = DefaultTask::get();
  const auto n = static_cast<double>(find_targets(t.clf, t.fresh).size());
  EXPECT_GE(n, 1548 * 0.95);
  EXPECT_LE(n, 1548 * 1.05);
}

TEST(ClassifierJson, RoundTrip) {
  const auto& t = DefaultTask::get();
  const auto back = classifier_from_json(nlohmann::json::parse(to_json(t.clf).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(t.clf).dump());
  EXPECT_EQ(find_targets(back, t.fresh), find_targets(t.clf, t.fresh));
  EXPECT_THROW(TopicClassifier::zeros(64, FeatureScope::kFullPair, 0.0), ConfigError);
  EXPECT_THROW(feature_scope_from_string("prompt"), ConfigError);
}

TEST(ClassifierScope, ContextOnlyIgnoresResponses) {
  const World w;
  const auto c = TopicClassifier::zeros(64, FeatureScope::kContextOnly, 0.5);
  PreferencePair p;
  p.context = {1, 1};
  p.chosen = {60, 0};
  p.rejected = {2};
  const auto x = c.features(p);
  EXPECT_EQ(x[1], 2.0);
  EXPECT_EQ(x[60], 0.0);
  const auto ex = make_example(w, c, p);
  for (bool l : ex.labels) EXPECT_FALSE(l);
}

}  // namespace
