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

// Label flipping on the classifier-selected subset of a preference dataset.

#ifndef POISONLAB_ATTACK_HPP_
#define POISONLAB_ATTACK_HPP_

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "poisonlab/classifier.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/numerics.hpp"
#include "poisonlab/prefdata.hpp"
#include "poisonlab/rng.hpp"

namespace poisonlab {

enum class AttackMode { kRate, kCount };

struct AttackConfig {
  AttackMode mode = AttackMode::kRate;
  // Fraction of D_target to flip (kRate).
  double rate = 0.0;
  // Absolute sampling threshold n (kCount).
  std::size_t count = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (mode == AttackMode::kRate && !(rate >= 0.0 && rate <= 1.0)) {
      throw ConfigError("attack rate must be in [0, 1], got " + std::to_string(rate));
    }
  }
};

// Swaps chosen and rejected and toggles meta.flipped.
inline PreferencePair flip_pair(PreferencePair x) {
  std::swap(x.chosen, x.rejected);
  x.meta.flipped = !x.meta.flipped;
  return x;
}

struct PoisonResult {
  PreferenceDataset dataset;
  std::size_t target_count = 0;
  // Sorted ascending.
  std::vector<std::size_t> flipped_indices;
  std::vector<std::string> warnings;
};

// Number of pairs to flip out of `targets`. Rates round half to even; an
// absolute count above |D_target| is clamped with a warning.
inline std::size_t flip_count(const AttackConfig& cfg, std::size_t targets,
                              std::vector<std::string>* warnings) {
  cfg.validate();
  if (cfg.mode == AttackMode::kRate) {
    return static_cast<std::size_t>(
        round_half_even(cfg.rate * static_cast<double>(targets)));
  }
  if (cfg.count > targets) {
    if (warnings) {
      warnings->push_back("requested " + std::to_string(cfg.count) +
                          " flips but only " + std::to_string(targets) +
                          " targeted pairs; clamped");
    }
    return targets;
  }
  return cfg.count;
}

// Uniform sample of k of the n positions, without replacement, sorted.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Select targets with Θ, draw the flip subset, flip in place. Every pair
// outside the subset is left byte-identical (meta.targeted included).
inline PoisonResult poison_dataset(const PreferenceDataset& data,
                                   const TopicClassifier& clf,
                                   const AttackConfig& cfg, Rng& rng) {
  PoisonResult out;
  out.dataset = data;
  const auto targets = find_targets(clf, out.dataset);
  out.target_count = targets.size();
  const std::size_t n = flip_count(cfg, targets.size(), &out.warnings);
  for (std::size_t pos : sample_without_replacement(targets.size(), n, rng)) {
    const std::size_t i = targets[pos];
    out.dataset.pairs[i] = flip_pair(std::move(out.dataset.pairs[i]));
    out.flipped_indices.push_back(i);
  }
  return out;
}

inline nlohmann::json poison_manifest(const PoisonResult& r,
                                      const AttackConfig& cfg) {
  nlohmann::json mode = cfg.mode == AttackMode::kRate
                            ? nlohmann::json{{"rate", cfg.rate}}
                            : nlohmann::json{{"count", cfg.count}};
  return {{"seed", cfg.seed},
          {"mode", mode},
          {"target_count", r.target_count},
          {"flipped_count", r.flipped_indices.size()},
          {"flipped_indices", r.flipped_indices},
          {"warnings", r.warnings}};
}

}  // namespace poisonlab

#endif  // POISONLAB_ATTACK_HPP_
