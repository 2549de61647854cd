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

// Dense double-precision parameter containers, the few differentiable
// primitives the models need, Adam/AdamW, and a central-difference gradient
// oracle used only by the test suites.

#ifndef POISONLAB_NUMERICS_HPP_
#define POISONLAB_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "poisonlab/error.hpp"

namespace poisonlab {

// Row-major dense array with a fixed shape. Rank 1 is a vector, rank 2 a
// matrix. The shape cannot change after construction; entries can.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) {
      throw ParameterError("tensor data size " + std::to_string(data_.size()) +
                           " does not match shape");
    }
  }

  static Tensor vector(std::size_t n, double fill = 0.0) {
    return Tensor({n}, fill);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols(), cols());
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }

  bool operator==(const Tensor&) const = default;

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Named parameter tensors of one model. Iteration order is the sorted name
// order, which fixes the flattening order used by optimizers and gradient
// checks.
class ParamSet {
 public:
  ParamSet() = default;

  void add(const std::string& name, Tensor t) {
    if (!tensors_.emplace(name, std::move(t)).second) {
      throw ParameterError("duplicate parameter '" + name + "'");
    }
  }

  bool contains(const std::string& name) const {
    return tensors_.count(name) > 0;
  }
  Tensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
      throw ParameterError("unknown parameter '" + name + "'");
    }
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  std::size_t num_tensors() const { return tensors_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
  }

  // Same names and shapes, all entries zero.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape()));
    return out;
  }

  bool same_layout(const ParamSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    auto a = tensors_.begin();
    auto b = other.tensors_.begin();
    for (; a != tensors_.end(); ++a, ++b) {
      if (a->first != b->first || a->second.shape() != b->second.shape()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    return std::all_of(tensors_.begin(), tensors_.end(),
                       [](const auto& kv) { return kv.second.all_finite(); });
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

// JSON form: {name: {"shape": [..], "data": [..]}}. Doubles are written as
// the shortest decimal string that parses back to the same bits, so the
// round trip is exact.
inline nlohmann::json to_json(const ParamSet& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    j[name] = {{"shape", t.shape()},
               {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return j;
}

inline ParamSet param_set_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("parameter set must be a JSON object");
  ParamSet out;
  for (const auto& [name, entry] : j.items()) {
    if (!entry.is_object() || !entry.contains("shape") ||
        !entry.contains("data")) {
      throw ParseError("parameter '" + name + "' needs shape and data");
    }
    try {
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      auto data = entry.at("data").get<std::vector<double>>();
      Tensor t(std::move(shape), std::move(data));
      if (!t.all_finite()) {
        throw ValidationError("parameter '" + name + "' has non-finite data");
      }
      out.add(name, std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("parameter '" + name + "': " + e.what());
    } catch (const ParameterError& e) {
      throw ParseError("parameter '" + name + "': " + e.what());
    }
  }
  return out;
}

// Logistic function. Branches on sign so that exp never overflows.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ln σ(x), stable for large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// Softmax of logits / temperature. Shift-invariant by construction.
inline std::vector<double> softmax(std::span<const double> logits,
                                   double temperature = 1.0) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax temperature must be positive");
  }
  if (logits.empty()) throw ParameterError("softmax of empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

// log Σ exp(x_i / temperature)
inline double log_sum_exp(std::span<const double> logits,
                          double temperature = 1.0) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp((z - mx) / temperature);
  return mx / temperature + std::log(total);
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW) decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  long step = 0;

  static AdamState zeros_for(const ParamSet& params) {
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
  }
};

// In-place Adam/AdamW update with bias correction. An update that rounds to
// zero leaves the parameter bits untouched (lr = 0 is an exact no-op).
inline void adam_update(ParamSet& params, const ParamSet& grads,
                        AdamState& state, const AdamHyper& hyper) {
  if (!params.same_layout(grads)) {
    throw ParameterError("adam: gradient layout does not match parameters");
  }
  if (state.step == 0 && state.m.num_tensors() == 0) {
    state = AdamState::zeros_for(params);
  }
  if (!params.same_layout(state.m) || !params.same_layout(state.v)) {
    throw ParameterError("adam: optimizer state layout does not match");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  auto m_it = state.m.begin();
  auto v_it = state.v.begin();
  auto g_it = grads.begin();
  for (auto p_it = params.begin(); p_it != params.end();
       ++p_it, ++m_it, ++v_it, ++g_it) {
    auto p = p_it->second.data();
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    auto g = g_it->second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const double delta =
          hyper.lr * (mhat / (std::sqrt(vhat) + hyper.eps) +
                      hyper.weight_decay * p[i]);
      if (delta != 0.0) p[i] -= delta;
    }
  }
  if (!params.all_finite()) {
    throw NumericError("adam: non-finite parameter after step " +
                       std::to_string(state.step));
  }
}

// Pure form of adam_update.
inline std::pair<ParamSet, AdamState> adam_step(ParamSet params,
                                                const ParamSet& grads,
                                                AdamState state,
                                                const AdamHyper& hyper) {
  adam_update(params, grads, state, hyper);
  return {std::move(params), std::move(state)};
}

// Central differences, one coordinate at a time. Test-only oracle.
inline ParamSet finite_diff_grad(
    const std::function<double(const ParamSet&)>& loss, const ParamSet& params,
    double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be > 0");
  ParamSet grad = params.zeros_like();
  ParamSet probe = params;
  for (auto& [name, t] : probe) {
    auto g = grad.at(name).data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const double up = loss(probe);
      t[i] = saved - h;
      const double down = loss(probe);
      t[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss while perturbing " + name + "[" +
                           std::to_string(i) + "]");
      }
      g[i] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||), with both norms below `floor` counted as
// agreement.
inline double relative_error(const ParamSet& a, const ParamSet& b,
                             double floor = 1e-10) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  auto b_it = b.begin();
  for (auto a_it = a.begin(); a_it != a.end(); ++a_it, ++b_it) {
    for (std::size_t i = 0; i < a_it->second.size(); ++i) {
      const double x = a_it->second[i];
      const double y = b_it->second[i];
      diff += (x - y) * (x - y);
      na += x * x;
      nb += y * y;
    }
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < floor) return std::sqrt(diff) < floor ? 0.0 : 1.0;
  return std::sqrt(diff) / scale;
}

// Round half to even.
inline long long round_half_even(double x) {
  return static_cast<long long>(std::nearbyint(x));
}

}  // namespace poisonlab

#endif  // POISONLAB_NUMERICS_HPP_
