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

#ifndef POISONLAB_ERROR_HPP_
#define POISONLAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace poisonlab {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument to a pure operation (bad shape, non-positive temperature).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Configuration rejected (schema, ranges, exhausted sampling budgets).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A required upstream artifact is missing or stale.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact exists but was produced under a different config.
class StaleArtifactError : public DependencyError {
 public:
  using DependencyError::DependencyError;
};

// Malformed file contents. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Well-formed data that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Enumeration or allocation guard exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Model training could not proceed (e.g. a classifier head with one class).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// The sampler keeps producing identical responses.
class DegeneratePolicyError : public Error {
 public:
  using Error::Error;
};

}  // namespace poisonlab

#endif  // POISONLAB_ERROR_HPP_
