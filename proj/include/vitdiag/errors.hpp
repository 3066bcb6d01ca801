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

#pragma once

#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

namespace vitdiag {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  ShapeError(std::string stream, const std::string& what)
      : Error("shape error in stream '" + stream + "': " + what), stream_(std::move(stream)) {}
  const std::string& stream() const { return stream_; }

 private:
  std::string stream_;
};

class DtypeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Invariant violation located in a capture. Negative coordinates mean
/// "not applicable" (e.g. a tokens violation has no head).
class ValidationError : public Error {
 public:
  struct Location {
    std::string stream;
    int layer = -100;
    int head = -1;
    int row = -1;
    int image = -1;
  };

  ValidationError(Location where, const std::string& what)
      : Error(describe(where) + ": " + what), where_(std::move(where)) {}
  explicit ValidationError(const std::string& what) : Error(what) {}

  const Location& where() const { return where_; }

 private:
  static std::string describe(const Location& w) {
    std::string s = "validation error in " + w.stream;
    if (w.layer != -100) s += " layer " + std::to_string(w.layer);
    if (w.image >= 0) s += " image " + std::to_string(w.image);
    if (w.head >= 0) s += " head " + std::to_string(w.head);
    if (w.row >= 0) s += " row " + std::to_string(w.row);
    return s;
  }
  Location where_;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class MissingClassError : public Error {
 public:
  explicit MissingClassError(std::vector<int> classes)
      : Error("classes without samples: " + join(classes)), classes_(std::move(classes)) {}
  const std::vector<int>& classes() const { return classes_; }

 private:
  static std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  }
  std::vector<int> classes_;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, int batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

/// A requested metric family cannot run, or a config value is invalid.
class ConfigError : public Error {
 public:
  ConfigError(std::string family, std::string stream)
      : Error("metric family '" + family + "' requires stream '" + stream + "'"),
        family_(std::move(family)),
        stream_(std::move(stream)) {}
  explicit ConfigError(const std::string& what) : Error(what) {}

  const std::string& family() const { return family_; }
  const std::string& stream() const { return stream_; }

 private:
  std::string family_;
  std::string stream_;
};

/// Wraps an error raised inside a pipeline stage; `inner()` rethrows the
/// original so callers can still dispatch on its type.
class StageError : public Error {
 public:
  StageError(std::string stage, std::exception_ptr inner, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)), inner_(std::move(inner)) {}

  const std::string& stage() const { return stage_; }
  [[noreturn]] void rethrow_inner() const { std::rethrow_exception(inner_); }

 private:
  std::string stage_;
  std::exception_ptr inner_;
};

}  // namespace vitdiag
