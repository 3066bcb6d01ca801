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

// Data splits, optimizer settings and the linear classification probe.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "vitdiag/tensor.hpp"

namespace vitdiag {

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  bool stratified = true;
  std::uint64_t seed = 0;

  void check() const;
  bool operator==(const SplitSpec&) const = default;
};

struct Split {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Seeded split of `labels.size()` samples. Stratified splits round each
/// class's share independently, so per-class proportions hold within one sample.
Split make_split(const Labels& labels, int num_classes, const SplitSpec& spec);

/// Unstratified split of n samples.
Split make_split(int n, const SplitSpec& spec);

/// Validation quantity that drives early stopping and best-epoch restore.
enum class Monitor { accuracy, loss };

std::string to_string(Monitor m);
Monitor monitor_from_string(const std::string& s);

struct ProbeConfig {
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  int batch_size = 8192;
  int patience = 10;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  Monitor monitor = Monitor::accuracy;

  static ProbeConfig classifier() { return {}; }

  static ProbeConfig decoder() {
    ProbeConfig c;
    c.learning_rate = 3e-3;
    c.weight_decay = 1e-4;
    c.batch_size = 2048;
    c.max_epochs = 200;
    return c;
  }

  /// Classifier whose rows feed NC3 and NC4. Unregularized Adam on separable
  /// features drifts toward sign-like weight directions, so this one carries
  /// weight decay and runs until validation loss stops improving.
  static ProbeConfig nc_classifier() {
    ProbeConfig c;
    c.weight_decay = 1e-2;
    c.max_epochs = 300;
    c.monitor = Monitor::loss;
    return c;
  }

  void check() const;
  bool operator==(const ProbeConfig&) const = default;
};

struct ProbeResult {
  Eigen::MatrixXd weights;  // C x D
  Eigen::VectorXd bias;     // C
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double test_ci_low = 0.0;
  double test_ci_high = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_curve;   // validation accuracy per epoch
  std::vector<double> val_loss;    // validation cross-entropy per epoch
};

/// Multinomial logistic regression on (B, D) features, trained with Adam on
/// mini-batches, early-stopped on the monitored validation quantity with the
/// best parameters restored. Test accuracy carries a bootstrap CI over samples.
ProbeResult train_probe(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels, int num_classes,
                        const Split& split, const ProbeConfig& cfg);

ProbeResult train_probe(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels, int num_classes,
                        const SplitSpec& split, const ProbeConfig& cfg);

/// Fraction of rows in `rows` where argmax(W x + b) equals the label.
double probe_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                      const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const std::vector<int>& rows);

}  // namespace vitdiag
