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

// InfoX, the Information Scrambling Index, and the analyses built on the
// per-layer (probe accuracy, InfoX) trajectory.

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitdiag/decoder.hpp"
#include "vitdiag/probe.hpp"
#include "vitdiag/tensor.hpp"

namespace vitdiag {

/// 1 - (mse - oracle) / (null - oracle).
double infox(double mse, double mse_null, double mse_oracle = 0.0);

inline double scrambling_index(double infox_all, double infox_self) { return infox_all - infox_self; }

struct InfoPlanePoint {
  int layer = 0;
  double probe_acc = 0.0;  // fraction in [0, 1]
  std::optional<double> probe_ci_low;
  std::optional<double> probe_ci_high;
  double infox_self = 0.0;
  double infox_all = 0.0;
  double scrambling = 0.0;
  double task_gain = 0.0;   // probe_acc(l) - probe_acc(l-1); 0 at the first layer
  double infox_drop = 0.0;  // infox_self(l-1) - infox_self(l); positive means information lost

  bool operator==(const InfoPlanePoint&) const = default;
};

/// Fills scrambling, task_gain and infox_drop from the primary columns.
void fill_derived(std::vector<InfoPlanePoint>& points);

struct PivotRange {
  std::vector<int> layers;  // empty when no layer qualifies

  bool empty() const { return layers.empty(); }
  std::optional<int> first() const { return layers.empty() ? std::nullopt : std::optional<int>(layers.front()); }
  std::optional<int> last() const { return layers.empty() ? std::nullopt : std::optional<int>(layers.back()); }
  bool operator==(const PivotRange&) const = default;
};

/// A layer qualifies when its accuracy gain is positive and in the top
/// quartile of all gains and its infox_drop exceeds drop_min. Returns the
/// contiguous run of qualifying layers around the largest qualifying gain.
PivotRange find_pivot(const std::vector<InfoPlanePoint>& points, double drop_min = 0.01);

enum class Regime { Collapsing, Stable, Escalating };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct RegimeThresholds {
  double escalate_ratio = 2.0;     // last-quartile mean over middle-half mean
  double final_over_median = 1.5;  // final value over series median
  double collapse_ratio = 0.5;     // final value over first-quartile mean

  bool operator==(const RegimeThresholds&) const = default;
};

struct RegimeResult {
  Regime regime = Regime::Stable;
  double first_quartile_mean = 0.0;
  double middle_half_mean = 0.0;
  double last_quartile_mean = 0.0;
  double median = 0.0;
  double final_value = 0.0;
  bool any_negative = false;

  bool operator==(const RegimeResult&) const = default;
};

/// Quartiles hold floor(n/4) values each; the middle half is the rest.
RegimeResult classify_regime(std::span<const double> scrambling, const RegimeThresholds& t = {});

struct CheckpointTarget {
  double infox_ceiling = 0.11;
  double acc_floor = 0.60;

  bool operator==(const CheckpointTarget&) const = default;
};

enum class CheckpointStatus { Reached, AccuracyOnly, Unreached };

std::string to_string(CheckpointStatus s);
CheckpointStatus checkpoint_status_from_string(const std::string& s);

struct SeriesCheckpoint {
  CheckpointStatus status = CheckpointStatus::Unreached;
  std::optional<int> layer;

  bool operator==(const SeriesCheckpoint&) const = default;
};

struct CheckpointResult {
  SeriesCheckpoint a;
  SeriesCheckpoint b;
  std::optional<int> overhead;  // b.layer - a.layer when both have a layer
  std::vector<std::string> evidence;

  bool operator==(const CheckpointResult&) const = default;
};

/// First layer of each series with infox_self <= ceiling and probe_acc >= floor.
/// A series whose InfoX never falls to the ceiling but whose accuracy does
/// reach the floor is reported as AccuracyOnly at its first qualifying
/// accuracy layer; the evidence list says so.
CheckpointResult depth_to_checkpoint(const std::vector<InfoPlanePoint>& a, const std::vector<InfoPlanePoint>& b,
                                     const CheckpointTarget& target = {});

struct RandomLabelControl {
  double accuracy = 0.0;
  double threshold = 0.0;  // 3 / C
  bool applicable = true;  // false when 3 / C >= 1
  bool passed = false;

  bool operator==(const RandomLabelControl&) const = default;
};

/// Trains a probe with the training labels permuted; validation and test
/// labels stay intact.
RandomLabelControl control_random_labels(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                                         int num_classes, const Split& split, const ProbeConfig& cfg);

struct PermutedTargetControl {
  double mse_permuted = 0.0;
  double mse_unpermuted = 0.0;
  double mse_null = 0.0;
  double retained = 0.0;  // (null - permuted) / (null - unpermuted)
  bool vacuous = false;   // the unpermuted decoder recovers almost nothing
  bool passed = false;

  bool operator==(const PermutedTargetControl&) const = default;
};

PermutedTargetControl control_permuted_targets(const LayerTokens& tokens, const LayerTokens& z0, DecoderKind kind,
                                               const Split& split, const ProbeConfig& cfg);

}  // namespace vitdiag
