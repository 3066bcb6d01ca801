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

// AnalysisReport: everything computed for one capture, with a lossless JSON
// form. Families that were not enabled are absent rather than empty.

#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitdiag/attention_graph.hpp"
#include "vitdiag/capture.hpp"
#include "vitdiag/info_plane.hpp"
#include "vitdiag/phase.hpp"
#include "vitdiag/series.hpp"

namespace vitdiag {

inline constexpr int kReportSchemaVersion = 1;

/// A metric that could not be computed for a layer, with the reason.
struct DegenerateEntry {
  std::string metric;
  std::optional<int> layer;
  std::string reason;

  bool operator==(const DegenerateEntry&) const = default;
};

struct SimilaritySection {
  MetricSeries raw;
  MetricSeries centered;
  std::optional<double> pe_dominance;
  std::map<int, std::vector<int>> excluded_images;  // layer -> images skipped as degenerate

  bool operator==(const SimilaritySection&) const = default;
};

struct NeuralCollapseSection {
  MetricSeries nc1;
  MetricSeries nc2;
  MetricSeries nc3;
  MetricSeries nc4;
  std::string classifier_source = "probe";
  std::map<int, std::vector<int>> nc3_excluded_classes;

  bool operator==(const NeuralCollapseSection&) const = default;
};

struct InfoPlaneSection {
  std::vector<InfoPlanePoint> points;
  std::map<int, double> probe_val_accuracy;
  PivotRange pivot;
  double pivot_drop_min = 0.01;
  std::optional<RegimeResult> regime;  // needs at least four layers
  RegimeThresholds regime_thresholds;

  bool operator==(const InfoPlaneSection&) const = default;
};

struct AttentionSection {
  MetricSeries aci;
  MetricSeries aci_raw;
  MetricSeries ccc;
  bool per_image_chains = false;
  double pi_clamp = kPiClamp;
  std::vector<int> smoothed_layers;

  bool operator==(const AttentionSection&) const = default;
};

struct Correlation {
  std::string name;
  double rho = 0.0;
  int n = 0;
  std::string sample;  // what the pairs range over

  bool operator==(const Correlation&) const = default;
};

struct ControlsSection {
  int layer = 0;
  RandomLabelControl random_labels;
  PermutedTargetControl permuted_targets;
  std::string decoder_kind;

  bool operator==(const ControlsSection&) const = default;
};

struct AnalysisReport {
  int schema_version = kReportSchemaVersion;
  std::string tool_version;
  CaptureManifest manifest;
  int num_images = 0;
  nlohmann::json config;
  std::optional<SimilaritySection> similarity;
  std::optional<PhaseSegmentation> phase;
  std::optional<NeuralCollapseSection> neural_collapse;
  std::optional<InfoPlaneSection> info_plane;
  std::optional<AttentionSection> attention;
  std::vector<Correlation> correlations;
  std::optional<ControlsSection> controls;
  std::vector<DegenerateEntry> degenerate;
  std::map<std::string, double> timing_seconds;  // wall clock per stage; excluded from determinism

  bool operator==(const AnalysisReport&) const = default;
};

nlohmann::json report_to_json(const AnalysisReport& r);
AnalysisReport report_from_json(const nlohmann::json& j);

/// Pretty-printed JSON text with a trailing newline.
std::string report_to_string(const AnalysisReport& r);
AnalysisReport report_from_string(const std::string& text);

nlohmann::json series_to_json(const MetricSeries& s);
MetricSeries series_from_json(const nlohmann::json& j);

}  // namespace vitdiag
