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

// Full analysis of one capture: per-layer jobs on a bounded worker pool,
// single-threaded aggregation, then report, CSV, SVG and artifact output.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vitdiag/capture.hpp"
#include "vitdiag/config.hpp"
#include "vitdiag/report.hpp"

namespace vitdiag {

struct AnalysisRun {
  AnalysisReport report;
  /// NPY entries for training_artifacts.zip: probe and decoder parameters and
  /// validation curves per layer.
  std::vector<std::pair<std::string, std::vector<char>>> artifacts;
};

/// Raises ConfigError(family, stream) for the first enabled family whose
/// stream is missing from the manifest.
void require_streams(const CaptureManifest& manifest, const AnalysisConfig& config);

AnalysisRun analyze(const Capture& capture, const AnalysisConfig& config);

/// Random-label and permuted-target controls on the configured layer.
ControlsSection run_controls(const Capture& capture, const AnalysisConfig& config);

/// Writes `text` to a temporary sibling and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// `layer,value,ci_low,ci_high` with LF line endings; CI cells empty when absent.
std::string series_csv(const MetricSeries& s);

/// (file name, CSV text) for every metric series in the report.
std::vector<std::pair<std::string, std::string>> report_csvs(const AnalysisReport& report);

void write_plots(const AnalysisReport& report, const std::filesystem::path& out_dir);

/// report.json, CSVs, SVGs and training_artifacts.zip under `out_dir`.
void write_outputs(const AnalysisRun& run, const std::filesystem::path& out_dir);

AnalysisReport run_analysis(const std::filesystem::path& capture_path,
                            const std::optional<std::filesystem::path>& config_path,
                            const std::filesystem::path& out_dir);

}  // namespace vitdiag
