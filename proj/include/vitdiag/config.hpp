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

// Analysis configuration read from a small TOML subset:
//
//   # comment
//   [section]
//   key = true | 42 | 0.5 | 1e-3 | "text"
//
// Arrays, inline tables and multi-line strings are not supported. Unknown
// sections or keys are rejected so typos do not silently fall back to defaults.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "vitdiag/decoder.hpp"
#include "vitdiag/info_plane.hpp"
#include "vitdiag/phase.hpp"
#include "vitdiag/probe.hpp"
#include "vitdiag/synthetic.hpp"

namespace vitdiag {

using TomlValue = std::variant<bool, std::int64_t, double, std::string>;
using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;

/// Parses the supported subset; keys before any header land in section "".
TomlTable parse_toml(const std::string& text);

struct FamilyToggles {
  bool similarity = true;
  bool phase = true;
  bool neural_collapse = true;
  bool info_plane = true;
  bool attention = true;
  bool controls = true;

  bool operator==(const FamilyToggles&) const = default;
};

struct SimilarityConfig {
  int n_boot = 2000;
  double ci_level = 0.95;
  bool include_cls = false;

  bool operator==(const SimilarityConfig&) const = default;
};

struct AttentionConfig {
  bool per_image_chains = false;
  double tol = 1e-10;
  int max_iters = 10000;

  bool operator==(const AttentionConfig&) const = default;
};

struct NeuralCollapseConfig {
  int chunk_rows = 0;

  bool operator==(const NeuralCollapseConfig&) const = default;
};

struct ControlsConfig {
  int layer = -1;  // block to run the controls on; -1 means the last block
  DecoderKind decoder_kind = DecoderKind::all_to_all;

  bool operator==(const ControlsConfig&) const = default;
};

struct RuntimeConfig {
  int workers = 0;  // 0 means one per logical core
  std::uint64_t seed = 0;

  bool operator==(const RuntimeConfig&) const = default;
};

struct AnalysisConfig {
  FamilyToggles families;
  SimilarityConfig similarity;
  PhaseOptions phase;
  double pivot_drop_min = 0.01;
  RegimeThresholds regime;
  SplitSpec split;
  ProbeConfig probe = ProbeConfig::classifier();
  ProbeConfig decoder = ProbeConfig::decoder();
  ProbeConfig nc_classifier = ProbeConfig::nc_classifier();
  DecoderOptions decoder_options;
  NeuralCollapseConfig neural_collapse;
  AttentionConfig attention;
  ControlsConfig controls;
  RuntimeConfig runtime;

  /// Range and consistency checks; throws ConfigError.
  void check() const;
};

AnalysisConfig config_from_toml(const std::string& text);
AnalysisConfig load_config(const std::filesystem::path& path);

/// Echo of every setting, for the report.
nlohmann::json config_to_json(const AnalysisConfig& c);

/// [synth] section: B, L, P, D, C, H, noise_sigma, seed. Missing keys keep the
/// scenario defaults.
SynthSpec synth_spec_from_toml(const std::string& text, Scenario scenario);

}  // namespace vitdiag
