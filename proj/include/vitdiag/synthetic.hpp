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

// Synthetic captures whose metric values are known by construction.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

#include "vitdiag/capture.hpp"

namespace vitdiag {

enum class Scenario { collapsed_etf, three_phase_similarity, permuted_tokens, absorbing_cls, uniform_attention, noise_floor };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SynthSpec {
  Scenario scenario = Scenario::noise_floor;
  int B = 64;
  int L = 4;
  int P = 16;
  int D = 8;
  int C = 2;
  int H = 2;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Sizes suited to each scenario.
  static SynthSpec defaults(Scenario s);

  /// Throws SpecError when sizes fall below the scenario's minimums.
  void check() const;

  bool operator==(const SynthSpec&) const = default;
};

struct GroundTruth {
  Scenario scenario = Scenario::noise_floor;
  nlohmann::json expected;  // scenario-specific known values
};

nlohmann::json ground_truth_to_json(const GroundTruth& g, const SynthSpec& spec);

struct SyntheticCapture {
  CaptureManifest manifest;
  CaptureStreams streams;
  GroundTruth truth;
};

SyntheticCapture synthesize(const SynthSpec& spec);

/// Writes the capture to `path` and the ground truth to `path` + ".truth.json".
GroundTruth generate(const SynthSpec& spec, const std::filesystem::path& path);

std::filesystem::path truth_path(const std::filesystem::path& capture_path);

}  // namespace vitdiag
