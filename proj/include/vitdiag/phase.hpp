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

// Cliff / Plateau / Climb segmentation of a centered-similarity series.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vitdiag/series.hpp"

namespace vitdiag {

struct PlateauRun {
  int length = 0;
  std::optional<int> start;
  std::optional<int> end;  // inclusive

  bool operator==(const PlateauRun&) const = default;
};

/// Run of consecutive blocks below `threshold` beginning at the first block.
/// Pre-block rows (negative indices) are ignored.
PlateauRun plateau_length(const MetricSeries& series, double threshold = 0.02);

struct PhaseOptions {
  double threshold = 0.02;
  /// A climb must exceed threshold + climb_rise.
  double climb_rise = 0.02;
  /// When set, a mismatch with the computed plateau length is noted.
  std::optional<int> reference_plateau_length;
};

struct PhaseSegmentation {
  std::vector<int> cliff_layers;
  std::optional<int> plateau_start;
  std::optional<int> plateau_end;
  int plateau_length = 0;
  std::optional<int> climb_start;
  double threshold = 0.02;
  double climb_rise = 0.02;
  std::vector<std::string> notes;

  bool operator==(const PhaseSegmentation&) const = default;
};

/// Segments a series that includes the z0 row (-2) and, normally, the z0+PE
/// row (-1) followed by blocks 0..L-1.
///
/// Cliff: when z0 is at or above threshold, the rows from -1 through the
/// first row that falls below threshold (and at least through block 0).
/// Plateau: plateau_length on the block rows.
/// Climb: first block after the plateau whose value exceeds
/// threshold + climb_rise and does not decrease at the next block.
/// Layers that fit none of these are listed in `notes`.
PhaseSegmentation segment_phases(const MetricSeries& series, const PhaseOptions& options = {});

}  // namespace vitdiag
