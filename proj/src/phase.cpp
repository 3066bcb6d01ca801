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

#include "vitdiag/phase.hpp"

#include <sstream>

#include "vitdiag/errors.hpp"

namespace vitdiag {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

MetricSeries contiguous_blocks(const MetricSeries& series) {
  MetricSeries blocks = series.blocks_only();
  if (blocks.size() == 0) throw DegenerateInputError("phase analysis: series has no block rows");
  for (std::size_t i = 1; i < blocks.size(); ++i)
    if (blocks.layer_indices[i] != blocks.layer_indices[i - 1] + 1)
      throw DegenerateInputError("phase analysis: block indices must be contiguous and ascending");
  return blocks;
}

}  // namespace

PlateauRun plateau_length(const MetricSeries& series, double threshold) {
  const MetricSeries blocks = contiguous_blocks(series);
  PlateauRun run;
  for (std::size_t i = 0; i < blocks.size() && blocks.values[i] < threshold; ++i) {
    if (!run.start) run.start = blocks.layer_indices[i];
    run.end = blocks.layer_indices[i];
    ++run.length;
  }
  return run;
}

PhaseSegmentation segment_phases(const MetricSeries& series, const PhaseOptions& options) {
  const double thr = options.threshold;
  const auto z0 = series.at_layer(-2);
  if (!z0) throw DegenerateInputError("segment_phases: series must include the z0 row (layer -2)");
  const MetricSeries blocks = contiguous_blocks(series);

  PhaseSegmentation seg;
  seg.threshold = thr;
  seg.climb_rise = options.climb_rise;

  const PlateauRun plateau = plateau_length(series, thr);
  seg.plateau_length = plateau.length;
  seg.plateau_start = plateau.start;
  seg.plateau_end = plateau.end;

  // Rows after z0 in order: -1 (if present) then blocks.
  std::vector<int> after;
  std::vector<double> after_values;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series.layer_indices[i] >= -1) {
      after.push_back(series.layer_indices[i]);
      after_values.push_back(series.values[i]);
    }
  }
  if (*z0 >= thr) {
    std::optional<int> drop;
    for (std::size_t i = 0; i < after.size(); ++i) {
      if (after_values[i] < thr) {
        drop = after[i];
        break;
      }
    }
    if (drop) {
      const int last = std::max(*drop, blocks.layer_indices.front());
      for (int layer : after)
        if (layer <= last) seg.cliff_layers.push_back(layer);
    } else {
      seg.notes.push_back("no cliff: similarity never falls below threshold " + fmt(thr) + " after z0");
    }
  } else {
    seg.notes.push_back("no cliff: z0 similarity " + fmt(*z0) + " is already below threshold " + fmt(thr));
  }

  const double climb_level = thr + options.climb_rise;
  const std::size_t search_from = plateau.end ? static_cast<std::size_t>(*plateau.end - blocks.layer_indices[0] + 1) : 0;
  for (std::size_t i = search_from; i + 1 < blocks.size(); ++i) {
    if (blocks.values[i] > climb_level && blocks.values[i + 1] >= blocks.values[i]) {
      seg.climb_start = blocks.layer_indices[i];
      break;
    }
  }
  if (!seg.climb_start) seg.notes.push_back("climb below threshold; see raw-similarity series");

  std::vector<int> unclassified;
  const int climb_from = seg.climb_start.value_or(blocks.layer_indices.back() + 1);
  for (std::size_t i = search_from; i < blocks.size(); ++i)
    if (blocks.layer_indices[i] < climb_from) unclassified.push_back(blocks.layer_indices[i]);
  if (!unclassified.empty()) seg.notes.push_back("unclassified layers: " + join(unclassified));

  if (options.reference_plateau_length && *options.reference_plateau_length != seg.plateau_length) {
    seg.notes.push_back("plateau length discrepancy: computed " + std::to_string(seg.plateau_length) +
                        " at threshold " + fmt(thr) + ", reference " +
                        std::to_string(*options.reference_plateau_length));
  }
  return seg;
}

}  // namespace vitdiag
