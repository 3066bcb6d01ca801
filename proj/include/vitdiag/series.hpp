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

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vitdiag {

/// Per-layer scalar metric with optional bootstrap confidence band.
struct MetricSeries {
  std::string name;
  std::vector<int> layer_indices;
  std::vector<double> values;
  std::optional<std::vector<double>> ci_low;
  std::optional<std::vector<double>> ci_high;
  std::optional<int> n_boot;
  std::optional<double> ci_level;

  static MetricSeries named(std::string n) {
    MetricSeries s;
    s.name = std::move(n);
    return s;
  }

  std::size_t size() const { return values.size(); }

  void push(int layer, double value) {
    layer_indices.push_back(layer);
    values.push_back(value);
  }

  void push(int layer, double value, double lo, double hi) {
    push(layer, value);
    if (!ci_low) ci_low.emplace();
    if (!ci_high) ci_high.emplace();
    ci_low->push_back(lo);
    ci_high->push_back(hi);
  }

  /// Value at `layer`, if present.
  std::optional<double> at_layer(int layer) const {
    for (std::size_t i = 0; i < layer_indices.size(); ++i)
      if (layer_indices[i] == layer) return values[i];
    return std::nullopt;
  }

  /// Sub-series restricted to block indices (layer >= 0).
  MetricSeries blocks_only() const {
    MetricSeries out;
    out.name = name;
    out.n_boot = n_boot;
    out.ci_level = ci_level;
    for (std::size_t i = 0; i < size(); ++i) {
      if (layer_indices[i] < 0) continue;
      if (ci_low && ci_high)
        out.push(layer_indices[i], values[i], (*ci_low)[i], (*ci_high)[i]);
      else
        out.push(layer_indices[i], values[i]);
    }
    return out;
  }

  bool operator==(const MetricSeries&) const = default;
};

}  // namespace vitdiag
