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

// Static SVG line charts. Layer index on x, metric on y, optional CI bands.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vitdiag/report.hpp"

namespace vitdiag {

struct PlotLine {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::optional<std::vector<double>> lo;
  std::optional<std::vector<double>> hi;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "layer";
  std::string y_label;
  std::vector<PlotLine> lines;
  std::optional<double> reference_y;  // dashed horizontal line
};

std::string render_svg(const PlotSpec& spec);

PlotLine line_from_series(const MetricSeries& s, const std::string& label);

/// (file name, SVG text) for every figure the report has data for.
std::vector<std::pair<std::string, std::string>> report_plots(const AnalysisReport& report);

}  // namespace vitdiag
