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

// Reference layer tables for pretrained ViT-S/16, ViT-B/16 and ViT-L/16, typed by hand.
// Accuracies are percentages as printed.

#pragma once

#include <vector>

#include "vitdiag/info_plane.hpp"
#include "vitdiag/series.hpp"

namespace fixtures {

struct Row {
  int layer;
  double acc_pct;
  double infox_self;
  double infox_all;
  double scrambling;
};

// Centered similarity, rows -2 (z0), -1 (z0+PE), then blocks.
inline const std::vector<double> kCenteredS = {0.020, -0.002, 0.001, -0.003, -0.004, -0.004, -0.004,
                                               0.001, 0.084,  0.071, 0.048,  0.032,  0.012,  0.012};
inline const std::vector<double> kCenteredB = {0.021, -0.005, 0.000, -0.003, -0.004, -0.004, -0.003,
                                               0.004, 0.014,  0.012, 0.011,  0.012,  0.011,  0.005};
inline const std::vector<double> kCenteredL = {0.021,  -0.005, -0.004, -0.004, -0.004, -0.004, -0.004,
                                               -0.004, -0.004, -0.004, -0.004, -0.003, -0.002, 0.005,
                                               0.023,  0.040,  0.055,  0.057,  0.053,  0.057,  0.058,
                                               0.060,  0.105,  0.119,  0.109,  0.111};

inline const std::vector<Row> kInfoS = {
    {0, 3.00, 0.658, 0.678, 0.020},   {1, 12.72, 0.379, 0.388, 0.008}, {2, 18.66, 0.222, 0.227, 0.005},
    {3, 23.42, 0.151, 0.152, 0.001},  {4, 26.04, 0.119, 0.120, 0.000}, {5, 28.96, 0.105, 0.106, 0.001},
    {6, 34.00, 0.088, 0.089, 0.001},  {7, 39.08, 0.075, 0.076, 0.001}, {8, 45.94, 0.063, 0.064, 0.001},
    {9, 56.82, 0.055, 0.055, 0.000},  {10, 71.30, 0.041, 0.040, -0.001}, {11, 78.82, 0.035, 0.034, -0.001},
};

inline const std::vector<Row> kInfoB = {
    {0, 2.26, 0.785, 0.810, 0.026},   {1, 11.24, 0.566, 0.577, 0.011}, {2, 18.78, 0.376, 0.382, 0.006},
    {3, 23.90, 0.278, 0.282, 0.004},  {4, 26.44, 0.223, 0.227, 0.004}, {5, 32.88, 0.182, 0.185, 0.004},
    {6, 38.28, 0.154, 0.159, 0.005},  {7, 48.88, 0.127, 0.134, 0.007}, {8, 60.40, 0.104, 0.112, 0.008},
    {9, 72.38, 0.085, 0.094, 0.009},  {10, 81.28, 0.061, 0.069, 0.009}, {11, 84.20, 0.054, 0.062, 0.009},
};

inline const std::vector<Row> kInfoL = {
    {0, 2.12, 0.898, 0.919, 0.022},   {1, 6.86, 0.835, 0.856, 0.021},  {2, 11.56, 0.782, 0.800, 0.018},
    {3, 15.60, 0.736, 0.752, 0.015},  {4, 19.38, 0.703, 0.715, 0.013}, {5, 20.66, 0.661, 0.672, 0.011},
    {6, 23.50, 0.621, 0.630, 0.009},  {7, 26.16, 0.579, 0.586, 0.007}, {8, 28.94, 0.532, 0.538, 0.007},
    {9, 32.38, 0.484, 0.490, 0.006},  {10, 35.86, 0.437, 0.443, 0.006}, {11, 39.80, 0.392, 0.399, 0.006},
    {12, 42.48, 0.351, 0.358, 0.007}, {13, 45.24, 0.315, 0.325, 0.009}, {14, 46.68, 0.286, 0.297, 0.011},
    {15, 47.48, 0.259, 0.272, 0.013}, {16, 49.68, 0.235, 0.251, 0.016}, {17, 52.76, 0.216, 0.234, 0.018},
    {18, 59.28, 0.200, 0.220, 0.019}, {19, 65.46, 0.186, 0.208, 0.021}, {20, 74.48, 0.171, 0.196, 0.025},
    {21, 82.24, 0.158, 0.184, 0.026}, {22, 84.88, 0.150, 0.177, 0.027}, {23, 85.52, 0.143, 0.174, 0.031},
};

inline vitdiag::MetricSeries centered_series(const std::vector<double>& v) {
  auto s = vitdiag::MetricSeries::named("centered_similarity");
  for (std::size_t i = 0; i < v.size(); ++i) s.push(static_cast<int>(i) - 2, v[i]);
  return s;
}

inline vitdiag::MetricSeries block_series(const std::vector<double>& v) {
  auto s = vitdiag::MetricSeries::named("centered_similarity");
  for (std::size_t i = 2; i < v.size(); ++i) s.push(static_cast<int>(i) - 2, v[i]);
  return s;
}

/// Points with accuracy as a fraction and derived columns recomputed.
inline std::vector<vitdiag::InfoPlanePoint> points(const std::vector<Row>& rows, double acc_scale = 0.01) {
  std::vector<vitdiag::InfoPlanePoint> out;
  for (const auto& r : rows) {
    vitdiag::InfoPlanePoint p;
    p.layer = r.layer;
    p.probe_acc = r.acc_pct * acc_scale;
    p.infox_self = r.infox_self;
    p.infox_all = r.infox_all;
    out.push_back(p);
  }
  vitdiag::fill_derived(out);
  return out;
}

inline std::vector<double> printed_scrambling(const std::vector<Row>& rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.scrambling);
  return v;
}

}  // namespace fixtures
