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

#include <span>
#include <vector>

namespace vitdiag {

/// Quantile with linear interpolation between order statistics (numpy's
/// default). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double q);

double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);
double mean(std::span<const double> values);

/// 1-based ranks with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> x);

struct SpearmanResult {
  double rho = 0.0;
  int n = 0;
};

/// Spearman rank correlation (Pearson on average ranks). Requires equal
/// lengths >= 3; a constant input raises DegenerateInputError.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

/// (v - min) / (max - min), or 1 - that when `inverted`. A constant series
/// raises DegenerateInputError.
std::vector<double> minmax_normalize(std::span<const double> values, bool inverted = false);

}  // namespace vitdiag
