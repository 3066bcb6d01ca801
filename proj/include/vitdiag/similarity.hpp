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

// Token similarity geometry: raw and mean-centered pairwise cosine
// similarity, percentile bootstrap, and positional-encoding dominance.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vitdiag/series.hpp"
#include "vitdiag/tensor.hpp"

namespace vitdiag {

inline constexpr double kNormFloor = 1e-12;

/// Mean cosine similarity over all unordered pairs of rows, skipping rows
/// whose norm is below `norm_floor`. Empty when fewer than two rows remain.
/// Uses |sum u|^2 - sum |u|^2 = 2 sum_{i<j} u_i.u_j, so cost is O(nD).
template <typename Derived>
std::optional<double> mean_pairwise_cosine(const Eigen::MatrixBase<Derived>& rows, double norm_floor = kNormFloor) {
  using Scalar = double;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(rows.cols());
  Scalar self = 0;
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto r = rows.row(i).template cast<Scalar>().eval();
    const Scalar n = r.norm();
    if (!(n >= norm_floor)) continue;
    const auto u = (r / n).eval();
    sum += u;
    self += u.squaredNorm();
    ++kept;
  }
  if (kept < 2) return std::nullopt;
  const Scalar pairs = static_cast<Scalar>(kept) * static_cast<Scalar>(kept - 1);
  return std::clamp((sum.squaredNorm() - self) / pairs, Scalar(-1), Scalar(1));
}

/// As mean_pairwise_cosine after subtracting the mean row.
template <typename Derived>
std::optional<double> mean_pairwise_cosine_centered(const Eigen::MatrixBase<Derived>& rows,
                                                    double norm_floor = kNormFloor) {
  const Eigen::MatrixXd x = rows.template cast<double>();
  const Eigen::RowVectorXd mu = x.colwise().mean();
  return mean_pairwise_cosine(x.rowwise() - mu, norm_floor);
}

struct SimilarityStats {
  double mean = 0.0;
  std::vector<double> per_image;       // one value per retained image
  std::vector<int> excluded_images;    // degenerate images (fewer than two usable tokens)
};

/// Average pairwise cosine similarity of patch tokens per image, then over
/// images. [CLS] is excluded unless include_cls. Throws DegenerateInputError
/// when no image has two usable tokens.
SimilarityStats raw_similarity(const LayerTokens& tokens, bool include_cls = false);

/// Same contract after per-image mean-token subtraction.
SimilarityStats centered_similarity(const LayerTokens& tokens, bool include_cls = false);

struct BootstrapCI {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

/// Percentile bootstrap of the mean. Deterministic for a given seed; the
/// interval is widened to contain the point estimate if resampling skews it.
BootstrapCI bootstrap_ci(std::span<const double> values, int n_boot = 2000, double level = 0.95,
                         std::uint64_t seed = 0);

/// Mean per-position L2 norm of the positional encodings (excluding the
/// [CLS] slot when present) over the mean L2 norm of z0 patch tokens.
double pe_dominance(const TensorF& pe, const LayerTokens& z0);

}  // namespace vitdiag
