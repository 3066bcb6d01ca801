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

#include "vitdiag/neural_collapse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vitdiag/errors.hpp"

namespace vitdiag {

ClassStatistics class_statistics(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                                 int num_classes, Eigen::Index chunk_rows) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw DegenerateInputError("class_statistics: label count does not match feature rows");
  if (num_classes < 1) throw DegenerateInputError("class_statistics: need at least one class");

  ClassStatistics s;
  s.counts = Eigen::VectorXi::Zero(num_classes);
  s.class_means = Eigen::MatrixXd::Zero(num_classes, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= num_classes)
      throw ValidationError("class_statistics: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    s.counts(y) += 1;
    s.class_means.row(y) += features.row(i);
  }
  std::vector<int> missing;
  for (int c = 0; c < num_classes; ++c)
    if (s.counts(c) == 0) missing.push_back(c);
  if (!missing.empty()) throw MissingClassError(missing);
  for (int c = 0; c < num_classes; ++c) s.class_means.row(c) /= static_cast<double>(s.counts(c));

  s.global_mean = features.colwise().mean().transpose();
  s.feature_scale = features.rowwise().squaredNorm().mean();

  const Eigen::Index step = chunk_rows > 0 ? chunk_rows : n;
  s.within = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index start = 0; start < n; start += step) {
    const Eigen::Index len = std::min(step, n - start);
    Eigen::MatrixXd centered = features.middleRows(start, len);
    for (Eigen::Index i = 0; i < len; ++i)
      centered.row(i) -= s.class_means.row(labels[static_cast<std::size_t>(start + i)]);
    s.within.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  }
  s.within = s.within.selfadjointView<Eigen::Lower>();
  s.within /= static_cast<double>(n);

  const Eigen::MatrixXd mc = s.centered_means();
  s.between = mc.transpose() * mc / static_cast<double>(num_classes);
  return s;
}

double nc1(const ClassStatistics& s) {
  const double tr = s.between.trace();
  const double floor = 1e-24 * s.feature_scale + std::numeric_limits<double>::min();
  if (!(tr > floor)) throw DegenerateInputError("nc1: between-class scatter is zero (all class means coincide)");
  if (s.counts.minCoeff() < 2) throw DegenerateInputError("nc1: every class needs at least two samples");
  return (s.within * symmetric_pinv(s.between)).trace() / static_cast<double>(s.num_classes());
}

double nc2(const ClassStatistics& s) {
  const Eigen::Index c = s.num_classes();
  if (c < 2) throw DegenerateInputError("nc2: need at least two classes");
  Eigen::MatrixXd m = s.centered_means();
  const double floor = 1e-12 * std::sqrt(s.feature_scale) + std::numeric_limits<double>::min();
  for (Eigen::Index k = 0; k < c; ++k) {
    const double norm = m.row(k).norm();
    if (!(norm > floor))
      throw DegenerateInputError("nc2: centered mean of class " + std::to_string(k) + " has zero norm");
    m.row(k) /= norm;
  }
  return (m * m.transpose() - etf_gram(c)).norm();
}

Nc3Result nc3(const ClassStatistics& s, const Eigen::Ref<const Eigen::MatrixXd>& weights) {
  if (weights.rows() != s.num_classes() || weights.cols() != s.class_means.cols())
    throw DegenerateInputError("nc3: classifier must be C x D");
  const Eigen::MatrixXd m = s.centered_means();
  const double floor = 1e-12 * std::sqrt(s.feature_scale) + std::numeric_limits<double>::min();
  Nc3Result r;
  double total = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const double nw = weights.row(k).norm();
    const double nm = m.row(k).norm();
    if (!(nw > std::numeric_limits<double>::min()) || !(nm > floor)) {
      r.excluded_classes.push_back(static_cast<int>(k));
      continue;
    }
    total += weights.row(k).dot(m.row(k)) / (nw * nm);
    ++used;
  }
  if (used == 0) throw DegenerateInputError("nc3: every class has a zero-norm classifier row or mean");
  r.value = std::clamp(total / used, -1.0, 1.0);
  return r;
}

double nc4(const Eigen::Ref<const Eigen::MatrixXd>& features, const Eigen::Ref<const Eigen::MatrixXd>& weights,
           const std::optional<Eigen::VectorXd>& bias, const ClassStatistics& s) {
  const Eigen::Index n = features.rows();
  if (n == 0) throw DegenerateInputError("nc4: no samples");
  if (weights.rows() != s.num_classes() || weights.cols() != features.cols())
    throw DegenerateInputError("nc4: classifier must be C x D");
  Eigen::MatrixXd logits = features * weights.transpose();
  if (bias) logits.rowwise() += bias->transpose();

  Eigen::Index agree = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best_w = 0;
    Eigen::Index best_m = 0;
    double dist_best = (features.row(i) - s.class_means.row(0)).squaredNorm();
    for (Eigen::Index k = 1; k < s.num_classes(); ++k) {
      if (logits(i, k) > logits(i, best_w)) best_w = k;
      const double dist = (features.row(i) - s.class_means.row(k)).squaredNorm();
      if (dist < dist_best) {
        dist_best = dist;
        best_m = k;
      }
    }
    agree += best_w == best_m;
  }
  return static_cast<double>(agree) / static_cast<double>(n);
}

}  // namespace vitdiag
