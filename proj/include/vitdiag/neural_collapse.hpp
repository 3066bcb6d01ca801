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

// Neural Collapse geometry of one layer's features.
//
//   NC1  trace(S_W pinv(S_B)) / C
//   NC2  || G - G_etf ||_F  on unit-normalized centered class means
//   NC3  mean cosine between classifier rows and centered class means
//   NC4  agreement rate of the classifier with nearest-class-mean decisions

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "vitdiag/tensor.hpp"

namespace vitdiag {

struct ClassStatistics {
  Eigen::VectorXd global_mean;
  Eigen::MatrixXd class_means;  // C x D
  Eigen::MatrixXd within;       // D x D, about class means, normalized by B
  Eigen::MatrixXd between;      // D x D, class means about the global mean, normalized by C
  Eigen::VectorXi counts;
  double feature_scale = 0.0;   // mean squared feature norm; sets degeneracy tolerances

  Eigen::Index num_classes() const { return class_means.rows(); }

  Eigen::MatrixXd centered_means() const { return class_means.rowwise() - global_mean.transpose(); }
};

/// Scatter decomposition about the global mean. `chunk_rows` > 0 accumulates
/// the within-class scatter over row blocks of that size.
ClassStatistics class_statistics(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                                 int num_classes, Eigen::Index chunk_rows = 0);

/// Pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// rcond * max eigenvalue are treated as zero.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> symmetric_pinv(
    const Eigen::MatrixBase<Derived>& a, typename Derived::Scalar rcond = 1e-10) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.derived());
  const auto& ev = es.eigenvalues();
  const Scalar cutoff = rcond * ev.cwiseAbs().maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cutoff ? Scalar(1) / ev(i) : Scalar(0);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Gram matrix of the simplex equiangular tight frame with C vertices.
inline Eigen::MatrixXd etf_gram(Eigen::Index num_classes) {
  const double off = -1.0 / static_cast<double>(num_classes - 1);
  Eigen::MatrixXd g = Eigen::MatrixXd::Constant(num_classes, num_classes, off);
  g.diagonal().setOnes();
  return g;
}

double nc1(const ClassStatistics& stats);
double nc2(const ClassStatistics& stats);

struct Nc3Result {
  double value = 0.0;
  std::vector<int> excluded_classes;  // zero-norm classifier row or class mean
};

Nc3Result nc3(const ClassStatistics& stats, const Eigen::Ref<const Eigen::MatrixXd>& weights);

/// Fraction of samples where argmax(W x + b) matches the nearest class mean.
/// Ties go to the lower class index on both sides.
double nc4(const Eigen::Ref<const Eigen::MatrixXd>& features, const Eigen::Ref<const Eigen::MatrixXd>& weights,
           const std::optional<Eigen::VectorXd>& bias, const ClassStatistics& stats);

struct NCMetrics {
  double nc1 = 0.0;
  double nc2 = 0.0;
  double nc3 = 0.0;
  double nc4 = 0.0;
};

}  // namespace vitdiag
