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

// Independent reference computations: closed-form decoders, an eigensolver
// stationary distribution and brute-force pairwise similarity.

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "vitdiag/decoder.hpp"
#include "vitdiag/tensor.hpp"

namespace vitdiag {

struct LeastSquaresFit {
  DecoderParams params;
  double mse = 0.0;       // on the fit images
  double null_mse = 0.0;  // on the fit images
};

/// Ridge solution F^T = (T^T T + lambda I)^-1 T^T Z pooled over all patches of
/// `images`. lambda = 0 with a singular normal matrix raises SingularError.
LeastSquaresFit oracle_least_squares_self(const LayerTokens& tokens, const LayerTokens& z0,
                                          const std::vector<int>& images, double ridge_lambda = 0.0);

/// Alternating least squares for z_hat = M T F^T, started from M = I and the
/// self-only solution. The best iterate is kept, so the fit never does worse
/// than self-only on `images`.
LeastSquaresFit oracle_least_squares_all(const LayerTokens& tokens, const LayerTokens& z0,
                                         const std::vector<int>& images, double ridge_lambda = 0.0,
                                         int max_rounds = 50);

/// Dominant left eigenvector of a row-stochastic matrix as a probability vector.
Eigen::VectorXd oracle_eigen_stationary(const Eigen::Ref<const Eigen::MatrixXd>& p);

/// Second-largest singular value of diag(sqrt pi) P diag(1/sqrt pi) via Jacobi SVD.
double oracle_sigma2(const Eigen::Ref<const Eigen::MatrixXd>& p, const Eigen::Ref<const Eigen::VectorXd>& pi);

/// Mean cosine over all unordered row pairs by explicit double loop. Pairs with
/// a zero-norm row (below 1e-12) are skipped; nullopt if none remain.
std::optional<double> oracle_pairwise_cosine(const Eigen::Ref<const Eigen::MatrixXd>& rows, bool center);

}  // namespace vitdiag
