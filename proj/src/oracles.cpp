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

#include "vitdiag/oracles.hpp"

#include <cmath>
#include <complex>
#include <limits>

#include "vitdiag/errors.hpp"
#include "vitdiag/neural_collapse.hpp"

namespace vitdiag {
namespace {

Eigen::MatrixXd solve_self(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double lambda) {
  const Eigen::Index d = gram.rows();
  const Eigen::MatrixXd a = gram + lambda * Eigen::MatrixXd::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const auto& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), std::numeric_limits<double>::min())))
    throw SingularError("least squares: normal matrix is singular; use a positive ridge lambda");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose() * cross;
}

}  // namespace

LeastSquaresFit oracle_least_squares_self(const LayerTokens& tokens, const LayerTokens& z0,
                                          const std::vector<int>& images, double ridge_lambda) {
  if (images.empty()) throw DegenerateInputError("least squares: no images");
  const Eigen::Index d = tokens.width();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, d);
  for (int b : images) {
    const Eigen::MatrixXd t = patch_block(tokens, b);
    gram.noalias() += t.transpose() * t;
    cross.noalias() += t.transpose() * patch_block(z0, b);
  }
  LeastSquaresFit fit;
  fit.params.kind = DecoderKind::self_only;
  fit.params.F = solve_self(gram, cross, ridge_lambda).transpose();
  fit.mse = decoder_mse(fit.params, tokens, z0, images);
  fit.null_mse = null_mse(z0, images);
  return fit;
}

LeastSquaresFit oracle_least_squares_all(const LayerTokens& tokens, const LayerTokens& z0,
                                         const std::vector<int>& images, double ridge_lambda, int max_rounds) {
  LeastSquaresFit best = oracle_least_squares_self(tokens, z0, images, ridge_lambda);
  const Eigen::Index p = tokens.tokens() - 1;
  const Eigen::Index d = tokens.width();
  best.params.kind = DecoderKind::all_to_all;
  best.params.M = Eigen::MatrixXd::Identity(p, p);

  std::vector<Eigen::MatrixXd> ts, zs;
  for (int b : images) {
    ts.push_back(patch_block(tokens, b));
    zs.push_back(patch_block(z0, b));
  }

  DecoderParams cur = best.params;
  for (int round = 0; round < max_rounds; ++round) {
    // M-step: M = (sum Z Y^T)(sum Y Y^T)^+ with Y = T F^T.
    Eigen::MatrixXd zy = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd yy = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const Eigen::MatrixXd y = ts[i] * cur.F.transpose();
      zy.noalias() += zs[i] * y.transpose();
      yy.noalias() += y * y.transpose();
    }
    cur.M = zy * symmetric_pinv(yy, 1e-12);

    // F-step: vec-free normal equations for F^T given M.
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d, d);
    const Eigen::MatrixXd mtm = cur.M->transpose() * (*cur.M);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      lhs.noalias() += ts[i].transpose() * mtm * ts[i];
      rhs.noalias() += ts[i].transpose() * cur.M->transpose() * zs[i];
    }
    lhs += ridge_lambda * Eigen::MatrixXd::Identity(d, d);
    cur.F = (symmetric_pinv(lhs, 1e-12) * rhs).transpose();

    const double mse = decoder_mse(cur, tokens, z0, images);
    if (!(mse < best.mse)) break;
    const double gain = best.mse - mse;
    best.params = cur;
    best.mse = mse;
    if (gain <= 1e-12 * best.null_mse) break;
  }
  return best;
}

Eigen::VectorXd oracle_eigen_stationary(const Eigen::Ref<const Eigen::MatrixXd>& p) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(p.transpose());
  if (es.info() != Eigen::Success) throw NumericalError("eigen oracle: decomposition failed");
  const auto& ev = es.eigenvalues();
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < ev.size(); ++i)
    if (std::abs(ev(i) - 1.0) < std::abs(ev(k) - 1.0)) k = i;
  if (std::abs(ev(k).imag()) > 1e-9) throw NumericalError("eigen oracle: dominant eigenvalue is complex");
  const Eigen::VectorXcd vec = es.eigenvectors().col(k);
  if (vec.imag().cwiseAbs().maxCoeff() > 1e-9 * vec.cwiseAbs().maxCoeff())
    throw NumericalError("eigen oracle: dominant eigenvector is complex");
  Eigen::VectorXd pi = vec.real();
  pi /= pi.sum();
  return pi;
}

double oracle_sigma2(const Eigen::Ref<const Eigen::MatrixXd>& p, const Eigen::Ref<const Eigen::VectorXd>& pi_in) {
  Eigen::VectorXd pi = pi_in.cwiseMax(1e-12);
  pi /= pi.sum();
  Eigen::MatrixXd s(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) s(i, j) = std::sqrt(pi(i)) * p(i, j) / std::sqrt(pi(j));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
  return svd.singularValues()(1);
}

std::optional<double> oracle_pairwise_cosine(const Eigen::Ref<const Eigen::MatrixXd>& rows_in, bool center) {
  Eigen::MatrixXd rows = rows_in;
  if (center) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) mu += rows.row(i);
    mu /= static_cast<double>(rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) -= mu;
  }
  double sum = 0.0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (Eigen::Index k = 0; k < rows.cols(); ++k) {
        dot += rows(i, k) * rows(j, k);
        ni += rows(i, k) * rows(i, k);
        nj += rows(j, k) * rows(j, k);
      }
      ni = std::sqrt(ni);
      nj = std::sqrt(nj);
      if (ni < 1e-12 || nj < 1e-12) continue;
      sum += dot / (ni * nj);
      ++pairs;
    }
  }
  if (pairs == 0) return std::nullopt;
  return sum / static_cast<double>(pairs);
}

}  // namespace vitdiag
