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

#include "vitdiag/attention_graph.hpp"

#include <algorithm>
#include <cmath>

#include "vitdiag/errors.hpp"

namespace vitdiag {

AttentionChain chain_from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& p) {
  if (p.rows() != p.cols() || p.rows() == 0) throw DegenerateInputError("attention chain must be square and non-empty");
  AttentionChain c;
  c.P = p;
  for (Eigen::Index i = 0; i < c.P.rows(); ++i) {
    const double s = c.P.row(i).sum();
    if (!(s > 0.0)) throw DegenerateInputError("attention chain row " + std::to_string(i) + " sums to zero");
    c.P.row(i) /= s;
  }
  return c;
}

AttentionChain build_chain(const AttentionStack& attn) {
  const Eigen::Index n = attn.tokens();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index b = 0; b < attn.images(); ++b)
    for (Eigen::Index h = 0; h < attn.heads(); ++h) sum += attn.head(b, h).cast<double>();
  return chain_from_matrix(sum / static_cast<double>(attn.images() * attn.heads()));
}

AttentionChain build_chain(const AttentionStack& attn, Eigen::Index image) {
  const Eigen::Index n = attn.tokens();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index h = 0; h < attn.heads(); ++h) sum += attn.head(image, h).cast<double>();
  return chain_from_matrix(sum / static_cast<double>(attn.heads()));
}

namespace {

struct PowerResult {
  Eigen::VectorXd v;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

PowerResult power_iterate(const Eigen::MatrixXd& p, double tol, int max_iters) {
  const Eigen::Index n = p.rows();
  const Eigen::MatrixXd pt = p.transpose();
  PowerResult r;
  r.v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd next = pt * r.v;
    next /= next.lpNorm<1>();
    r.residual = (next - r.v).lpNorm<1>();
    r.v.swap(next);
    r.iterations = it;
    if (r.residual < tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace

void stationary_distribution(AttentionChain& chain, double tol, int max_iters) {
  auto r = power_iterate(chain.P, tol, max_iters);
  chain.smoothing_eps = 0.0;
  if (!r.converged) {
    constexpr double eps = 1e-6;
    const Eigen::Index n = chain.P.rows();
    const Eigen::MatrixXd smoothed =
        ((1.0 - eps) * chain.P).array() + eps / static_cast<double>(n);
    r = power_iterate(smoothed, tol, max_iters);
    if (!r.converged) throw ConvergenceError("stationary distribution did not converge after smoothing", r.residual);
    chain.smoothing_eps = eps;
  }
  chain.pi = r.v.cwiseMax(0.0);
  chain.pi /= chain.pi.sum();
  chain.converged = r.converged;
  chain.iterations = r.iterations;
}

AciResult aci(const AttentionChain& chain) {
  if (chain.pi.size() != chain.P.rows()) throw DegenerateInputError("aci: stationary distribution not computed");
  const Eigen::Index n = chain.P.rows();
  Eigen::VectorXd pi = chain.pi.cwiseMax(kPiClamp);
  pi /= pi.sum();
  const Eigen::VectorXd root = pi.cwiseSqrt();
  const Eigen::MatrixXd s = root.asDiagonal() * chain.P * root.cwiseInverse().asDiagonal();

  AciResult r;
  if (n < 2) {
    r.raw = r.value = 1.0;
    return r;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(s);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite())
    throw NumericalError("aci: singular value decomposition failed");
  r.sigma2 = svd.singularValues()(1);
  r.raw = 1.0 - r.sigma2;
  r.value = std::clamp(r.raw, 0.0, 1.0);
  return r;
}

ChainMetrics chain_metrics(const AttentionStack& attn, bool per_image, double tol, int max_iters) {
  ChainMetrics m;
  auto eval = [&](AttentionChain c, double weight) {
    stationary_distribution(c, tol, max_iters);
    const auto a = aci(c);
    m.aci += weight * a.value;
    m.aci_raw += weight * a.raw;
    m.ccc += weight * cls_centrality(c);
    m.smoothed = m.smoothed || c.smoothing_eps > 0.0;
    m.iterations = std::max(m.iterations, c.iterations);
  };
  if (!per_image) {
    eval(build_chain(attn), 1.0);
  } else {
    const double w = 1.0 / static_cast<double>(attn.images());
    for (Eigen::Index b = 0; b < attn.images(); ++b) eval(build_chain(attn, b), w);
  }
  return m;
}

}  // namespace vitdiag
