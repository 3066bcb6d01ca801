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

#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "vitdiag/attention_graph.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/oracles.hpp"

using namespace vitdiag;
using doctest::Approx;

namespace {

AttentionChain solved(const Eigen::MatrixXd& p) {
  auto c = chain_from_matrix(p);
  stationary_distribution(c);
  return c;
}

Eigen::MatrixXd random_symmetric_stochastic(Eigen::Index n, std::mt19937_64& rng) {
  // Symmetric and doubly stochastic: average of permutation matrices.
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < 6; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i, perm[static_cast<std::size_t>(i)]) += 1.0 / 12.0;
      p(perm[static_cast<std::size_t>(i)], i) += 1.0 / 12.0;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("single head and single image give that matrix") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd p = helpers::random_stochastic(5, rng);
  const auto c = build_chain(helpers::attention_from({{p}}));
  CHECK((c.P - p).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("uniform and identity heads average to their midpoint") {
  const Eigen::MatrixXd u = Eigen::MatrixXd::Constant(4, 4, 0.25);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
  const auto c = build_chain(helpers::attention_from({{u, id}}));
  CHECK((c.P - 0.5 * (u + id)).cwiseAbs().maxCoeff() < 1e-7);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(c.P.row(i).sum() == Approx(1.0).epsilon(1e-8));
}

TEST_CASE("three images and two heads match a nested-loop average") {
  std::mt19937_64 rng(2);
  std::vector<std::vector<Eigen::MatrixXd>> stack;
  for (int b = 0; b < 3; ++b) stack.push_back({helpers::random_stochastic(6, rng), helpers::random_stochastic(6, rng)});
  const auto attn = helpers::attention_from(stack);
  const auto c = build_chain(attn);
  for (int i = 0; i < 6; ++i) {
    double row_sum = 0.0;
    std::vector<double> row(6, 0.0);
    for (int j = 0; j < 6; ++j) {
      for (int b = 0; b < 3; ++b)
        for (int h = 0; h < 2; ++h) row[static_cast<std::size_t>(j)] += static_cast<float>(stack[b][h](i, j));
      row_sum += row[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < 6; ++j) CHECK(std::abs(c.P(i, j) - row[static_cast<std::size_t>(j)] / row_sum) < 1e-12);
  }
}

TEST_CASE("a zero row is reported by index") {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  p.row(2).setZero();
  try {
    chain_from_matrix(p);
    FAIL("expected DegenerateInputError");
  } catch (const DegenerateInputError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("stationary distribution of uniform and absorbing chains") {
  const auto u = solved(Eigen::MatrixXd::Constant(4, 4, 0.25));
  for (int i = 0; i < 4; ++i) CHECK(u.pi(i) == Approx(0.25));
  CHECK(u.converged);
  CHECK(u.smoothing_eps == 0.0);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 5);
  a.col(0).setOnes();
  const auto c = solved(a);
  CHECK(c.pi(0) == Approx(1.0));
  CHECK(cls_centrality(c) == Approx(1.0));
  CHECK(c.pi.tail(4).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("power iteration matches the eigendecomposition oracle") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd p = helpers::random_stochastic(5, rng);
    const auto c = solved(p);
    const Eigen::VectorXd ref = oracle_eigen_stationary(p);
    CHECK((c.pi - ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(cls_centrality(c) == Approx(ref(0)).epsilon(1e-8));
    CHECK(c.pi.sum() == Approx(1.0).epsilon(1e-10));
    CHECK((c.P.transpose() * c.pi - c.pi).lpNorm<1>() < 1e-9);
  }
}

TEST_CASE("aci of uniform and identity chains") {
  const auto u = solved(Eigen::MatrixXd::Constant(6, 6, 1.0 / 6.0));
  CHECK(aci(u).value == Approx(1.0));
  const auto id = solved(Eigen::MatrixXd::Identity(6, 6));
  CHECK(aci(id).value == Approx(0.0));
  CHECK(aci(id).raw == Approx(0.0));
}

TEST_CASE("aci of symmetric chains equals one minus the second eigenvalue modulus") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd p = random_symmetric_stochastic(7, rng);
    const auto c = solved(p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
    std::vector<double> mods;
    for (Eigen::Index i = 0; i < 7; ++i) mods.push_back(std::abs(es.eigenvalues()(i)));
    std::sort(mods.rbegin(), mods.rend());
    CHECK(aci(c).raw == Approx(1.0 - mods[1]).epsilon(1e-8));
    CHECK(aci(c).sigma2 == Approx(oracle_sigma2(c.P, c.pi)).epsilon(1e-8));
  }
}

TEST_CASE("cls centrality of a uniform chain with 197 tokens") {
  const auto c = solved(Eigen::MatrixXd::Constant(197, 197, 1.0 / 197.0));
  CHECK(cls_centrality(c) == Approx(1.0 / 197.0).epsilon(1e-12));
  CHECK(cls_centrality(c) == Approx(0.00508).epsilon(1e-3));
}

TEST_CASE("head permutation and token relabeling invariance") {
  std::mt19937_64 rng(5);
  std::vector<Eigen::MatrixXd> heads = {helpers::random_stochastic(6, rng), helpers::random_stochastic(6, rng),
                                        helpers::random_stochastic(6, rng)};
  const auto base = chain_metrics(helpers::attention_from({heads}));
  std::vector<Eigen::MatrixXd> swapped = {heads[2], heads[0], heads[1]};
  const auto perm = chain_metrics(helpers::attention_from({swapped}));
  CHECK(perm.aci == Approx(base.aci).epsilon(1e-9));
  CHECK(perm.ccc == Approx(base.ccc).epsilon(1e-9));

  // Relabel tokens 1..5 by a fixed permutation that keeps token 0.
  Eigen::PermutationMatrix<Eigen::Dynamic> q(6);
  q.indices() << 0, 3, 5, 1, 2, 4;
  const auto c0 = solved(build_chain(helpers::attention_from({heads})).P);
  const Eigen::MatrixXd relabeled = q * c0.P * q.transpose();
  const auto c1 = solved(relabeled);
  CHECK(aci(c1).value == Approx(aci(c0).value).epsilon(1e-9));
  CHECK(cls_centrality(c1) == Approx(cls_centrality(c0)).epsilon(1e-9));
}

TEST_CASE("smoothing changes aci by at most 0.01 on ergodic chains") {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd p = helpers::random_stochastic(8, rng);
    const Eigen::MatrixXd smoothed = ((1.0 - 1e-6) * p).array() + 1e-6 / 8.0;
    CHECK(std::abs(aci(solved(p)).value - aci(solved(smoothed)).value) <= 0.01);
  }
}

TEST_CASE("a periodic chain that never mixes raises ConvergenceError") {
  Eigen::MatrixXd p(3, 3);
  p << 0, 1, 0, 0.5, 0, 0.5, 0, 1, 0;
  auto c = chain_from_matrix(p);
  CHECK_THROWS_AS(stationary_distribution(c, 1e-10, 200), ConvergenceError);
}

TEST_CASE("per-image chains average the per-image metrics") {
  const Eigen::MatrixXd u = Eigen::MatrixXd::Constant(4, 4, 0.25);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
  a.col(0).setOnes();
  const auto attn = helpers::attention_from({{u}, {a}});
  const auto m = chain_metrics(attn, true);
  CHECK(m.ccc == Approx(0.5 * (0.25 + 1.0)));
  CHECK(m.aci == Approx(1.0));
}
