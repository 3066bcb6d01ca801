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
#include "vitdiag/errors.hpp"
#include "vitdiag/neural_collapse.hpp"

using namespace vitdiag;
using doctest::Approx;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  Labels y;
  Eigen::MatrixXd means;
};

Blobs blobs(int c, int d, int per_class, double sigma, std::mt19937_64& rng, double spread = 3.0) {
  Blobs b;
  b.means = helpers::random_matrix(c, d, rng, spread);
  b.x = helpers::random_matrix(c * per_class, d, rng, sigma);
  for (int i = 0; i < c * per_class; ++i) {
    b.y.push_back(i % c);
    b.x.row(i) += b.means.row(i % c);
  }
  return b;
}

// Simplex ETF vertices of C classes in C-1 dimensions, unit norm.
Eigen::MatrixXd etf(int c) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(c, c).array() - 1.0 / c;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeThinU);
  Eigen::MatrixXd u = svd.matrixU().leftCols(c - 1) * svd.singularValues().head(c - 1).asDiagonal();
  return u.rowwise().normalized();
}

}  // namespace

TEST_CASE("two zero-noise classes at +-e1") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, -1, 0, 1, 0, -1, 0;
  const auto s = class_statistics(x, {0, 1, 0, 1}, 2);
  CHECK(s.within.norm() == Approx(0.0));
  CHECK(s.class_means(0, 0) == 1.0);
  CHECK(s.class_means(1, 0) == -1.0);
  CHECK(nc1(s) == Approx(0.0));
  CHECK(nc2(s) == Approx(0.0));
}

TEST_CASE("scatter matches the double-loop covariance") {
  std::mt19937_64 rng(1);
  auto b = blobs(3, 2, 10, 1.0, rng);
  const auto s = class_statistics(b.x, b.y, 3);
  const Eigen::Index n = b.x.rows();
  Eigen::MatrixXd sw = Eigen::MatrixXd::Zero(2, 2), sb = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
  for (Eigen::Index i = 0; i < n; ++i) g += b.x.row(i).transpose() / static_cast<double>(n);
  for (int k = 0; k < 3; ++k) {
    Eigen::VectorXd mk = Eigen::VectorXd::Zero(2);
    int cnt = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (b.y[static_cast<std::size_t>(i)] == k) mk += b.x.row(i).transpose(), ++cnt;
    mk /= cnt;
    for (Eigen::Index i = 0; i < n; ++i)
      if (b.y[static_cast<std::size_t>(i)] == k) {
        const Eigen::VectorXd dv = b.x.row(i).transpose() - mk;
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 2; ++c) sw(r, c) += dv(r) * dv(c) / static_cast<double>(n);
      }
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) sb(r, c) += (mk(r) - g(r)) * (mk(c) - g(c)) / 3.0;
  }
  CHECK((s.within - sw).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((s.between - sb).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(s.counts.sum() == n);
}

TEST_CASE("chunked and unchunked scatter agree") {
  std::mt19937_64 rng(2);
  auto b = blobs(4, 6, 25, 0.7, rng);
  const auto a = class_statistics(b.x, b.y, 4);
  const auto c = class_statistics(b.x, b.y, 4, 7);
  CHECK((a.within - c.within).norm() <= 1e-9 * a.within.norm());
}

TEST_CASE("missing and out-of-range classes") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
  try {
    class_statistics(x, {0, 0, 2}, 4);
    FAIL("expected MissingClassError");
  } catch (const MissingClassError& e) {
    CHECK(e.classes() == std::vector<int>{1, 3});
  }
  CHECK_THROWS_AS(class_statistics(x, {0, 1, 5}, 3), ValidationError);
}

TEST_CASE("nc1 shrinks tenfold when the within-class variance does") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd means = helpers::random_matrix(5, 8, rng, 3.0);
  const Eigen::MatrixXd noise = helpers::random_matrix(500, 8, rng);
  Labels y;
  Eigen::MatrixXd a(500, 8), b(500, 8);
  for (int i = 0; i < 500; ++i) {
    y.push_back(i % 5);
    a.row(i) = means.row(i % 5) + noise.row(i);
    b.row(i) = means.row(i % 5) + noise.row(i) / std::sqrt(10.0);
  }
  const double r = nc1(class_statistics(a, y, 5)) / nc1(class_statistics(b, y, 5));
  CHECK(r == Approx(10.0).epsilon(0.05));
}

TEST_CASE("coincident class means are degenerate") {
  Eigen::MatrixXd x(4, 2);
  x << 1, 1, 1, 1, 1, 1, 1, 1;
  const auto s = class_statistics(x, {0, 1, 0, 1}, 2);
  CHECK_THROWS_AS(nc1(s), DegenerateInputError);
  CHECK_THROWS_AS(nc2(s), DegenerateInputError);
}

TEST_CASE("nc2 is zero at an exact ETF and for any two classes") {
  const Eigen::MatrixXd v = etf(4);  // 4 x 3
  const auto s = class_statistics(v, {0, 1, 2, 3}, 4);
  CHECK(nc2(s) < 1e-8);
  Eigen::MatrixXd two(2, 5);
  two << 1, 2, 3, 4, 5, 0, 1, 0, 1, 0;
  CHECK(nc2(class_statistics(two, {0, 1}, 2)) < 1e-12);
}

TEST_CASE("nc2 matches the Gram difference after rotating one vertex by 0.1 rad") {
  Eigen::MatrixXd v = etf(4);
  const Eigen::Vector3d r1 = v.row(1).transpose(), r2 = v.row(2).transpose();
  const Eigen::Vector3d axis = r1.cross(r2).normalized();
  const Eigen::Vector3d r0 = v.row(0).transpose();
  v.row(0) = (Eigen::AngleAxisd(0.1, axis) * r0).transpose();
  const auto s = class_statistics(v, {0, 1, 2, 3}, 4);
  Eigen::MatrixXd mc = v.rowwise() - v.colwise().mean();
  Eigen::MatrixXd diff(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      diff(i, j) = mc.row(i).dot(mc.row(j)) / (mc.row(i).norm() * mc.row(j).norm()) - (i == j ? 1.0 : -1.0 / 3.0);
  double want = 0;
  for (int i = 0; i < 16; ++i) want += diff.data()[i] * diff.data()[i];
  CHECK(std::abs(nc2(s) - std::sqrt(want)) < 1e-10);
  CHECK(nc2(s) > 0.0);
}

TEST_CASE("nc3 on exact, negated and random weights") {
  std::mt19937_64 rng(4);
  auto b = blobs(5, 8, 4, 0.5, rng);
  const auto s = class_statistics(b.x, b.y, 5);
  const Eigen::MatrixXd mc = s.centered_means();
  CHECK(nc3(s, mc).value == Approx(1.0));
  CHECK(nc3(s, -mc).value == Approx(-1.0));
  const Eigen::MatrixXd w = helpers::random_matrix(5, 8, rng);
  double want = 0;
  for (int k = 0; k < 5; ++k) {
    double dot = 0, nw = 0, nm = 0;
    for (int j = 0; j < 8; ++j) {
      dot += w(k, j) * mc(k, j);
      nw += w(k, j) * w(k, j);
      nm += mc(k, j) * mc(k, j);
    }
    want += dot / std::sqrt(nw * nm) / 5.0;
  }
  CHECK(std::abs(nc3(s, w).value - want) < 1e-12);
}

TEST_CASE("nc3 excludes zero rows and fails when all are excluded") {
  std::mt19937_64 rng(5);
  auto b = blobs(3, 4, 5, 0.5, rng);
  const auto s = class_statistics(b.x, b.y, 3);
  Eigen::MatrixXd w = s.centered_means();
  w.row(1).setZero();
  const auto r = nc3(s, w);
  CHECK(r.value == Approx(1.0));
  CHECK(r.excluded_classes == std::vector<int>{1});
  CHECK_THROWS_AS(nc3(s, Eigen::MatrixXd::Zero(3, 4)), DegenerateInputError);
}

TEST_CASE("nc4 agreement cases") {
  std::mt19937_64 rng(6);
  auto b = blobs(4, 6, 30, 0.1, rng, 5.0);
  const auto s = class_statistics(b.x, b.y, 4);
  // Nearest-mean rule as a linear classifier: w_k = mu_k, b_k = -|mu_k|^2 / 2.
  const Eigen::MatrixXd w = s.class_means;
  Eigen::VectorXd bias(4);
  for (int k = 0; k < 4; ++k) bias(k) = -0.5 * s.class_means.row(k).squaredNorm();
  CHECK(nc4(b.x, w, bias, s) == 1.0);

  // Means of a cyclically shifted class assignment disagree on every sample.
  Eigen::MatrixXd ws(4, 6);
  Eigen::VectorXd bs(4);
  for (int k = 0; k < 4; ++k) {
    ws.row(k) = s.class_means.row((k + 1) % 4);
    bs(k) = bias((k + 1) % 4);
  }
  CHECK(nc4(b.x, ws, bs, s) == 0.0);

  const Eigen::MatrixXd one = b.x.topRows(1);
  CHECK(nc4(one, w, bias, s) == 1.0);
}

TEST_CASE("nc4 breaks ties toward the lower class index") {
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 0.0;
  Eigen::MatrixXd feats(2, 1);
  feats << -1, 1;
  const auto s = class_statistics(feats, {0, 1}, 2);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, 1);
  CHECK(nc4(x, w, std::nullopt, s) == 1.0);
}

TEST_CASE("rotating features and classifier leaves all four metrics unchanged") {
  std::mt19937_64 rng(7);
  auto b = blobs(4, 5, 20, 0.8, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(helpers::random_matrix(5, 5, rng));
  const Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd w = helpers::random_matrix(4, 5, rng);
  const Eigen::VectorXd bias = helpers::random_matrix(4, 1, rng);
  const auto s0 = class_statistics(b.x, b.y, 4);
  const Eigen::MatrixXd xr = b.x * q.transpose();
  const Eigen::MatrixXd wr = w * q.transpose();
  const auto s1 = class_statistics(xr, b.y, 4);
  CHECK(nc1(s1) == Approx(nc1(s0)).epsilon(1e-8));
  CHECK(nc2(s1) == Approx(nc2(s0)).epsilon(1e-8));
  CHECK(nc3(s1, wr).value == Approx(nc3(s0, w).value).epsilon(1e-8));
  CHECK(nc4(xr, wr, bias, s1) == nc4(b.x, w, bias, s0));
}

TEST_CASE("collapse limit: ETF means, small noise, classifier = means") {
  const int c = 6;
  const Eigen::MatrixXd v = etf(c);
  std::mt19937_64 rng(8);
  double prev1 = 1e9, prev2 = 1e9;
  for (double sigma : {0.3, 0.1, 0.01, 0.0}) {
    Eigen::MatrixXd x = helpers::random_matrix(c * 50, c - 1, rng, sigma);
    Labels y;
    for (int i = 0; i < c * 50; ++i) {
      y.push_back(i % c);
      x.row(i) += v.row(i % c);
    }
    const auto s = class_statistics(x, y, c);
    const double a = nc1(s), b = nc2(s);
    CHECK(a <= prev1);
    CHECK(b <= prev2 + 1e-12);
    prev1 = a;
    prev2 = b;
    CHECK(nc3(s, s.centered_means()).value == Approx(1.0));
    CHECK(nc4(x, s.class_means, std::nullopt, s) >= 0.0);
  }
  CHECK(prev1 < 1e-20);
  CHECK(prev2 < 1e-8);
}
