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

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace vitdiag {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;

/// Dense C-contiguous n-d array.
template <typename Scalar>
struct Tensor {
  using value_type = Scalar;

  std::vector<std::int64_t> shape;
  std::vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)), data(element_count(shape)) {}
  Tensor(std::vector<std::int64_t> s, std::vector<Scalar> d) : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t element_count(const std::vector<std::int64_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t rank() const { return shape.size(); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }

  bool operator==(const Tensor&) const = default;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorI = Tensor<std::int64_t>;
using AnyTensor = std::variant<TensorF, TensorD, TensorI>;

std::string dtype_name(const AnyTensor& t);

/// Tokens of one layer: shape (B, P+1, D), token 0 is [CLS].
/// layer -2 is z0 (pre-PE), -1 is z0 + PE, 0..L-1 are block outputs.
struct LayerTokens {
  int layer = 0;
  TensorF data;

  Eigen::Index images() const { return data.dim(0); }
  Eigen::Index tokens() const { return data.dim(1); }
  Eigen::Index width() const { return data.dim(2); }

  /// (P+1) x D view of one image.
  Eigen::Map<const RowMatrixXf> image(Eigen::Index b) const {
    const auto stride = tokens() * width();
    return {data.data.data() + b * stride, tokens(), width()};
  }

  /// B x D matrix of [CLS] features.
  Eigen::MatrixXd cls_features() const {
    Eigen::MatrixXd out(images(), width());
    for (Eigen::Index b = 0; b < images(); ++b) out.row(b) = image(b).row(0).cast<double>();
    return out;
  }
};

/// Attention probabilities of one block: shape (B, H, N, N).
struct AttentionStack {
  int layer = 0;
  TensorF data;

  Eigen::Index images() const { return data.dim(0); }
  Eigen::Index heads() const { return data.dim(1); }
  Eigen::Index tokens() const { return data.dim(2); }

  Eigen::Map<const RowMatrixXf> head(Eigen::Index b, Eigen::Index h) const {
    const auto n = tokens();
    return {data.data.data() + (b * heads() + h) * n * n, n, n};
  }
};

using Labels = std::vector<int>;

/// splitmix64 finalizer, used to derive independent per-job seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(base ^ mix_seed(a)) ^ mix_seed(b + 0x5bd1e995ULL));
}

}  // namespace vitdiag
