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

// Small builders shared by the unit tests.

#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vitdiag/capture.hpp"
#include "vitdiag/tensor.hpp"

namespace helpers {

/// LayerTokens from one (P+1) x D matrix per image.
inline vitdiag::LayerTokens tokens_from(const std::vector<Eigen::MatrixXd>& images, int layer = 0) {
  vitdiag::LayerTokens t;
  t.layer = layer;
  const auto n = images.front().rows();
  const auto d = images.front().cols();
  t.data = vitdiag::TensorF({static_cast<std::int64_t>(images.size()), n, d});
  std::size_t k = 0;
  for (const auto& m : images)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) t.data.data[k++] = static_cast<float>(m(i, j));
  return t;
}

inline vitdiag::AttentionStack attention_from(const std::vector<std::vector<Eigen::MatrixXd>>& per_image_heads) {
  vitdiag::AttentionStack a;
  const auto b = static_cast<std::int64_t>(per_image_heads.size());
  const auto h = static_cast<std::int64_t>(per_image_heads.front().size());
  const auto n = per_image_heads.front().front().rows();
  a.data = vitdiag::TensorF({b, h, n, n});
  std::size_t k = 0;
  for (const auto& heads : per_image_heads)
    for (const auto& m : heads)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a.data.data[k++] = static_cast<float>(m(i, j));
  return a;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

inline Eigen::MatrixXd random_stochastic(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

/// Fresh path under the system temp directory.
inline std::filesystem::path temp_path(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / ("vitdiag_test_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

/// Capture with L blocks, B images, P patches, D dims and C classes; every
/// stream present, tokens Gaussian, attention row-softmax of Gaussians.
inline void minimal_streams(int L, int B, int P, int D, int C, int H, vitdiag::CaptureManifest& m,
                            vitdiag::CaptureStreams& s, std::uint64_t seed = 1) {
  using namespace vitdiag;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  m = CaptureManifest{};
  m.model_id = "test";
  m.num_blocks = L;
  m.embed_dim = D;
  m.num_heads = H;
  m.num_patches = P;
  m.num_classes = C;
  m.present_streams = {Stream::tokens, Stream::attention, Stream::labels, Stream::pe, Stream::z0};
  auto tok = [&] {
    TensorF t({B, P + 1, D});
    for (auto& v : t.data) v = g(rng);
    return t;
  };
  s = CaptureStreams{};
  for (int l = -1; l < L; ++l) s.tokens[l] = tok();
  s.z0 = tok();
  for (int l = 0; l < L; ++l) {
    TensorF a({B, H, P + 1, P + 1});
    for (std::size_t r = 0; r < a.data.size(); r += static_cast<std::size_t>(P + 1)) {
      float sum = 0.f;
      for (int j = 0; j < P + 1; ++j) sum += a.data[r + static_cast<std::size_t>(j)] = std::exp(g(rng));
      for (int j = 0; j < P + 1; ++j) a.data[r + static_cast<std::size_t>(j)] /= sum;
    }
    s.attention[l] = a;
  }
  TensorI labels({B});
  for (int b = 0; b < B; ++b) labels.data[static_cast<std::size_t>(b)] = b % C;
  s.labels = labels;
  TensorF pe({P + 1, D});
  for (auto& v : pe.data) v = g(rng);
  s.pe = pe;
}

}  // namespace helpers
