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

#include "vitdiag/similarity.hpp"

#include <random>

#include "vitdiag/errors.hpp"
#include "vitdiag/stats.hpp"

namespace vitdiag {
namespace {

template <typename PerImage>
SimilarityStats aggregate(const LayerTokens& tokens, bool include_cls, PerImage&& per_image, const char* what) {
  SimilarityStats out;
  const Eigen::Index first = include_cls ? 0 : 1;
  const Eigen::Index count = tokens.tokens() - first;
  for (Eigen::Index b = 0; b < tokens.images(); ++b) {
    const auto img = tokens.image(b).middleRows(first, count);
    if (auto v = per_image(img)) {
      out.per_image.push_back(*v);
    } else {
      out.excluded_images.push_back(static_cast<int>(b));
    }
  }
  if (out.per_image.empty())
    throw DegenerateInputError(std::string(what) + ": no image has two tokens with non-zero norm (layer " +
                               std::to_string(tokens.layer) + ")");
  out.mean = mean(out.per_image);
  return out;
}

}  // namespace

SimilarityStats raw_similarity(const LayerTokens& tokens, bool include_cls) {
  return aggregate(
      tokens, include_cls, [](const auto& img) { return mean_pairwise_cosine(img); }, "raw_similarity");
}

SimilarityStats centered_similarity(const LayerTokens& tokens, bool include_cls) {
  return aggregate(
      tokens, include_cls, [](const auto& img) { return mean_pairwise_cosine_centered(img); },
      "centered_similarity");
}

BootstrapCI bootstrap_ci(std::span<const double> values, int n_boot, double level, std::uint64_t seed) {
  if (values.empty()) throw DegenerateInputError("bootstrap_ci: empty input");
  if (n_boot < 1) throw DegenerateInputError("bootstrap_ci: n_boot must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw DegenerateInputError("bootstrap_ci: level must be in (0, 1)");

  const std::size_t n = values.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> means(static_cast<std::size_t>(n_boot));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[pick(rng)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());

  BootstrapCI ci;
  ci.mean = mean(values);
  const double alpha = 1.0 - level;
  ci.ci_low = std::min(quantile_sorted(means, alpha / 2.0), ci.mean);
  ci.ci_high = std::max(quantile_sorted(means, 1.0 - alpha / 2.0), ci.mean);
  return ci;
}

double pe_dominance(const TensorF& pe, const LayerTokens& z0) {
  if (pe.rank() != 2 || pe.dim(1) != z0.width())
    throw DegenerateInputError("pe_dominance: positional encodings must be (P+1, D) or (P, D)");
  const Eigen::Index patches = z0.tokens() - 1;
  const Eigen::Map<const RowMatrixXf> pos(pe.data.data(), pe.dim(0), pe.dim(1));
  const Eigen::Index skip = pos.rows() == patches + 1 ? 1 : 0;
  if (pos.rows() - skip != patches)
    throw DegenerateInputError("pe_dominance: positional encoding rows do not match patch count");

  const double pe_norm = pos.bottomRows(patches).cast<double>().rowwise().norm().mean();

  double patch_norm = 0.0;
  for (Eigen::Index b = 0; b < z0.images(); ++b)
    patch_norm += z0.image(b).bottomRows(patches).cast<double>().rowwise().norm().sum();
  patch_norm /= static_cast<double>(z0.images() * patches);
  if (!(patch_norm > 0.0)) throw DegenerateInputError("pe_dominance: mean z0 patch norm is zero");
  return pe_norm / patch_norm;
}

}  // namespace vitdiag
