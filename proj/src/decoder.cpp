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

#include "vitdiag/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vitdiag/detail/adam.hpp"
#include "vitdiag/errors.hpp"

namespace vitdiag {

std::string to_string(DecoderKind kind) { return kind == DecoderKind::self_only ? "self_only" : "all_to_all"; }

DecoderKind decoder_kind_from_string(const std::string& s) {
  if (s == "self_only") return DecoderKind::self_only;
  if (s == "all_to_all") return DecoderKind::all_to_all;
  throw ConfigError("unknown decoder kind '" + s + "'");
}

Eigen::MatrixXd DecoderParams::apply(const Eigen::Ref<const Eigen::MatrixXd>& patches) const {
  Eigen::MatrixXd y = patches * F.transpose();
  if (M) y = (*M) * y;
  if (bias) y.rowwise() += bias->transpose();
  return y;
}

Eigen::MatrixXd patch_block(const LayerTokens& tokens, Eigen::Index b) {
  return tokens.image(b).bottomRows(tokens.tokens() - 1).cast<double>();
}

double null_mse(const LayerTokens& z0, const std::vector<int>& images) {
  if (images.empty()) throw DegenerateInputError("null_mse: no images");
  double s = 0.0;
  for (int b : images) s += patch_block(z0, b).squaredNorm();
  return s / static_cast<double>(images.size() * static_cast<std::size_t>((z0.tokens() - 1) * z0.width()));
}

double decoder_mse(const DecoderParams& params, const LayerTokens& tokens, const LayerTokens& z0,
                   const std::vector<int>& images) {
  if (images.empty()) throw DegenerateInputError("decoder_mse: no images");
  double s = 0.0;
  for (int b : images) s += (params.apply(patch_block(tokens, b)) - patch_block(z0, b)).squaredNorm();
  return s / static_cast<double>(images.size() * static_cast<std::size_t>((z0.tokens() - 1) * z0.width()));
}

namespace {

void check_pair(const LayerTokens& tokens, const LayerTokens& z0) {
  if (tokens.images() != z0.images() || tokens.tokens() != z0.tokens() || tokens.width() != z0.width())
    throw ShapeError("z0", "decoder inputs and targets must share (B, P+1, D)");
  if (tokens.tokens() < 2) throw ShapeError("tokens", "need at least one patch token");
}

}  // namespace

DecoderResult train_decoder(const LayerTokens& tokens, const LayerTokens& z0, DecoderKind kind, const Split& split,
                            const ProbeConfig& cfg, const DecoderOptions& options) {
  cfg.check();
  check_pair(tokens, z0);
  const Eigen::Index p = tokens.tokens() - 1;
  const Eigen::Index d = tokens.width();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 0.01 / std::sqrt(static_cast<double>(d)));
  DecoderParams cur;
  cur.kind = kind;
  cur.F = Eigen::MatrixXd::NullaryExpr(d, d, [&] { return init(rng); });
  if (kind == DecoderKind::all_to_all) cur.M = Eigen::MatrixXd::Identity(p, p);
  if (options.bias) cur.bias = Eigen::VectorXd::Zero(d);

  detail::Adam adam(cfg.learning_rate, cfg.weight_decay);
  detail::AdamSlot sf, sm, sb;

  DecoderResult r;
  r.params = cur;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  std::vector<int> order = split.train;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const double scale = 2.0 / static_cast<double>(p * d);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t len = std::min(batch, order.size() - start);
      Eigen::MatrixXd gf = Eigen::MatrixXd::Zero(d, d);
      Eigen::MatrixXd gm = cur.M ? Eigen::MatrixXd::Zero(p, p) : Eigen::MatrixXd();
      Eigen::VectorXd gb = Eigen::VectorXd::Zero(d);
      double loss = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const Eigen::MatrixXd t = patch_block(tokens, order[start + i]);
        const Eigen::MatrixXd y = t * cur.F.transpose();
        Eigen::MatrixXd g = (cur.M ? Eigen::MatrixXd((*cur.M) * y) : y) - patch_block(z0, order[start + i]);
        if (cur.bias) g.rowwise() += cur.bias->transpose();
        loss += g.squaredNorm();
        g *= scale / static_cast<double>(len);
        gb += g.colwise().sum().transpose();
        if (cur.M) {
          gm.noalias() += g * y.transpose();
          gf.noalias() += (cur.M->transpose() * g).transpose() * t;
        } else {
          gf.noalias() += g.transpose() * t;
        }
      }
      loss /= static_cast<double>(len * static_cast<std::size_t>(p * d));
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, batch_index);
      loss_sum += loss * static_cast<double>(len);

      adam.next_step();
      adam.apply(cur.F, gf, sf);
      if (cur.M) adam.apply(*cur.M, gm, sm);
      if (cur.bias) adam.apply(*cur.bias, gb, sb);
    }
    r.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double val = decoder_mse(cur, tokens, z0, split.val);
    if (!std::isfinite(val)) throw TrainingDivergedError(epoch, batch_index);
    r.val_curve.push_back(val);
    r.epochs_run = epoch + 1;
    if (val < best) {
      best = val;
      r.best_epoch = epoch;
      r.params = cur;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }

  r.val_mse = best;
  r.test_mse = decoder_mse(r.params, tokens, z0, split.test);
  r.null_mse = null_mse(z0, split.test);
  return r;
}

LayerTokens permute_patches_per_image(const LayerTokens& z0, std::uint64_t seed) {
  LayerTokens out = z0;
  const Eigen::Index p = z0.tokens() - 1;
  const Eigen::Index d = z0.width();
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p));
  for (Eigen::Index b = 0; b < z0.images(); ++b) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::Map<RowMatrixXf> dst(out.data.data.data() + b * z0.tokens() * d, z0.tokens(), d);
    const auto src = z0.image(b);
    for (Eigen::Index i = 0; i < p; ++i) dst.row(1 + i) = src.row(1 + perm[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace vitdiag
