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

// Linear reconstruction decoders from layer tokens back to z0 patches.
//
//   self_only    z_hat = T F^T
//   all_to_all   z_hat = M T F^T
//
// T and z are the (P, D) patch blocks of one image; [CLS] is dropped.

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "vitdiag/probe.hpp"
#include "vitdiag/tensor.hpp"

namespace vitdiag {

enum class DecoderKind { self_only, all_to_all };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& s);

struct DecoderParams {
  DecoderKind kind = DecoderKind::self_only;
  Eigen::MatrixXd F;                 // D x D
  std::optional<Eigen::MatrixXd> M;  // P x P, all_to_all only
  std::optional<Eigen::VectorXd> bias;

  /// (P, D) reconstruction for one image's patch block.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& patches) const;
};

struct DecoderOptions {
  bool bias = false;
};

struct DecoderResult {
  DecoderParams params;
  double val_mse = 0.0;
  double test_mse = 0.0;
  double null_mse = 0.0;  // all-zeros predictor on the test targets
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<double> train_loss;
  std::vector<double> val_curve;
};

/// (P, D) patch block of image b in double precision.
Eigen::MatrixXd patch_block(const LayerTokens& tokens, Eigen::Index b);

/// Mean squared z0 patch entry over `images`: the MSE of predicting zeros.
double null_mse(const LayerTokens& z0, const std::vector<int>& images);

double decoder_mse(const DecoderParams& params, const LayerTokens& tokens, const LayerTokens& z0,
                   const std::vector<int>& images);

/// Mini-batch Adam on MSE, batches measured in images, early-stopped on
/// validation MSE with the best parameters restored.
DecoderResult train_decoder(const LayerTokens& tokens, const LayerTokens& z0, DecoderKind kind, const Split& split,
                            const ProbeConfig& cfg, const DecoderOptions& options = {});

/// Copy of `z0` with the patch rows of every image shuffled by an independent
/// seeded permutation. [CLS] stays in place.
LayerTokens permute_patches_per_image(const LayerTokens& z0, std::uint64_t seed);

}  // namespace vitdiag
