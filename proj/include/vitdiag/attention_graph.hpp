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

// Attention as a Markov chain over tokens: stationary distribution, the
// Attention Consensus Index (1 - sigma_2 of the pi-symmetrized chain) and
// CLS Centrality (pi_0).

#pragma once

#include <Eigen/Dense>

#include <optional>

#include "vitdiag/tensor.hpp"

namespace vitdiag {

inline constexpr double kPiClamp = 1e-12;

struct AttentionChain {
  Eigen::MatrixXd P;  // row-stochastic, N x N
  Eigen::VectorXd pi;
  bool converged = false;
  int iterations = 0;
  double smoothing_eps = 0.0;
};

/// Mean over images and heads, then each row renormalized to sum to one.
AttentionChain build_chain(const AttentionStack& attn);

/// Chain for a single image, averaged over heads.
AttentionChain build_chain(const AttentionStack& attn, Eigen::Index image);

AttentionChain chain_from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& p);

/// Power iteration v <- P^T v from uniform. Retries once on the smoothed chain
/// (1 - eps) P + eps / N when the raw chain does not converge.
void stationary_distribution(AttentionChain& chain, double tol = 1e-10, int max_iters = 10000);

struct AciResult {
  double value = 0.0;
  double raw = 0.0;  // 1 - sigma_2 before clamping to [0, 1]
  double sigma2 = 0.0;
};

AciResult aci(const AttentionChain& chain);

inline double cls_centrality(const AttentionChain& chain) { return chain.pi(0); }

struct ChainMetrics {
  double aci = 0.0;
  double aci_raw = 0.0;
  double ccc = 0.0;
  bool smoothed = false;
  int iterations = 0;
};

/// Builds the chain, solves for pi and evaluates ACI and CCC. With
/// `per_image` the metrics are computed per image chain and averaged.
ChainMetrics chain_metrics(const AttentionStack& attn, bool per_image = false, double tol = 1e-10,
                           int max_iters = 10000);

}  // namespace vitdiag
