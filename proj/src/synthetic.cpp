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

#include "vitdiag/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "vitdiag/errors.hpp"
#include "vitdiag/oracles.hpp"

namespace vitdiag {

namespace {

constexpr const char* kScenarioNames[] = {"collapsed_etf", "three_phase_similarity", "permuted_tokens",
                                          "absorbing_cls", "uniform_attention",      "noise_floor"};

using Rng = std::mt19937_64;

TensorF token_tensor(const SynthSpec& s) {
  return TensorF({s.B, s.P + 1, s.D});
}

Eigen::Map<RowMatrixXf> image_of(TensorF& t, Eigen::Index b) {
  const Eigen::Index n = t.dim(1), d = t.dim(2);
  return {t.data.data() + b * n * d, n, d};
}

TensorF gaussian_tokens(const SynthSpec& s, Rng& rng, double sigma = 1.0) {
  TensorF t = token_tensor(s);
  std::normal_distribution<float> g(0.0f, static_cast<float>(sigma));
  for (auto& v : t.data) v = g(rng);
  return t;
}

TensorF softmax_attention(const SynthSpec& s, Rng& rng) {
  const Eigen::Index n = s.P + 1;
  TensorF t({s.B, s.H, n, n});
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd row(n);
  for (std::size_t r = 0; r < t.data.size() / static_cast<std::size_t>(n); ++r) {
    for (Eigen::Index j = 0; j < n; ++j) row(j) = std::exp(g(rng));
    row /= row.sum();
    for (Eigen::Index j = 0; j < n; ++j) t.data[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = static_cast<float>(row(j));
  }
  return t;
}

TensorF constant_attention(const SynthSpec& s, bool absorbing) {
  const Eigen::Index n = s.P + 1;
  TensorF t({s.B, s.H, n, n});
  const float u = 1.0f / static_cast<float>(n);
  for (std::size_t r = 0; r < t.data.size() / static_cast<std::size_t>(n); ++r)
    for (Eigen::Index j = 0; j < n; ++j)
      t.data[r * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = absorbing ? (j == 0 ? 1.0f : 0.0f) : u;
  return t;
}

TensorI balanced_labels(const SynthSpec& s) {
  TensorI t({s.B});
  for (int b = 0; b < s.B; ++b) t.data[static_cast<std::size_t>(b)] = b % s.C;
  return t;
}

// Random orthonormal D x k basis.
Eigen::MatrixXd random_basis(int d, int k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(d, k, [&] { return g(rng); });
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

// P-cycle without fixed points: perm[i] is the source patch of position i.
std::vector<int> derangement(int p, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> perm(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i)
    perm[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = order[static_cast<std::size_t>((i + 1) % p)];
  return perm;
}

TensorF permuted_copy(const TensorF& z0, const std::vector<int>& perm) {
  TensorF out = z0;
  const Eigen::Index p = z0.dim(1) - 1;
  for (Eigen::Index b = 0; b < z0.dim(0); ++b) {
    auto dst = image_of(out, b);
    const Eigen::Map<const RowMatrixXf> src(z0.data.data() + b * z0.dim(1) * z0.dim(2), z0.dim(1), z0.dim(2));
    for (Eigen::Index i = 0; i < p; ++i) dst.row(1 + i) = src.row(1 + perm[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Mean centered patch similarity of a stored tensor, by the pairwise oracle.
double realized_similarity(const TensorF& t) {
  double s = 0.0;
  int used = 0;
  for (Eigen::Index b = 0; b < t.dim(0); ++b) {
    const Eigen::Map<const RowMatrixXf> img(t.data.data() + b * t.dim(1) * t.dim(2), t.dim(1), t.dim(2));
    if (auto v = oracle_pairwise_cosine(img.bottomRows(t.dim(1) - 1).cast<double>(), true)) {
      s += *v;
      ++used;
    }
  }
  return used ? s / used : 0.0;
}

// Patch tokens = noise + lambda * u on the majority group (all but the last
// patch). The centered similarity grows with lambda from the isotropic value
// toward (C(P-1,2) - (P-1)) / C(P,2); lambda is bisected to hit `target`.
TensorF two_group_tokens(const SynthSpec& s, double target, Rng& rng) {
  TensorF noise = gaussian_tokens(s, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Eigen::VectorXd> dirs;
  for (int b = 0; b < s.B; ++b) {
    Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(s.D, [&] { return g(rng); });
    dirs.push_back(u.normalized());
  }
  auto build = [&](double lambda) {
    TensorF t = noise;
    for (int b = 0; b < s.B; ++b) {
      auto img = image_of(t, b);
      for (int i = 1; i < s.P; ++i) img.row(i) += (lambda * dirs[static_cast<std::size_t>(b)]).cast<float>().transpose();
    }
    return t;
  };
  double lo = 0.0, hi = 1.0;
  if (realized_similarity(build(lo)) >= target) return build(lo);
  while (realized_similarity(build(hi)) < target) {
    hi *= 2.0;
    if (hi > 1e6) throw SpecError("three_phase_similarity: target " + std::to_string(target) + " unreachable");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (realized_similarity(build(mid)) < target ? lo : hi) = mid;
  }
  return build(hi);
}

CaptureManifest base_manifest(const SynthSpec& s) {
  CaptureManifest m;
  m.model_id = "synthetic/" + to_string(s.scenario);
  m.num_blocks = s.L;
  m.embed_dim = s.D;
  m.num_heads = s.H;
  m.num_patches = s.P;
  m.num_classes = s.C;
  m.present_streams = {Stream::tokens, Stream::attention, Stream::labels, Stream::pe, Stream::z0};
  m.seed = s.seed;
  m.capture_notes = "synthetic scenario " + to_string(s.scenario);
  return m;
}

}  // namespace

std::string to_string(Scenario s) { return kScenarioNames[static_cast<int>(s)]; }

Scenario scenario_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i)
    if (s == kScenarioNames[i]) return static_cast<Scenario>(i);
  throw SpecError("unknown scenario '" + s + "'");
}

SynthSpec SynthSpec::defaults(Scenario s) {
  SynthSpec spec;
  spec.scenario = s;
  switch (s) {
    case Scenario::collapsed_etf:
      spec.B = 1000, spec.L = 6, spec.P = 4, spec.D = 32, spec.C = 10, spec.noise_sigma = 0.01;
      break;
    case Scenario::three_phase_similarity:
      spec.B = 64, spec.L = 12, spec.P = 16, spec.D = 32, spec.C = 2;
      break;
    case Scenario::permuted_tokens:
      spec.B = 400, spec.L = 4, spec.P = 16, spec.D = 8, spec.C = 2;
      break;
    case Scenario::absorbing_cls:
    case Scenario::uniform_attention:
      spec.B = 8, spec.L = 2, spec.P = 16, spec.D = 8, spec.C = 2;
      break;
    case Scenario::noise_floor:
      spec.B = 400, spec.L = 4, spec.P = 16, spec.D = 8, spec.C = 2;
      break;
  }
  return spec;
}

void SynthSpec::check() const {
  if (B < 2) throw SpecError("synthetic spec: B must be at least 2");
  if (L < 1 || P < 2 || D < 1 || H < 1 || C < 1) throw SpecError("synthetic spec: L, D, H, C >= 1 and P >= 2 required");
  if (C > B) throw SpecError("synthetic spec: more classes than images (C > B)");
  if (!(noise_sigma >= 0.0)) throw SpecError("synthetic spec: noise_sigma must be non-negative");
  if (scenario == Scenario::collapsed_etf && (C < 2 || D < C))
    throw SpecError("collapsed_etf: needs C >= 2 and D >= C");
  if (scenario == Scenario::three_phase_similarity && (L < 6 || P < 4))
    throw SpecError("three_phase_similarity: needs L >= 6 and P >= 4");
}

SyntheticCapture synthesize(const SynthSpec& s) {
  s.check();
  Rng rng(s.seed);
  SyntheticCapture out;
  out.manifest = base_manifest(s);
  out.truth.scenario = s.scenario;
  auto& st = out.streams;
  auto& ex = out.truth.expected;

  st.labels = balanced_labels(s);
  TensorF pe({s.P + 1, s.D});
  {
    std::normal_distribution<float> g(0.0f, 0.5f);
    for (auto& v : pe.data) v = g(rng);
  }

  TensorF z0 = gaussian_tokens(s, rng);
  std::map<int, TensorF> tokens;

  switch (s.scenario) {
    case Scenario::collapsed_etf: {
      // Simplex ETF in R^C, rotated into R^D.
      Eigen::MatrixXd etf = Eigen::MatrixXd::Identity(s.C, s.C);
      etf.rowwise() -= Eigen::RowVectorXd::Constant(s.C, 1.0 / s.C);
      etf.rowwise().normalize();
      const Eigen::MatrixXd vertices = etf * random_basis(s.D, s.C, rng).transpose();  // C x D
      for (int l = -1; l < s.L; ++l) {
        TensorF t = gaussian_tokens(s, rng);
        const double sigma = s.noise_sigma * (1.0 + 4.0 * (s.L - 1 - std::max(l, 0)));
        std::normal_distribution<double> g(0.0, 1.0);
        for (int b = 0; b < s.B; ++b) {
          Eigen::RowVectorXd cls = vertices.row(b % s.C);
          for (int k = 0; k < s.D; ++k) cls(k) += sigma * g(rng);
          image_of(t, b).row(0) = cls.cast<float>();
        }
        tokens[l] = std::move(t);
      }
      ex["final_layer"] = s.L - 1;
      ex["nc1"] = 0.0;
      ex["nc2"] = 0.0;
      ex["nc3"] = 1.0;
      ex["nc4"] = 1.0;
      ex["tolerance"] = "O(noise_sigma)";
      break;
    }
    case Scenario::three_phase_similarity: {
      const int plateau_end = s.L - 6;
      const int step = s.L - 5;
      z0 = two_group_tokens(s, 0.6, rng);
      tokens[-1] = gaussian_tokens(s, rng);
      for (int l = 0; l <= plateau_end; ++l) tokens[l] = gaussian_tokens(s, rng);
      tokens[step] = two_group_tokens(s, 0.03, rng);
      for (int k = 0; k < 4; ++k) tokens[step + 1 + k] = two_group_tokens(s, 0.1 + 0.1 * k, rng);
      ex["cliff_layers"] = {-1, 0};
      ex["plateau_start"] = 0;
      ex["plateau_end"] = plateau_end;
      ex["plateau_length"] = plateau_end + 1;
      ex["climb_start"] = step + 1;
      ex["threshold"] = 0.02;
      ex["climb_rise"] = 0.02;
      nlohmann::json targets = nlohmann::json::object();
      targets["-2"] = 0.6;
      targets["-1"] = "isotropic";
      for (int l = 0; l <= plateau_end; ++l) targets[std::to_string(l)] = "isotropic";
      targets[std::to_string(step)] = 0.03;
      for (int k = 0; k < 4; ++k) targets[std::to_string(step + 1 + k)] = 0.1 + 0.1 * k;
      ex["centered_similarity_targets"] = targets;
      break;
    }
    case Scenario::permuted_tokens: {
      const int from = s.L / 2;
      const auto perm = derangement(s.P, rng);
      for (int l = -1; l < s.L; ++l) {
        TensorF t = l >= from ? permuted_copy(z0, perm) : z0;
        if (s.noise_sigma > 0) {
          std::normal_distribution<float> g(0.0f, static_cast<float>(s.noise_sigma));
          for (auto& v : t.data) v += g(rng);
        }
        tokens[l] = std::move(t);
      }
      ex["permuted_from_layer"] = from;
      ex["permutation"] = perm;
      ex["scrambling_exact"] = 1.0;
      ex["infox_self_exact"] = 0.0;
      break;
    }
    case Scenario::absorbing_cls:
    case Scenario::uniform_attention:
    case Scenario::noise_floor: {
      for (int l = -1; l < s.L; ++l) tokens[l] = gaussian_tokens(s, rng);
      if (s.scenario == Scenario::absorbing_cls) {
        ex["ccc"] = 1.0;
      } else if (s.scenario == Scenario::uniform_attention) {
        ex["aci"] = 1.0;
        ex["ccc"] = 1.0 / (s.P + 1);
      } else {
        ex["scrambling"] = 0.0;
        ex["infox_self"] = 0.0;
        ex["infox_all"] = 0.0;
      }
      break;
    }
  }

  for (int l = 0; l < s.L; ++l) {
    if (s.scenario == Scenario::absorbing_cls || s.scenario == Scenario::uniform_attention)
      st.attention[l] = constant_attention(s, s.scenario == Scenario::absorbing_cls);
    else
      st.attention[l] = softmax_attention(s, rng);
  }
  for (auto& [l, t] : tokens) st.tokens[l] = std::move(t);
  st.z0 = std::move(z0);
  st.pe = std::move(pe);
  return out;
}

std::filesystem::path truth_path(const std::filesystem::path& capture_path) {
  return std::filesystem::path(capture_path.string() + ".truth.json");
}

nlohmann::json ground_truth_to_json(const GroundTruth& g, const SynthSpec& s) {
  nlohmann::json j;
  j["scenario"] = to_string(g.scenario);
  j["spec"] = {{"B", s.B}, {"L", s.L}, {"P", s.P}, {"D", s.D}, {"C", s.C}, {"H", s.H},
               {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
  j["expected"] = g.expected;
  return j;
}

GroundTruth generate(const SynthSpec& spec, const std::filesystem::path& path) {
  auto cap = synthesize(spec);
  write_capture(cap.manifest, cap.streams, path);
  const auto sidecar = truth_path(path);
  const auto tmp = std::filesystem::path(sidecar.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    os << ground_truth_to_json(cap.truth, spec).dump(2) << "\n";
    if (!os) throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, sidecar);
  return cap.truth;
}

}  // namespace vitdiag
