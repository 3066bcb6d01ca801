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

#include "vitdiag/info_plane.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "vitdiag/errors.hpp"
#include "vitdiag/stats.hpp"

namespace vitdiag {

double infox(double mse, double mse_null, double mse_oracle) {
  if (!(mse_null > mse_oracle)) throw DegenerateInputError("infox: null MSE must exceed oracle MSE");
  return 1.0 - (mse - mse_oracle) / (mse_null - mse_oracle);
}

void fill_derived(std::vector<InfoPlanePoint>& points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& pt = points[i];
    pt.scrambling = scrambling_index(pt.infox_all, pt.infox_self);
    pt.task_gain = i == 0 ? 0.0 : pt.probe_acc - points[i - 1].probe_acc;
    pt.infox_drop = i == 0 ? 0.0 : points[i - 1].infox_self - pt.infox_self;
  }
}

PivotRange find_pivot(const std::vector<InfoPlanePoint>& points, double drop_min) {
  if (points.size() < 3) throw DegenerateInputError("find_pivot: need at least three layers");
  std::vector<double> gains;
  for (std::size_t i = 1; i < points.size(); ++i) gains.push_back(points[i].task_gain);
  const double q75 = quantile(gains, 0.75);

  std::vector<bool> ok(points.size(), false);
  std::optional<std::size_t> peak;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const auto& pt = points[i];
    ok[i] = pt.task_gain >= q75 && pt.task_gain > 0.0 && pt.infox_drop > drop_min;
    if (ok[i] && (!peak || pt.task_gain > points[*peak].task_gain)) peak = i;
  }
  PivotRange r;
  if (!peak) return r;
  std::size_t lo = *peak;
  std::size_t hi = *peak;
  while (lo > 1 && ok[lo - 1]) --lo;
  while (hi + 1 < points.size() && ok[hi + 1]) ++hi;
  for (std::size_t i = lo; i <= hi; ++i) r.layers.push_back(points[i].layer);
  return r;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Collapsing: return "Collapsing";
    case Regime::Stable: return "Stable";
    case Regime::Escalating: return "Escalating";
  }
  return "Stable";
}

Regime regime_from_string(const std::string& s) {
  if (s == "Collapsing") return Regime::Collapsing;
  if (s == "Stable") return Regime::Stable;
  if (s == "Escalating") return Regime::Escalating;
  throw ValidationError("unknown regime '" + s + "'");
}

RegimeResult classify_regime(std::span<const double> v, const RegimeThresholds& t) {
  if (v.size() < 4) throw DegenerateInputError("classify_regime: need at least four layers");
  const std::size_t q = v.size() / 4;
  RegimeResult r;
  r.first_quartile_mean = mean(v.subspan(0, q));
  r.middle_half_mean = mean(v.subspan(q, v.size() - 2 * q));
  r.last_quartile_mean = mean(v.subspan(v.size() - q, q));
  r.median = median({v.begin(), v.end()});
  r.final_value = v.back();
  r.any_negative = std::any_of(v.begin(), v.end(), [](double x) { return x < 0.0; });

  if (r.last_quartile_mean > t.escalate_ratio * r.middle_half_mean && r.final_value > t.final_over_median * r.median)
    r.regime = Regime::Escalating;
  else if (r.final_value < t.collapse_ratio * r.first_quartile_mean || r.any_negative)
    r.regime = Regime::Collapsing;
  else
    r.regime = Regime::Stable;
  return r;
}

std::string to_string(CheckpointStatus s) {
  switch (s) {
    case CheckpointStatus::Reached: return "Reached";
    case CheckpointStatus::AccuracyOnly: return "AccuracyOnly";
    case CheckpointStatus::Unreached: return "Unreached";
  }
  return "Unreached";
}

CheckpointStatus checkpoint_status_from_string(const std::string& s) {
  if (s == "Reached") return CheckpointStatus::Reached;
  if (s == "AccuracyOnly") return CheckpointStatus::AccuracyOnly;
  if (s == "Unreached") return CheckpointStatus::Unreached;
  throw ValidationError("unknown checkpoint status '" + s + "'");
}

namespace {

SeriesCheckpoint locate(const std::vector<InfoPlanePoint>& pts, const CheckpointTarget& t, const char* name,
                        std::vector<std::string>& evidence) {
  SeriesCheckpoint out;
  std::optional<int> acc_layer;
  for (const auto& p : pts) {
    if (p.probe_acc < t.acc_floor) continue;
    if (!acc_layer) acc_layer = p.layer;
    if (p.infox_self <= t.infox_ceiling) {
      out.status = CheckpointStatus::Reached;
      out.layer = p.layer;
      return out;
    }
  }
  std::ostringstream os;
  if (acc_layer) {
    const auto lowest = std::min_element(pts.begin(), pts.end(), [](const auto& x, const auto& y) {
      return x.infox_self < y.infox_self;
    });
    out.status = CheckpointStatus::AccuracyOnly;
    out.layer = acc_layer;
    os << "series " << name << ": InfoX never falls to " << t.infox_ceiling << " while accuracy >= " << t.acc_floor
       << " (lowest " << lowest->infox_self << " at layer " << lowest->layer
       << "); checkpoint placed at the first layer meeting the accuracy floor, " << *acc_layer;
  } else {
    os << "series " << name << ": accuracy never reaches " << t.acc_floor;
  }
  evidence.push_back(os.str());
  return out;
}

}  // namespace

CheckpointResult depth_to_checkpoint(const std::vector<InfoPlanePoint>& a, const std::vector<InfoPlanePoint>& b,
                                     const CheckpointTarget& target) {
  CheckpointResult r;
  r.a = locate(a, target, "a", r.evidence);
  r.b = locate(b, target, "b", r.evidence);
  if (r.a.layer && r.b.layer) r.overhead = *r.b.layer - *r.a.layer;
  return r;
}

RandomLabelControl control_random_labels(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                                         int num_classes, const Split& split, const ProbeConfig& cfg) {
  Labels shuffled = labels;
  std::vector<int> train_labels;
  for (int i : split.train) train_labels.push_back(labels[static_cast<std::size_t>(i)]);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x726c6162ULL));
  std::shuffle(train_labels.begin(), train_labels.end(), rng);
  for (std::size_t k = 0; k < split.train.size(); ++k)
    shuffled[static_cast<std::size_t>(split.train[k])] = train_labels[k];

  RandomLabelControl r;
  r.accuracy = train_probe(features, shuffled, num_classes, split, cfg).test_accuracy;
  r.threshold = 3.0 / static_cast<double>(num_classes);
  r.applicable = r.threshold < 1.0;
  r.passed = r.applicable ? r.accuracy < r.threshold : true;
  return r;
}

PermutedTargetControl control_permuted_targets(const LayerTokens& tokens, const LayerTokens& z0, DecoderKind kind,
                                               const Split& split, const ProbeConfig& cfg) {
  const LayerTokens permuted = permute_patches_per_image(z0, derive_seed(cfg.seed, 0x7065726dULL));
  const auto plain = train_decoder(tokens, z0, kind, split, cfg);
  const auto shuffled = train_decoder(tokens, permuted, kind, split, cfg);

  PermutedTargetControl r;
  r.mse_unpermuted = plain.test_mse;
  r.mse_permuted = shuffled.test_mse;
  r.mse_null = plain.null_mse;
  const double signal = r.mse_null - r.mse_unpermuted;
  r.vacuous = !(signal > 0.05 * r.mse_null);
  r.retained = signal > 0.0 ? (r.mse_null - r.mse_permuted) / signal : 0.0;
  r.passed = r.vacuous || (r.mse_null - r.mse_permuted) < 0.1 * signal;
  return r;
}

}  // namespace vitdiag
