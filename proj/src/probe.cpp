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

#include "vitdiag/probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "vitdiag/detail/adam.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/similarity.hpp"

namespace vitdiag {

void SplitSpec::check() const {
  if (!(train > 0 && val > 0 && test > 0)) throw ConfigError("split fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

std::string to_string(Monitor m) { return m == Monitor::accuracy ? "accuracy" : "loss"; }

Monitor monitor_from_string(const std::string& s) {
  if (s == "accuracy") return Monitor::accuracy;
  if (s == "loss") return Monitor::loss;
  throw ConfigError("unknown monitor '" + s + "' (expected accuracy or loss)");
}

void ProbeConfig::check() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size < 1 || patience < 1 || max_epochs < 1) throw ConfigError("batch_size, patience and max_epochs must be positive");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
}

namespace {

void assign(std::vector<int>& pool, const SplitSpec& spec, Split& out) {
  const auto n = static_cast<double>(pool.size());
  const auto n_train = static_cast<std::size_t>(std::lround(n * spec.train));
  const auto n_val = std::min(pool.size() - n_train, static_cast<std::size_t>(std::lround(n * spec.val)));
  out.train.insert(out.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.insert(out.val.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_train),
                 pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.insert(out.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), pool.end());
}

void finish(Split& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  if (s.train.empty() || s.val.empty() || s.test.empty())
    throw DegenerateInputError("split: too few samples for non-empty train/val/test partitions");
}

}  // namespace

Split make_split(const Labels& labels, int num_classes, const SplitSpec& spec) {
  spec.check();
  if (!spec.stratified) return make_split(static_cast<int>(labels.size()), spec);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ValidationError("split: label outside [0, C)");
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  }
  std::mt19937_64 rng(spec.seed);
  Split out;
  for (auto& pool : by_class) {
    std::shuffle(pool.begin(), pool.end(), rng);
    assign(pool, spec, out);
  }
  finish(out);
  return out;
}

Split make_split(int n, const SplitSpec& spec) {
  spec.check();
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  Split out;
  assign(pool, spec, out);
  finish(out);
  return out;
}

namespace {

Eigen::Index argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& r) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < r.size(); ++k)
    if (r(k) > r(best)) best = k;
  return best;
}

std::vector<double> correctness(const Eigen::Ref<const Eigen::MatrixXd>& x, const Labels& y, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& b, const std::vector<int>& rows) {
  std::vector<double> hit;
  hit.reserve(rows.size());
  for (int i : rows) {
    const Eigen::RowVectorXd logits = x.row(i) * w.transpose() + b.transpose();
    hit.push_back(argmax_row(logits) == y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  }
  return hit;
}

double cross_entropy(const Eigen::Ref<const Eigen::MatrixXd>& x, const Labels& y, const Eigen::MatrixXd& w,
                     const Eigen::VectorXd& b, const std::vector<int>& rows) {
  double loss = 0.0;
  for (int i : rows) {
    const Eigen::RowVectorXd logits = x.row(i) * w.transpose() + b.transpose();
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    loss += lse - logits(y[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(rows.size());
}

}  // namespace

double probe_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels,
                      const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const std::vector<int>& rows) {
  if (rows.empty()) throw DegenerateInputError("probe_accuracy: no rows");
  const auto hit = correctness(features, labels, weights, bias, rows);
  return std::accumulate(hit.begin(), hit.end(), 0.0) / static_cast<double>(hit.size());
}

ProbeResult train_probe(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels, int num_classes,
                        const Split& split, const ProbeConfig& cfg) {
  cfg.check();
  const Eigen::Index d = features.cols();
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw DegenerateInputError("train_probe: label count does not match feature rows");

  std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
  for (int i : split.train) seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] = 1;
  std::vector<int> missing;
  for (int c = 0; c < num_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)]) missing.push_back(c);
  if (!missing.empty()) throw MissingClassError(missing);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(num_classes, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(num_classes);
  detail::Adam adam(cfg.learning_rate, cfg.weight_decay);
  detail::AdamSlot sw, sb;

  ProbeResult r;
  r.weights = w;
  r.bias = b;
  double best = -std::numeric_limits<double>::infinity();
  int wait = 0;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order = split.train;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t len = std::min(batch, order.size() - start);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(len), d);
      for (std::size_t i = 0; i < len; ++i) xb.row(static_cast<Eigen::Index>(i)) = features.row(order[start + i]);

      Eigen::MatrixXd p = (xb * w.transpose()).rowwise() + b.transpose();
      double loss = 0.0;
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp().matrix();
        const double z = p.row(i).sum();
        p.row(i) /= z;
        const int y = labels[static_cast<std::size_t>(order[start + static_cast<std::size_t>(i)])];
        loss -= std::log(std::max(p(i, y), 1e-300));
        p(i, y) -= 1.0;
      }
      loss /= static_cast<double>(len);
      if (!std::isfinite(loss) || !p.allFinite()) throw TrainingDivergedError(epoch, batch_index);
      loss_sum += loss * static_cast<double>(len);

      p /= static_cast<double>(len);
      adam.next_step();
      adam.apply(w, p.transpose() * xb, sw);
      adam.apply(b, p.colwise().sum().transpose(), sb);
    }
    r.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double acc = probe_accuracy(features, labels, w, b, split.val);
    const double val_loss = cross_entropy(features, labels, w, b, split.val);
    r.val_curve.push_back(acc);
    r.val_loss.push_back(val_loss);
    r.epochs_run = epoch + 1;
    const double score = cfg.monitor == Monitor::accuracy ? acc : -val_loss;
    if (score > best) {
      best = score;
      r.val_accuracy = acc;
      r.best_epoch = epoch;
      r.weights = w;
      r.bias = b;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }

  const auto hit = correctness(features, labels, r.weights, r.bias, split.test);
  const auto ci = bootstrap_ci(hit, 2000, 0.95, derive_seed(cfg.seed, 0x70726f6265ULL));
  r.test_accuracy = ci.mean;
  r.test_ci_low = ci.ci_low;
  r.test_ci_high = ci.ci_high;
  return r;
}

ProbeResult train_probe(const Eigen::Ref<const Eigen::MatrixXd>& features, const Labels& labels, int num_classes,
                        const SplitSpec& split, const ProbeConfig& cfg) {
  return train_probe(features, labels, num_classes, make_split(labels, num_classes, split), cfg);
}

}  // namespace vitdiag
