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

#include <cmath>

namespace vitdiag::detail {

struct AdamSlot {
  Eigen::ArrayXXd m;
  Eigen::ArrayXXd v;
};

/// Adaptive-moment optimizer. Weight decay is added to the gradient.
class Adam {
 public:
  Adam(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}

  void next_step() { ++t_; }

  template <typename Derived, typename Grad>
  void apply(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<Grad>& grad, AdamSlot& slot) const {
    Eigen::ArrayXXd g = grad.array();
    if (wd_ != 0.0) g += wd_ * param.array();
    if (slot.m.size() == 0) {
      slot.m = Eigen::ArrayXXd::Zero(g.rows(), g.cols());
      slot.v = Eigen::ArrayXXd::Zero(g.rows(), g.cols());
    }
    slot.m = kBeta1 * slot.m + (1.0 - kBeta1) * g;
    slot.v = kBeta2 * slot.v + (1.0 - kBeta2) * g.square();
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    param.derived().array() -= lr_ * (slot.m / c1) / ((slot.v / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double wd_;
  long t_ = 0;
};

}  // namespace vitdiag::detail
