#pragma once

#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"

namespace diffsketch {

// Adam without weight decay. Moments are keyed by parameter order.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterSet& params);
  long long steps() const { return t_; }

  // Moments as "m.<name>" / "v.<name>" plus a one-element "t" tensor.
  std::vector<std::pair<std::string, Tensor>> state(const ParameterSet& params) const;
  void load_state(const ParameterSet& params, const std::vector<std::pair<std::string, Tensor>>& state);

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace diffsketch
