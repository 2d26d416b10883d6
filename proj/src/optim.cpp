#include "optim.hpp"

#include <cmath>

namespace diffsketch {

void Adam::step(ParameterSet& params) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("adam: parameter set changed size");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& [name, p] : params) {
    auto& value = p.mutable_value().raw();
    const auto& grad = p.grad().raw();
    auto& m = m_[k].raw();
    auto& v = v_[k].raw();
    ++k;
    if (grad.empty()) continue;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state(const ParameterSet& params) const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("t", Tensor({1}, {static_cast<double>(t_)}));
  std::size_t k = 0;
  for (const auto& [name, p] : params) {
    out.emplace_back("m." + name, m_.empty() ? Tensor(p.shape()) : m_[k]);
    out.emplace_back("v." + name, v_.empty() ? Tensor(p.shape()) : v_[k]);
    ++k;
  }
  return out;
}

void Adam::load_state(const ParameterSet& params, const std::vector<std::pair<std::string, Tensor>>& state) {
  auto find = [&](const std::string& key) -> const Tensor& {
    for (const auto& [n, t] : state)
      if (n == key) return t;
    throw InputError("optimizer state lacks " + key);
  };
  t_ = static_cast<long long>(find("t")[0]);
  m_.clear();
  v_.clear();
  for (const auto& [name, p] : params) {
    const Tensor& m = find("m." + name);
    const Tensor& v = find("v." + name);
    if (m.shape() != p.shape() || v.shape() != p.shape()) throw InputError("optimizer state shape mismatch for " + name);
    m_.push_back(m);
    v_.push_back(v);
  }
}

}  // namespace diffsketch
