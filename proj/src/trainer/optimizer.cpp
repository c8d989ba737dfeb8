#include "dprobe/trainer/optimizer.hpp"

#include <cmath>

namespace dprobe::trainer {

Adam::Adam(std::vector<numerics::Parameter>& params, Options options) : params_(params), options_(options) {
  for (auto& p : params_) {
    m_.emplace_back(p.value.shape(), 0.0);
    v_.emplace_back(p.value.shape(), 0.0);
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    const bool decay = options_.weight_decay > 0.0 && p.value.rank() >= 2;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      if (decay) p.value[i] -= learning_rate * options_.weight_decay * p.value[i];
      p.value[i] -= learning_rate * update;
    }
    p.grad.fill(0.0);
  }
}

double clip_grad_norm(std::vector<numerics::Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.grad.data()) g *= f;
    }
  }
  return norm;
}

}  // namespace dprobe::trainer
