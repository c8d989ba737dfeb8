#pragma once

#include <vector>

#include "dprobe/numerics/tape.hpp"

namespace dprobe::trainer {

// Adaptive-moment gradient descent with bias correction.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied to matrices only
  };

  explicit Adam(std::vector<numerics::Parameter>& params) : Adam(params, Options{}) {}
  Adam(std::vector<numerics::Parameter>& params, Options options);

  // Applies one update with the given learning rate and clears gradients.
  void step(double learning_rate);

  std::size_t steps_taken() const noexcept { return t_; }

 private:
  std::vector<numerics::Parameter>& params_;
  Options options_;
  std::vector<numerics::Tensor> m_;
  std::vector<numerics::Tensor> v_;
  std::size_t t_ = 0;
};

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(std::vector<numerics::Parameter>& params, double max_norm);

}  // namespace dprobe::trainer
