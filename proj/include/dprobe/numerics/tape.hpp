#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "dprobe/numerics/tensor.hpp"

namespace dprobe::numerics {

// A learned tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order; backward() walks them in reverse.
//
// A tape built with grad_enabled=false stores values only and never records
// backward closures, so it doubles as the inference path.
class Tape {
 public:
  // Receives the gradient flowing into the node and the node's own value.
  using BackwardFn = std::function<void(const Tensor& grad_out, const Tensor& value)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Borrows `value` without copying; never receives gradients.
  Var constant_view(const Tensor& value);
  Var variable(Tensor value);
  // Borrows p.value (not copied). Gradients are added into p.grad by backward().
  Var parameter(Parameter& p);

  // Adds an op output. The closure is dropped when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  void backward(const Var& loss);

  // Gradient of a recorded variable after backward(); zeros if none reached it.
  Tensor grad(const Var& v) const;

  // For use inside backward closures: zero-initialized accumulation buffer.
  Tensor& grad_buffer(const Var& v);

  void reset();

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  const Node& node(std::size_t id) const;

  bool grad_enabled_;
  bool backward_done_ = false;
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace dprobe::numerics
