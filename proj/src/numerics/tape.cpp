#include "dprobe/numerics/tape.hpp"

#include "dprobe/errors.hpp"

namespace dprobe::numerics {

const Tensor& Var::value() const { return tape_->node(id_).value(); }

bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

const Tape::Node& Tape::node(std::size_t id) const {
  if (id >= nodes_.size()) throw TapeError("variable does not belong to this tape (was it reset?)");
  return nodes_[id];
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_view(const Tensor& value) {
  nodes_.push_back(Node{Tensor{}, &value, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, nullptr, grad_enabled_, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{Tensor{}, &p.value, &p, grad_enabled_, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs_grad = false;
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in.tape_ != this) throw TapeError("op mixes variables from different tapes");
      needs_grad = needs_grad || nodes_[in.id_].requires_grad;
    }
  }
  Node n{std::move(value), nullptr, nullptr, needs_grad, {}};
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (backward_done_) throw TapeError("backward() already ran on this tape; reset() it first");
  if (loss.tape_ != this) throw TapeError("loss was recorded on a different tape");
  const auto& out = node(loss.id_);
  if (out.value().size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + shape_string(out.value().shape()));
  }
  backward_done_ = true;
  grads_.assign(nodes_.size(), Tensor{});
  if (!out.requires_grad) return;
  grads_[loss.id_] = Tensor(out.value().shape(), 1.0);

  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || grads_[i].empty()) continue;
    if (n.backward) n.backward(grads_[i], n.value());
    if (n.param) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      n.param->grad += grads_[i];
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  const auto& n = node(v.id_);
  if (v.id_ < grads_.size() && !grads_[v.id_].empty()) return grads_[v.id_];
  return Tensor(n.value().shape(), 0.0);
}

Tensor& Tape::grad_buffer(const Var& v) {
  auto& g = grads_.at(v.id_);
  if (g.empty()) g = Tensor(nodes_[v.id_].value().shape(), 0.0);
  return g;
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  backward_done_ = false;
}

}  // namespace dprobe::numerics
