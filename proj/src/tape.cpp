#include "lrfpn/tape.hpp"

#include <stdexcept>

namespace lrfpn {

Param::Param(std::string n, std::uint8_t r, Tensor v)
    : name(std::move(n)), rank(r), value(std::move(v)), grad(value.shape()), momentum(value.shape()) {
  if (rank == 0 || rank > 4) throw ConfigError("param " + name + ": rank must be 1..4");
}

std::vector<std::uint32_t> Param::dims() const {
  const Shape& s = value.shape();
  const std::uint32_t all[4] = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  return {all, all + rank};
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  return push({"constant", std::move(value), {}, {}, nullptr, false, std::nullopt});
}

Var Tape::leaf(Tensor value) {
  return push({"leaf", std::move(value), {}, {}, nullptr, true, std::nullopt});
}

Var Tape::param(Param& p) {
  return push({"param", p.value, {}, {}, &p, true, std::nullopt});
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (std::size_t id : inputs) needs = needs || nodes_.at(id).requires_grad;
  Node node{op, std::move(value), std::move(inputs), {}, nullptr, needs, std::nullopt};
  if (needs) node.backward = std::move(fn);
  return push(std::move(node));
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape()) {
    throw ShapeError("gradient " + g.shape().str() + " does not match node '" + node.op + "' " +
                     node.value.shape().str());
  }
  if (!node.grad) {
    node.grad = g;
    return;
  }
  Tensor& acc = *node.grad;
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

void Tape::accumulate(std::size_t id, Tensor&& g) {
  Node& node = nodes_[id];
  if (node.requires_grad && !node.grad && g.shape() == node.value.shape()) {
    node.grad = std::move(g);
    return;
  }
  accumulate(id, static_cast<const Tensor&>(g));
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss belongs to a different tape");
  if (backward_done_) {
    throw std::logic_error("backward: tape already differentiated; call reset() before reuse");
  }
  if (nodes_[loss.id].value.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward: loss must be a scalar, got " + nodes_[loss.id].value.shape().str());
  }
  backward_done_ = true;
  visits_ = 0;
  accumulate(loss.id, Tensor(Shape{1, 1, 1, 1}, 1.0));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.grad) continue;
    if (node.param != nullptr) {
      Tensor& pg = node.param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += (*node.grad)[i];
      continue;
    }
    if (!node.backward) continue;
    ++visits_;
    if (!corrupt_op_.empty() && node.op == corrupt_op_) {
      Tensor scaled = *node.grad;
      for (double& v : scaled.data()) v *= corrupt_factor_;
      node.backward(*this, scaled);
    } else {
      node.backward(*this, *node.grad);
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
  visits_ = 0;
}

}  // namespace lrfpn
