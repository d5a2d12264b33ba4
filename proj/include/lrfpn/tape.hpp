#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrfpn/tensor.hpp"

namespace lrfpn {

/// A named learnable tensor with its accumulated gradient and momentum buffer.
/// `rank` is the logical rank used in checkpoints (1 for biases, 2 for FC
/// weights, 4 otherwise); storage is always NCHW with trailing unit dims.
struct Param {
  std::string name;
  std::uint8_t rank = 4;
  Tensor value;
  Tensor grad;
  Tensor momentum;

  Param() = default;
  Param(std::string name, std::uint8_t rank, Tensor value);

  std::size_t numel() const { return value.size(); }
  /// Logical dims, `rank` entries long.
  std::vector<std::uint32_t> dims() const;
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in forward order, so every node's inputs precede it and
/// a single reverse sweep is a valid topological order. A tape can run
/// backward once; call reset() to reuse it.
class Tape {
 public:
  /// Receives d(loss)/d(output) and adds input gradients via accumulate().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Differentiable input whose gradient is read back with grad().
  Var leaf(Tensor value);
  /// Binds a Param; backward() adds the node gradient into param.grad.
  Var param(Param& p);

  /// Appends an op node. `fn` runs only if some input requires a gradient.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `g` into node `id`'s gradient; ignored for nodes that need none.
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(std::size_t id, Tensor&& g);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. `loss` must be
  /// a [1,1,1,1] node. Throws std::logic_error if already run since reset().
  void backward(Var loss);

  /// Gradient of a node after backward(), if it received one.
  const std::optional<Tensor>& grad(Var v) const { return nodes_[v.id].grad; }

  /// Number of op nodes whose backward rule ran in the last sweep.
  std::size_t backward_visits() const { return visits_; }

  void reset();

  /// Fault injection for verification fixtures: scales the incoming gradient
  /// of every node whose op name matches before running its backward rule.
  void corrupt_backward(std::string op, double factor = 1.5) {
    corrupt_op_ = std::move(op);
    corrupt_factor_ = factor;
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  Var push(Node node);

  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
  bool backward_done_ = false;
  std::size_t visits_ = 0;
  std::string corrupt_op_;
  double corrupt_factor_ = 1.0;
};

}  // namespace lrfpn
