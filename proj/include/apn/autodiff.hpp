#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

/// A tensor participating in differentiation. Leaves are created by the
/// caller; non-leaves are outputs of recorded tape nodes.
template <typename T>
struct Variable {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a backward sweep reaches this variable
  bool requires_grad = false;
  bool leaf = true;

  Tensor<T>& ensure_grad() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T(0));
  }
};

template <typename T>
using Var = std::shared_ptr<Variable<T>>;

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto v = std::make_shared<Variable<T>>();
  v->value = std::move(value);
  v->requires_grad = requires_grad;
  return v;
}

/// Recorded computation graph for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the node list is topologically
/// sorted. A node is recorded only when at least one input requires a
/// gradient and the tape is recording. backward() zeroes every non-leaf
/// gradient, seeds dLoss/dLoss = 1 and sweeps the nodes in reverse; leaf
/// gradients accumulate across calls until the caller zeroes them.
///
/// A tape must be used by one thread at a time.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  struct Node {
    std::string op;
    std::vector<Var<T>> inputs;
    Var<T> output;
    BackwardFn backward;
  };

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var<T> record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward);

  void backward(const Var<T>& loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Multiply-add counter for conv/linear ops executed through this tape.
  void add_macs(std::uint64_t n) { macs_ += n; }
  std::uint64_t macs() const { return macs_; }

  // Non-smooth ops (relu, max-pool) fold their active pattern into this hash
  // when tracking is enabled; the gradient checker uses it to detect stencils
  // that straddle a kink.
  void track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void note_kink(std::uint64_t h);
  std::uint64_t kink_signature() const { return kink_sig_; }

 private:
  bool recording_;
  bool track_kinks_ = false;
  std::uint64_t kink_sig_ = 0;
  std::uint64_t macs_ = 0;
  std::vector<Node> nodes_;
};

// Fault injection for verifying the gradient suite: when set, the backward of
// every node with this op name sees its incoming gradient scaled by 1.01.
void set_backward_fault(std::string op);
const std::string& backward_fault();

// Accumulates g into v's gradient when v requires one.
template <typename T>
void accumulate_grad(Variable<T>& v, const Tensor<T>& g);

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace apn
