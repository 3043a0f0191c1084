#include "apn/autodiff.hpp"

#include <cassert>

#include "apn/random.hpp"

namespace apn {

namespace {
std::string& fault_slot() {
  static std::string op;
  return op;
}
}  // namespace

void set_backward_fault(std::string op) { fault_slot() = std::move(op); }
const std::string& backward_fault() { return fault_slot(); }

template <typename T>
void accumulate_grad(Variable<T>& v, const Tensor<T>& g) {
  if (!v.requires_grad) return;
  Tensor<T>& dst = v.ensure_grad();
  if (dst.size() != g.size()) throw ShapeError("gradient " + g.shape().str() + " vs value " + v.value.shape().str());
  T* d = dst.ptr();
  const T* s = g.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
#ifndef NDEBUG
  bool finite_inputs = true;
  for (const auto& in : inputs) finite_inputs = finite_inputs && in->value.all_finite();
  assert(!finite_inputs || value.all_finite());
#endif
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  auto out = make_var(std::move(value), needs && recording_);
  if (needs && recording_) {
    out->leaf = false;
    nodes_.push_back(Node{std::string(op), std::move(inputs), out, std::move(backward)});
  }
  return out;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss->value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + loss->value.shape().str());
  }
  for (auto& node : nodes_) {
    node.output->grad = Tensor<T>();
  }
  if (!loss->requires_grad) return;
  loss->ensure_grad()[0] += T(1);
  const std::string& fault = backward_fault();
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    if (!fault.empty() && it->op == fault) {
      Tensor<T> skewed = it->output->grad;
      for (auto& g : skewed.data()) g *= T(1.01);
      it->backward(skewed);
    } else {
      it->backward(it->output->grad);
    }
  }
}

template <typename T>
void Tape<T>::note_kink(std::uint64_t h) {
  kink_sig_ = Rng::mix(kink_sig_ ^ h);
}

template class Tape<float>;
template class Tape<double>;
template void accumulate_grad<float>(Variable<float>&, const Tensor<float>&);
template void accumulate_grad<double>(Variable<double>&, const Tensor<double>&);

}  // namespace apn
