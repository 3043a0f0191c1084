#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "apn/ops.hpp"
#include "apn/random.hpp"

namespace apn {

/// A trainable tensor with its Nesterov momentum buffer.
///
/// `group` names the logical parameter group: a batch-norm layer's gamma and
/// beta share one group, every other tensor is its own group.
template <typename T>
struct Parameter {
  std::string name;
  std::string group;
  Var<T> var;
  Tensor<T> momentum;
};

// classifier: N(0, 0.01^2), so initial logits are near uniform.
enum class Init { he_normal, classifier, zeros, ones };

/// Named tensor view used by checkpointing: parameters and batch-norm running
/// statistics, in registration order.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

/// Owns every parameter and buffer of a model.
///
/// Each tensor is initialized from its own stream, Rng(seed).split(name), so
/// values depend only on the root seed and the tensor's name.
template <typename T>
class ParameterStore {
 public:
  // `random_init` false leaves random-initialized tensors at zero (shape-only use).
  explicit ParameterStore(std::uint64_t seed, bool random_init = true) : seed_(seed), random_init_(random_init) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Var<T> add(const std::string& name, Shape shape, Init init, int fan_in = 1, const std::string& group = {});
  std::shared_ptr<ops::BatchNormStats<T>> add_bn_stats(const std::string& prefix, int channels);

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Parameter<T>* find(const std::string& name) const;

  std::vector<NamedTensor<T>> state();
  std::size_t param_count() const;
  std::vector<std::string> group_names() const;
  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  void claim(const std::string& name);

  std::uint64_t seed_;
  bool random_init_;
  std::vector<Parameter<T>> params_;
  std::vector<std::pair<std::string, std::shared_ptr<ops::BatchNormStats<T>>>> stats_;
  // (is_param, index) in registration order
  std::vector<std::pair<bool, std::size_t>> order_;
  std::vector<std::string> names_;
};

/// Forward-pass state shared by every module call.
template <typename T>
struct Context {
  Tape<T>& tape;
  bool training = false;
};

struct HW {
  int h;
  int w;
  bool operator==(const HW&) const = default;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
         bool with_bias, ops::Padding padding = ops::Padding::zeros);

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;
  HW out_hw(HW in) const;
  // Multiply-adds per sample for an input of the given size.
  std::uint64_t macs(HW in) const;

  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  Var<T> weight_, bias_;
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  ops::Padding padding_ = ops::Padding::zeros;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
                  bool with_bias);

  // Picks output padding so the result has exactly `target` spatial size.
  Var<T> operator()(Context<T>& ctx, const Var<T>& x, HW target) const;
  std::uint64_t macs(HW in) const;

 private:
  Var<T> weight_, bias_;
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in, int out, bool with_bias,
         Init init = Init::he_normal);

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;
  std::uint64_t macs() const { return static_cast<std::uint64_t>(in_) * out_; }
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }

 private:
  Var<T> weight_, bias_;
  int in_ = 0, out_ = 0;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels);

  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;
  const Var<T>& gamma() const { return gamma_; }
  const Var<T>& beta() const { return beta_; }
  ops::BatchNormStats<T>& stats() const { return *stats_; }

 private:
  Var<T> gamma_, beta_;
  std::shared_ptr<ops::BatchNormStats<T>> stats_;
};

// Nesterov SGD over every parameter in the store:
//   v <- momentum * v + (g + wd * p)
//   p <- p - lr * (g + wd * p + momentum * v)
// Parameters that never received a gradient are treated as g = 0.
template <typename T>
void sgd_nesterov_step(ParameterStore<T>& store, double lr, double momentum, double weight_decay);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class ConvTranspose2d<float>;
extern template class ConvTranspose2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;

}  // namespace apn
