#include "apn/nn.hpp"

#include <algorithm>
#include <cmath>

namespace apn {

template <typename T>
void ParameterStore<T>::claim(const std::string& name) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  names_.push_back(name);
}

template <typename T>
Var<T> ParameterStore<T>::add(const std::string& name, Shape shape, Init init, int fan_in, const std::string& group) {
  claim(name);
  Tensor<T> value(shape);
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      value.fill(T(1));
      break;
    case Init::he_normal:
    case Init::classifier: {
      if (!random_init_) break;
      Rng rng = Rng(seed_).split(name);
      const double std = init == Init::classifier ? 0.01 : std::sqrt(2.0 / std::max(fan_in, 1));
      for (auto& v : value.data()) v = static_cast<T>(std * rng.normal());
      break;
    }
  }
  Parameter<T> p;
  p.name = name;
  p.group = group.empty() ? name : group;
  p.momentum = Tensor<T>(shape);
  p.var = make_var(std::move(value), true);
  order_.emplace_back(true, params_.size());
  params_.push_back(std::move(p));
  return params_.back().var;
}

template <typename T>
std::shared_ptr<ops::BatchNormStats<T>> ParameterStore<T>::add_bn_stats(const std::string& prefix, int channels) {
  claim(prefix + ".running_mean");
  claim(prefix + ".running_var");
  auto stats = std::make_shared<ops::BatchNormStats<T>>(channels);
  order_.emplace_back(false, stats_.size());
  stats_.emplace_back(prefix, stats);
  return stats;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::vector<NamedTensor<T>> ParameterStore<T>::state() {
  std::vector<NamedTensor<T>> out;
  for (const auto& [is_param, idx] : order_) {
    if (is_param) {
      out.push_back({params_[idx].name, &params_[idx].var->value});
    } else {
      auto& [prefix, stats] = stats_[idx];
      out.push_back({prefix + ".running_mean", &stats->mean});
      out.push_back({prefix + ".running_var", &stats->var});
    }
  }
  return out;
}

template <typename T>
std::size_t ParameterStore<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::group_names() const {
  std::vector<std::string> groups;
  for (const auto& p : params_) {
    if (std::find(groups.begin(), groups.end(), p.group) == groups.end()) groups.push_back(p.group);
  }
  return groups;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
                  bool with_bias, ops::Padding padding)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad), padding_(padding) {
  weight_ = store.add(name + ".weight", Shape{out, in, kernel, kernel}, Init::he_normal, in * kernel * kernel);
  if (with_bias) bias_ = store.add(name + ".bias", Shape{out}, Init::zeros);
}

template <typename T>
Var<T> Conv2d<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return ops::conv2d(ctx.tape, x, weight_, bias_, stride_, pad_, padding_);
}

template <typename T>
HW Conv2d<T>::out_hw(HW in) const {
  return {(in.h + 2 * pad_ - kernel_) / stride_ + 1, (in.w + 2 * pad_ - kernel_) / stride_ + 1};
}

template <typename T>
std::uint64_t Conv2d<T>::macs(HW in) const {
  const HW o = out_hw(in);
  return static_cast<std::uint64_t>(o.h) * o.w * out_ * in_ * kernel_ * kernel_;
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterStore<T>& store, const std::string& name, int in, int out, int kernel,
                                    int stride, int pad, bool with_bias)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad) {
  weight_ = store.add(name + ".weight", Shape{in, out, kernel, kernel}, Init::he_normal, in * kernel * kernel);
  if (with_bias) bias_ = store.add(name + ".bias", Shape{out}, Init::zeros);
}

template <typename T>
Var<T> ConvTranspose2d<T>::operator()(Context<T>& ctx, const Var<T>& x, HW target) const {
  const int base_h = (x->value.dim(2) - 1) * stride_ - 2 * pad_ + kernel_;
  const int base_w = (x->value.dim(3) - 1) * stride_ - 2 * pad_ + kernel_;
  const int oph = target.h - base_h;
  const int opw = target.w - base_w;
  if (oph < 0 || opw < 0 || oph >= stride_ || opw >= stride_) {
    throw ConfigError("transposed conv cannot map " + x->value.shape().str() + " to " + std::to_string(target.h) + "x" +
                      std::to_string(target.w));
  }
  return ops::conv_transpose2d(ctx.tape, x, weight_, bias_, stride_, pad_, oph, opw);
}

template <typename T>
std::uint64_t ConvTranspose2d<T>::macs(HW in) const {
  return static_cast<std::uint64_t>(in.h) * in.w * in_ * out_ * kernel_ * kernel_;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, int in, int out, bool with_bias, Init init)
    : in_(in), out_(out) {
  weight_ = store.add(name + ".weight", Shape{out, in}, init, in);
  if (with_bias) bias_ = store.add(name + ".bias", Shape{out}, Init::zeros);
}

template <typename T>
Var<T> Linear<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return ops::linear(ctx.tape, x, weight_, bias_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
  gamma_ = store.add(name + ".gamma", Shape{channels}, Init::ones, 1, name);
  beta_ = store.add(name + ".beta", Shape{channels}, Init::zeros, 1, name);
  stats_ = store.add_bn_stats(name, channels);
}

template <typename T>
Var<T> BatchNorm2d<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  return ops::batch_norm2d(ctx.tape, x, gamma_, beta_, *stats_, ctx.training);
}

template <typename T>
void sgd_nesterov_step(ParameterStore<T>& store, double lr, double momentum, double weight_decay) {
  for (auto& p : store.params()) {
    Tensor<T>& value = p.var->value;
    const Tensor<T>& grad = p.var->grad;
    const bool has_grad = !grad.empty();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = (has_grad ? static_cast<double>(grad[i]) : 0.0) + weight_decay * value[i];
      const double v = momentum * p.momentum[i] + g;
      p.momentum[i] = static_cast<T>(v);
      value[i] = static_cast<T>(value[i] - lr * (g + momentum * v));
    }
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class Linear<float>;
template class Linear<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template void sgd_nesterov_step<float>(ParameterStore<float>&, double, double, double);
template void sgd_nesterov_step<double>(ParameterStore<double>&, double, double, double);

}  // namespace apn
