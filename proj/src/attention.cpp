#include "apn/attention.hpp"

namespace apn {

std::string_view variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::none: return "none";
    case AttentionVariant::ca: return "ca";
    case AttentionVariant::sca_alpha: return "sca";
    case AttentionVariant::sca_theta: return "sca-theta";
    case AttentionVariant::sca_theta_plus: return "sca-theta-plus";
    case AttentionVariant::csca_alpha: return "csca";
    case AttentionVariant::csca_theta: return "csca-theta";
    case AttentionVariant::csca_theta_plus: return "csca-theta-plus";
  }
  return "none";
}

AttentionVariant parse_variant(std::string_view name) {
  static const std::pair<std::string_view, AttentionVariant> table[] = {
      {"none", AttentionVariant::none},
      {"ca", AttentionVariant::ca},
      {"sca", AttentionVariant::sca_alpha},
      {"sca-alpha", AttentionVariant::sca_alpha},
      {"sca_alpha", AttentionVariant::sca_alpha},
      {"sca-theta", AttentionVariant::sca_theta},
      {"sca_theta", AttentionVariant::sca_theta},
      {"sca-theta-plus", AttentionVariant::sca_theta_plus},
      {"sca_theta_plus", AttentionVariant::sca_theta_plus},
      {"csca", AttentionVariant::csca_alpha},
      {"csca-alpha", AttentionVariant::csca_alpha},
      {"csca_alpha", AttentionVariant::csca_alpha},
      {"csca-theta", AttentionVariant::csca_theta},
      {"csca_theta", AttentionVariant::csca_theta},
      {"csca-theta-plus", AttentionVariant::csca_theta_plus},
      {"csca_theta_plus", AttentionVariant::csca_theta_plus},
  };
  for (const auto& [key, v] : table) {
    if (key == name) return v;
  }
  throw ConfigError("unknown attention variant '" + std::string(name) +
                    "' (valid: none, ca, sca, sca-theta, sca-theta-plus, csca, csca-theta, csca-theta-plus)");
}

bool AttentionConfig::has_ca() const {
  switch (variant) {
    case AttentionVariant::ca:
    case AttentionVariant::csca_alpha:
    case AttentionVariant::csca_theta:
    case AttentionVariant::csca_theta_plus: return true;
    default: return false;
  }
}

SpatialKind AttentionConfig::spatial() const {
  switch (variant) {
    case AttentionVariant::sca_alpha:
    case AttentionVariant::csca_alpha: return SpatialKind::alpha;
    case AttentionVariant::sca_theta:
    case AttentionVariant::csca_theta: return SpatialKind::theta;
    case AttentionVariant::sca_theta_plus:
    case AttentionVariant::csca_theta_plus: return SpatialKind::theta_plus;
    default: return SpatialKind::none;
  }
}

bool AttentionConfig::has_post() const { return has_ca() && has_sca(); }

std::vector<std::string> AttentionConfig::validate() const {
  std::vector<std::string> warnings;
  if (channels < 1) throw ConfigError("attention channels must be >= 1");
  if (t < 1 || r < 1) throw ConfigError("reduction ratios t and r must be >= 1");
  if (has_ca()) {
    if (ca_hidden() < 1) {
      throw ConfigError("CA reduction t=" + std::to_string(t) + " leaves floor(2C/t)=0 for C=" + std::to_string(channels));
    }
    if ((2 * channels) % t != 0) {
      warnings.push_back("2C=" + std::to_string(2 * channels) + " not divisible by t=" + std::to_string(t) +
                         "; CA width floored to " + std::to_string(ca_hidden()));
    }
  }
  const SpatialKind k = spatial();
  if (k == SpatialKind::theta || k == SpatialKind::theta_plus) {
    if (squeeze_width() < 1) {
      throw ConfigError("SCA reduction r=" + std::to_string(r) + " leaves floor(C/r)=0 for C=" + std::to_string(channels));
    }
    if (channels % r != 0) {
      warnings.push_back("C=" + std::to_string(channels) + " not divisible by r=" + std::to_string(r) +
                         "; squeeze width floored to " + std::to_string(squeeze_width()));
    }
  }
  return warnings;
}

std::uint64_t attention_param_count(const AttentionConfig& cfg) {
  const std::uint64_t c = static_cast<std::uint64_t>(cfg.channels);
  std::uint64_t total = 0;
  if (cfg.has_ca()) {
    const std::uint64_t h = static_cast<std::uint64_t>(cfg.ca_hidden());
    total += 2 * c * h + h;  // fc1
    total += h * 2 * c + 2 * c;  // fc2
    total += 2 * (2 * c);  // bn gamma, beta
  }
  const std::uint64_t q = static_cast<std::uint64_t>(std::max(cfg.squeeze_width(), 0));
  switch (cfg.spatial()) {
    case SpatialKind::none: break;
    case SpatialKind::alpha: total += 2 * 2 * 9 + 2 * 2 + 4; break;
    case SpatialKind::theta: total += 2 * c * q + 2 * q * 2 * 9 + 2 * 2 + 4; break;
    case SpatialKind::theta_plus:
      total += 2 * c * q + 2 * (2 * q) * (2 * q) * 9 + 2 * q * 2 + (cfg.theta_plus_sigmoid ? 4 : 0);
      break;
  }
  if (cfg.has_post()) total += 2 * c * c;
  return total;
}

template <typename T>
CompetitiveAttention<T>::CompetitiveAttention(ParameterStore<T>& store, const std::string& name,
                                              const AttentionConfig& cfg)
    : channels_(cfg.channels),
      fc1_(store, name + ".fc1", 2 * cfg.channels, cfg.ca_hidden(), true),
      fc2_(store, name + ".fc2", cfg.ca_hidden(), 2 * cfg.channels, true),
      bn_(store, name + ".bn", 2 * cfg.channels) {}

template <typename T>
std::pair<Var<T>, Var<T>> CompetitiveAttention<T>::operator()(Context<T>& ctx, const Var<T>& lateral,
                                                               const Var<T>& up) const {
  if (lateral->value.shape() != up->value.shape()) {
    throw ShapeError("competitive attention: flows differ, " + lateral->value.shape().str() + " vs " +
                     up->value.shape().str());
  }
  auto& tape = ctx.tape;
  const int n = lateral->value.dim(0);
  const int c = channels_;
  auto desc = ops::concat(tape, {ops::global_avg_pool(tape, lateral), ops::global_avg_pool(tape, up)}, 1);
  auto flat = ops::reshape(tape, desc, Shape{n, 2 * c});
  auto hidden = ops::relu(tape, fc1_(ctx, flat));
  auto logits = ops::reshape(tape, fc2_(ctx, hidden), Shape{n, 2 * c, 1, 1});
  auto weights = ops::sigmoid(tape, bn_(ctx, logits));
  return {ops::slice(tape, weights, 1, 0, c), ops::slice(tape, weights, 1, c, c)};
}

template <typename T>
SpatialAttention<T>::SpatialAttention(ParameterStore<T>& store, const std::string& name, const AttentionConfig& cfg)
    : kind_(cfg.spatial()), sigmoid_(kind_ != SpatialKind::theta_plus || cfg.theta_plus_sigmoid) {
  const int q = cfg.squeeze_width();
  constexpr auto replicate = ops::Padding::replicate;
  switch (kind_) {
    case SpatialKind::alpha:
      reduce_ = Conv2d<T>(store, name + ".reduce", 2, 2, 3, 2, 1, false, replicate);
      excite_ = Conv2d<T>(store, name + ".excite", 2, 2, 1, 1, 0, false);
      break;
    case SpatialKind::theta:
      squeeze_spatial_.emplace(store, name + ".squeeze_spatial", cfg.channels, q, 1, 1, 0, false);
      squeeze_semantic_.emplace(store, name + ".squeeze_semantic", cfg.channels, q, 1, 1, 0, false);
      reduce_ = Conv2d<T>(store, name + ".reduce", 2 * q, 2, 3, 2, 1, false, replicate);
      excite_ = Conv2d<T>(store, name + ".excite", 2, 2, 1, 1, 0, false);
      break;
    case SpatialKind::theta_plus:
      squeeze_spatial_.emplace(store, name + ".squeeze_spatial", cfg.channels, q, 1, 1, 0, false);
      squeeze_semantic_.emplace(store, name + ".squeeze_semantic", cfg.channels, q, 1, 1, 0, false);
      reduce_ = Conv2d<T>(store, name + ".reduce", 2 * q, 2 * q, 3, 2, 1, false, replicate);
      expand_.emplace(store, name + ".expand", 2 * q, 2 * q, 3, 2, 1, false);
      excite_ = Conv2d<T>(store, name + ".excite", 2 * q, 2, 1, 1, 0, false);
      break;
    case SpatialKind::none:
      throw ConfigError("spatial attention requested for a variant without SCA");
  }
  if (sigmoid_) bn_.emplace(store, name + ".bn", 2);
}

template <typename T>
std::pair<Var<T>, Var<T>> SpatialAttention<T>::squeeze(Context<T>& ctx, const Var<T>& lateral,
                                                       const Var<T>& up) const {
  if (!squeeze_spatial_) throw ConfigError("parameter-free SCA has no parametric squeeze");
  return {(*squeeze_spatial_)(ctx, lateral), (*squeeze_semantic_)(ctx, up)};
}

template <typename T>
std::pair<Var<T>, Var<T>> SpatialAttention<T>::operator()(Context<T>& ctx, const Var<T>& lateral,
                                                           const Var<T>& up) const {
  if (lateral->value.shape() != up->value.shape()) {
    throw ShapeError("spatial attention: flows differ, " + lateral->value.shape().str() + " vs " +
                     up->value.shape().str());
  }
  auto& tape = ctx.tape;
  const HW level{lateral->value.dim(2), lateral->value.dim(3)};
  Var<T> squeezed;
  if (kind_ == SpatialKind::alpha) {
    squeezed = ops::concat(tape, {ops::channel_avg_pool(tape, lateral), ops::channel_avg_pool(tape, up)}, 1);
  } else {
    auto [xs, us] = squeeze(ctx, lateral, up);
    squeezed = ops::concat(tape, {xs, us}, 1);
  }
  return kind_ == SpatialKind::theta_plus ? excite_theta_plus(ctx, squeezed, level)
                                          : excite_alpha(ctx, squeezed, level);
}

template <typename T>
std::pair<Var<T>, Var<T>> SpatialAttention<T>::excite_alpha(Context<T>& ctx, const Var<T>& squeezed,
                                                            HW level) const {
  auto& tape = ctx.tape;
  auto eps = ops::relu(tape, reduce_(ctx, squeezed));
  auto e = ops::bilinear_resize(tape, eps, level.h, level.w);
  auto xi = ops::sigmoid(tape, (*bn_)(ctx, excite_(ctx, e)));
  return {ops::slice(tape, xi, 1, 0, 1), ops::slice(tape, xi, 1, 1, 1)};
}

template <typename T>
std::pair<Var<T>, Var<T>> SpatialAttention<T>::excite_theta_plus(Context<T>& ctx, const Var<T>& squeezed,
                                                                 HW level) const {
  auto& tape = ctx.tape;
  auto eps = ops::relu(tape, reduce_(ctx, squeezed));
  auto e = (*expand_)(ctx, eps, level);
  auto xi = excite_(ctx, e);
  if (sigmoid_) xi = ops::sigmoid(tape, (*bn_)(ctx, xi));
  return {ops::slice(tape, xi, 1, 0, 1), ops::slice(tape, xi, 1, 1, 1)};
}

template <typename T>
std::uint64_t SpatialAttention<T>::macs(HW level) const {
  std::uint64_t total = 0;
  if (squeeze_spatial_) total += squeeze_spatial_->macs(level) + squeeze_semantic_->macs(level);
  total += reduce_.macs(level);
  const HW reduced = reduce_.out_hw(level);
  if (expand_) total += expand_->macs(reduced);
  total += excite_.macs(level);
  return total;
}

template <typename T>
Var<T> ca_scale(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up, const Var<T>& s_spa, const Var<T>& s_sem) {
  auto& tape = ctx.tape;
  return ops::add(tape, ops::mul(tape, s_spa, lateral), ops::mul(tape, s_sem, up));
}

template <typename T>
Var<T> csca_combine(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up, const Var<T>& s_spa,
                    const Var<T>& s_sem, const Var<T>& xi_spa, const Var<T>& xi_sem, const Conv2d<T>& post_spa,
                    const Conv2d<T>& post_sem) {
  auto& tape = ctx.tape;
  auto m_spa = post_spa(ctx, ops::mul(tape, xi_spa, s_spa));
  auto m_sem = post_sem(ctx, ops::mul(tape, xi_sem, s_sem));
  return ops::add(tape, ops::mul(tape, m_spa, lateral), ops::mul(tape, m_sem, up));
}

template <typename T>
AttentionFusion<T>::AttentionFusion(ParameterStore<T>& store, const std::string& name, const AttentionConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  if (cfg.has_ca()) ca_.emplace(store, name + ".ca", cfg);
  if (cfg.has_sca()) sca_.emplace(store, name + ".sca", cfg);
  if (cfg.has_post()) {
    post_spa_.emplace(store, name + ".post_spatial", cfg.channels, cfg.channels, 1, 1, 0, false);
    post_sem_.emplace(store, name + ".post_semantic", cfg.channels, cfg.channels, 1, 1, 0, false);
  }
}

template <typename T>
void AttentionFusion<T>::set_identity_post() {
  for (auto* conv : {post_spa_ ? &*post_spa_ : nullptr, post_sem_ ? &*post_sem_ : nullptr}) {
    if (conv == nullptr) continue;
    Tensor<T>& w = conv->weight()->value;
    w.fill(T(0));
    for (int c = 0; c < cfg_.channels; ++c) w.at(c, c, 0, 0) = T(1);
  }
}

template <typename T>
Var<T> AttentionFusion<T>::operator()(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up,
                                      AttentionProbe<T>* probe) const {
  if (lateral->value.shape() != up->value.shape()) {
    throw ShapeError("fusion: lateral " + lateral->value.shape().str() + " vs upsampled " + up->value.shape().str());
  }
  if (!ca_ && !sca_) return fpn_fuse(ctx, lateral, up);
  const Shape& s = lateral->value.shape();
  Var<T> s_spa, s_sem, xi_spa, xi_sem;
  if (ca_) {
    if (unit_masks_) {
      s_spa = s_sem = make_var(Tensor<T>(Shape{s[0], s[1], 1, 1}, T(1)));
    } else {
      std::tie(s_spa, s_sem) = (*ca_)(ctx, lateral, up);
    }
  }
  if (sca_) {
    if (unit_masks_) {
      xi_spa = xi_sem = make_var(Tensor<T>(Shape{s[0], 1, s[2], s[3]}, T(1)));
    } else {
      std::tie(xi_spa, xi_sem) = (*sca_)(ctx, lateral, up);
    }
  }
  if (probe) {
    if (ca_) {
      probe->s_spa = s_spa->value;
      probe->s_sem = s_sem->value;
    }
    if (sca_) {
      probe->xi_spa = xi_spa->value;
      probe->xi_sem = xi_sem->value;
    }
  }
  if (ca_ && sca_) return csca_combine(ctx, lateral, up, s_spa, s_sem, xi_spa, xi_sem, *post_spa_, *post_sem_);
  if (ca_) return ca_scale(ctx, lateral, up, s_spa, s_sem);
  return ca_scale(ctx, lateral, up, xi_spa, xi_sem);
}

template <typename T>
std::uint64_t AttentionFusion<T>::macs(HW level) const {
  std::uint64_t total = 0;
  if (ca_) total += ca_->macs();
  if (sca_) total += sca_->macs(level);
  if (post_spa_) total += post_spa_->macs(level) + post_sem_->macs(level);
  return total;
}

template class CompetitiveAttention<float>;
template class CompetitiveAttention<double>;
template class SpatialAttention<float>;
template class SpatialAttention<double>;
template class AttentionFusion<float>;
template class AttentionFusion<double>;

#define APN_INSTANTIATE_ATTENTION(T)                                                                           \
  template Var<T> ca_scale<T>(Context<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);       \
  template Var<T> csca_combine<T>(Context<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,    \
                                  const Var<T>&, const Var<T>&, const Conv2d<T>&, const Conv2d<T>&);

APN_INSTANTIATE_ATTENTION(float)
APN_INSTANTIATE_ATTENTION(double)

}  // namespace apn
