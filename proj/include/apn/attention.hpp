#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "apn/nn.hpp"
#include "apn/pyramid.hpp"

namespace apn {

enum class AttentionVariant {
  none,
  ca,
  sca_alpha,
  sca_theta,
  sca_theta_plus,
  csca_alpha,
  csca_theta,
  csca_theta_plus,
};

std::string_view variant_name(AttentionVariant v);
// Accepts the CLI names (none, ca, sca, sca-theta, sca-theta-plus, csca,
// csca-theta, csca-theta-plus) and the enum spellings (sca_alpha, ...).
AttentionVariant parse_variant(std::string_view name);

enum class SpatialKind { none, alpha, theta, theta_plus };

/// Attention placement and reduction ratios for one pyramid.
struct AttentionConfig {
  AttentionVariant variant = AttentionVariant::csca_alpha;
  int t = 16;        // CA excitation width 2C / t
  int r = 8;         // parametric SCA squeeze width C / r
  int channels = 256;
  // Sigmoid (after BN) on the fully-parametric excitation. Off gives the
  // linear mask xi = conv1x1(e).
  bool theta_plus_sigmoid = true;

  bool has_ca() const;
  SpatialKind spatial() const;
  bool has_sca() const { return spatial() != SpatialKind::none; }
  bool has_post() const;  // CSCA 1x1 refinement convs

  int ca_hidden() const { return (2 * channels) / t; }
  int squeeze_width() const { return channels / r; }

  // Throws ConfigError when a reduced width floors to zero; returns warnings
  // for ratios that do not divide evenly.
  std::vector<std::string> validate() const;
};

/// Competitive attention: joint channel gating of the spatial (lateral) and
/// semantic (upsampled) flows.
template <typename T>
class CompetitiveAttention {
 public:
  CompetitiveAttention(ParameterStore<T>& store, const std::string& name, const AttentionConfig& cfg);

  // Returns (S_spa, S_sem), each N x C x 1 x 1 in (0, 1).
  std::pair<Var<T>, Var<T>> operator()(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up) const;
  std::uint64_t macs() const { return fc1_.macs() + fc2_.macs(); }

  Linear<T>& fc1() { return fc1_; }
  Linear<T>& fc2() { return fc2_; }

 private:
  int channels_;
  Linear<T> fc1_, fc2_;
  BatchNorm2d<T> bn_;
};

/// Spatial collaborative attention in its three forms. Returns two
/// single-channel masks (xi_1 for the spatial flow, xi_2 for the semantic flow)
/// at the level's full resolution.
template <typename T>
class SpatialAttention {
 public:
  SpatialAttention(ParameterStore<T>& store, const std::string& name, const AttentionConfig& cfg);

  std::pair<Var<T>, Var<T>> operator()(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up) const;

  // Parametric channel squeeze (theta, theta+): two 1x1 convs C -> C/r.
  std::pair<Var<T>, Var<T>> squeeze(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up) const;
  std::uint64_t macs(HW level) const;
  SpatialKind kind() const { return kind_; }

 private:
  std::pair<Var<T>, Var<T>> excite_alpha(Context<T>& ctx, const Var<T>& squeezed, HW level) const;
  std::pair<Var<T>, Var<T>> excite_theta_plus(Context<T>& ctx, const Var<T>& squeezed, HW level) const;

  SpatialKind kind_;
  bool sigmoid_;
  std::optional<Conv2d<T>> squeeze_spatial_, squeeze_semantic_;
  Conv2d<T> reduce_;  // 3x3 stride 2
  std::optional<ConvTranspose2d<T>> expand_;
  Conv2d<T> excite_;  // 1x1 -> 2
  std::optional<BatchNorm2d<T>> bn_;
};

/// P' = S_spa * X' + S_sem * U with N x C x 1 x 1 channel weights.
template <typename T>
Var<T> ca_scale(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up, const Var<T>& s_spa, const Var<T>& s_sem);

/// M = xi * S broadcast to N x C x H x W, refined by the two 1x1 convs, then
/// P' = M_spa * X' + M_sem * U.
template <typename T>
Var<T> csca_combine(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up, const Var<T>& s_spa,
                    const Var<T>& s_sem, const Var<T>& xi_spa, const Var<T>& xi_sem, const Conv2d<T>& post_spa,
                    const Conv2d<T>& post_sem);

/// Attention activations captured for export.
template <typename T>
struct AttentionProbe {
  Tensor<T> s_spa, s_sem;    // N x C x 1 x 1, empty without CA
  Tensor<T> xi_spa, xi_sem;  // N x 1 x H x W, empty without SCA
};

/// Fusion of one pyramid level: replaces P' = X' + U according to the variant.
template <typename T>
class AttentionFusion {
 public:
  AttentionFusion(ParameterStore<T>& store, const std::string& name, const AttentionConfig& cfg);

  Var<T> operator()(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up,
                    AttentionProbe<T>* probe = nullptr) const;

  // Replace every attention mask with ones (reduction checks).
  void force_unit_masks(bool on) { unit_masks_ = on; }
  // Set the CSCA refinement convs to identity with zero bias.
  void set_identity_post();

  std::uint64_t macs(HW level) const;
  const AttentionConfig& config() const { return cfg_; }
  CompetitiveAttention<T>* ca() { return ca_ ? &*ca_ : nullptr; }
  SpatialAttention<T>* sca() { return sca_ ? &*sca_ : nullptr; }

 private:
  AttentionConfig cfg_;
  bool unit_masks_ = false;
  std::optional<CompetitiveAttention<T>> ca_;
  std::optional<SpatialAttention<T>> sca_;
  std::optional<Conv2d<T>> post_spa_, post_sem_;
};

/// Closed-form parameter count of one level's attention.
std::uint64_t attention_param_count(const AttentionConfig& cfg);

extern template class CompetitiveAttention<float>;
extern template class CompetitiveAttention<double>;
extern template class SpatialAttention<float>;
extern template class SpatialAttention<double>;
extern template class AttentionFusion<float>;
extern template class AttentionFusion<double>;

}  // namespace apn
