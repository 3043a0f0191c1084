#pragma once

#include <string>
#include <vector>

#include "apn/nn.hpp"

namespace apn {

struct StageSpec {
  int blocks = 2;
  int width = 64;
};

/// Pre-activation ResNet bottom-up pathway plus pyramid width.
struct BackboneSpec {
  int stem_kernel = 7;
  int stem_width = 64;
  int stem_stride = 2;
  bool stem_pool = true;  // 3x3 max-pool, stride 2
  std::vector<StageSpec> stages{{2, 64}, {2, 128}, {2, 256}, {2, 512}};
  int lateral_width = 256;
  // Apply the 3x3 smoothing conv at the top level too (P_L = smooth(X'_L)).
  bool smooth_top = false;
  ops::Padding padding = ops::Padding::zeros;

  int levels() const { return static_cast<int>(stages.size()); }
  // Total downsampling from input to the first pyramid level.
  int stem_reduction() const { return stem_stride * (stem_pool ? 2 : 1); }
  void validate() const;
  // Throws ConfigError unless h and w are divisible by the total reduction.
  void check_input(int h, int w) const;

  static BackboneSpec resnet18(int lateral_width = 256);
  static BackboneSpec resnet34(int lateral_width = 256);
};

/// Per-level tensors of the pyramid, index 0 is level 1 (finest).
template <typename T>
struct PyramidFeatures {
  std::vector<Var<T>> x;        // stage outputs X_l
  std::vector<Var<T>> lateral;  // X'_l
  std::vector<Var<T>> up;       // U_l, null at the top level
  std::vector<Var<T>> fused;    // P'_l
  std::vector<Var<T>> out;      // P_l
};

/// Pre-activation basic block: BN-ReLU-conv3x3-BN-ReLU-conv3x3 plus an
/// identity or 1x1 projection shortcut taken after the first BN-ReLU.
template <typename T>
class PreActBlock {
 public:
  PreActBlock(ParameterStore<T>& store, const std::string& name, int in, int out, int stride, ops::Padding padding);
  Var<T> operator()(Context<T>& ctx, const Var<T>& x) const;
  HW out_hw(HW in) const { return conv1_.out_hw(in); }
  std::uint64_t macs(HW in) const;

 private:
  BatchNorm2d<T> bn1_, bn2_;
  Conv2d<T> conv1_, conv2_;
  bool project_ = false;
  Conv2d<T> shortcut_;
};

struct ModuleCost {
  std::string module;
  std::uint64_t macs;
};

template <typename T>
class Backbone {
 public:
  Backbone(ParameterStore<T>& store, const BackboneSpec& spec);

  // Returns X_1..X_L.
  std::vector<Var<T>> operator()(Context<T>& ctx, const Var<T>& x) const;
  // Per-stage multiply-adds and the spatial size of every X_l.
  std::vector<ModuleCost> macs(HW input, std::vector<HW>& level_sizes) const;

 private:
  BackboneSpec spec_;
  Conv2d<T> stem_;
  BatchNorm2d<T> stem_bn_;
  std::vector<std::vector<PreActBlock<T>>> stages_;
};

/// Lateral connection: a plain 1x1 conv from C_l to the pyramid width.
template <typename T>
Var<T> lateral(Context<T>& ctx, const Var<T>& x, const Conv2d<T>& conv);

/// Top-down upsampling of P_{l+1} to the lateral's exact spatial size.
template <typename T>
Var<T> top_down_upsample(Context<T>& ctx, const Var<T>& p_above, HW target);

/// Baseline fusion P'_l = X'_l + U_l.
template <typename T>
Var<T> fpn_fuse(Context<T>& ctx, const Var<T>& lateral, const Var<T>& up);

/// 3x3 anti-aliasing conv P_l = conv(P'_l).
template <typename T>
Var<T> smooth(Context<T>& ctx, const Var<T>& fused, const Conv2d<T>& conv);

extern template class PreActBlock<float>;
extern template class PreActBlock<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace apn
