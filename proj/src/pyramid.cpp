#include "apn/pyramid.hpp"

namespace apn {

void BackboneSpec::validate() const {
  if (stages.size() < 2) throw ConfigError("backbone needs at least 2 stages, got " + std::to_string(stages.size()));
  if (stem_kernel < 1 || stem_width < 1 || stem_stride < 1) throw ConfigError("stem kernel/width/stride must be >= 1");
  if (lateral_width < 1) throw ConfigError("lateral_width must be > 0");
  for (const auto& s : stages) {
    if (s.blocks < 1 || s.width < 1) throw ConfigError("stage blocks and width must be >= 1");
  }
}

void BackboneSpec::check_input(int h, int w) const {
  const int factor = stem_reduction() << (levels() - 1);
  if (h % factor != 0 || w % factor != 0) {
    throw ConfigError("input " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                      std::to_string(factor) + " (stem reduction x 2^(L-1))");
  }
}

BackboneSpec BackboneSpec::resnet18(int lateral_width) {
  BackboneSpec s;
  s.stages = {{2, 64}, {2, 128}, {2, 256}, {2, 512}};
  s.lateral_width = lateral_width;
  return s;
}

BackboneSpec BackboneSpec::resnet34(int lateral_width) {
  BackboneSpec s;
  s.stages = {{3, 64}, {4, 128}, {6, 256}, {3, 512}};
  s.lateral_width = lateral_width;
  return s;
}

template <typename T>
PreActBlock<T>::PreActBlock(ParameterStore<T>& store, const std::string& name, int in, int out, int stride,
                            ops::Padding padding)
    : bn1_(store, name + ".bn1", in),
      bn2_(store, name + ".bn2", out),
      conv1_(store, name + ".conv1", in, out, 3, stride, 1, false, padding),
      conv2_(store, name + ".conv2", out, out, 3, 1, 1, false, padding),
      project_(stride != 1 || in != out) {
  if (project_) shortcut_ = Conv2d<T>(store, name + ".shortcut", in, out, 1, stride, 0, false);
}

template <typename T>
Var<T> PreActBlock<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  auto& tape = ctx.tape;
  auto pre = ops::relu(tape, bn1_(ctx, x));
  auto skip = project_ ? shortcut_(ctx, pre) : x;
  auto h = conv1_(ctx, pre);
  h = conv2_(ctx, ops::relu(tape, bn2_(ctx, h)));
  return ops::add(tape, h, skip);
}

template <typename T>
std::uint64_t PreActBlock<T>::macs(HW in) const {
  const HW mid = conv1_.out_hw(in);
  std::uint64_t total = conv1_.macs(in) + conv2_.macs(mid);
  if (project_) total += shortcut_.macs(in);
  return total;
}

template <typename T>
Backbone<T>::Backbone(ParameterStore<T>& store, const BackboneSpec& spec)
    : spec_(spec),
      stem_(store, "backbone.stem.conv", 3, spec.stem_width, spec.stem_kernel, spec.stem_stride, spec.stem_kernel / 2,
            false, spec.padding),
      stem_bn_(store, "backbone.stem.bn", spec.stem_width) {
  spec.validate();
  int in = spec.stem_width;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    std::vector<PreActBlock<T>> blocks;
    const std::string prefix = "backbone.stage" + std::to_string(s + 1);
    for (int b = 0; b < spec.stages[s].blocks; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      blocks.emplace_back(store, prefix + ".block" + std::to_string(b), in, spec.stages[s].width, stride, spec.padding);
      in = spec.stages[s].width;
    }
    stages_.push_back(std::move(blocks));
  }
}

template <typename T>
std::vector<Var<T>> Backbone<T>::operator()(Context<T>& ctx, const Var<T>& x) const {
  const Shape& s = x->value.shape();
  if (s.rank() != 4 || s[1] != 3) throw ShapeError("backbone expects N x 3 x H x W input, got " + s.str());
  spec_.check_input(s[2], s[3]);
  auto h = ops::relu(ctx.tape, stem_bn_(ctx, stem_(ctx, x)));
  if (spec_.stem_pool) h = ops::max_pool2d(ctx.tape, h, 3, 2, 1);
  std::vector<Var<T>> levels;
  for (const auto& stage : stages_) {
    for (const auto& block : stage) h = block(ctx, h);
    levels.push_back(h);
  }
  return levels;
}

template <typename T>
std::vector<ModuleCost> Backbone<T>::macs(HW input, std::vector<HW>& level_sizes) const {
  std::vector<ModuleCost> costs;
  costs.push_back({"backbone.stem", stem_.macs(input)});
  HW hw = stem_.out_hw(input);
  if (spec_.stem_pool) hw = {(hw.h + 2 - 3) / 2 + 1, (hw.w + 2 - 3) / 2 + 1};
  level_sizes.clear();
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    std::uint64_t total = 0;
    for (const auto& block : stages_[s]) {
      total += block.macs(hw);
      hw = block.out_hw(hw);
    }
    costs.push_back({"backbone.stage" + std::to_string(s + 1), total});
    level_sizes.push_back(hw);
  }
  return costs;
}

template <typename T>
Var<T> lateral(Context<T>& ctx, const Var<T>& x, const Conv2d<T>& conv) {
  return conv(ctx, x);
}

template <typename T>
Var<T> top_down_upsample(Context<T>& ctx, const Var<T>& p_above, HW target) {
  return ops::bilinear_resize(ctx.tape, p_above, target.h, target.w);
}

template <typename T>
Var<T> fpn_fuse(Context<T>& ctx, const Var<T>& lat, const Var<T>& up) {
  if (lat->value.shape() != up->value.shape()) {
    throw ShapeError("fpn_fuse: lateral " + lat->value.shape().str() + " vs upsampled " + up->value.shape().str());
  }
  return ops::add(ctx.tape, lat, up);
}

template <typename T>
Var<T> smooth(Context<T>& ctx, const Var<T>& fused, const Conv2d<T>& conv) {
  return conv(ctx, fused);
}

template class PreActBlock<float>;
template class PreActBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

#define APN_INSTANTIATE_PYRAMID(T)                                                   \
  template Var<T> lateral<T>(Context<T>&, const Var<T>&, const Conv2d<T>&);         \
  template Var<T> top_down_upsample<T>(Context<T>&, const Var<T>&, HW);              \
  template Var<T> fpn_fuse<T>(Context<T>&, const Var<T>&, const Var<T>&);           \
  template Var<T> smooth<T>(Context<T>&, const Var<T>&, const Conv2d<T>&);

APN_INSTANTIATE_PYRAMID(float)
APN_INSTANTIATE_PYRAMID(double)

}  // namespace apn
