#include "apn/model.hpp"

#include <cstdio>
#include <json.hpp>

namespace apn {

AttentionConfig ModelSpec::level_attention() const {
  AttentionConfig cfg = attention;
  cfg.channels = backbone.lateral_width;
  return cfg;
}

std::vector<std::string> ModelSpec::validate() const {
  backbone.validate();
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  return level_attention().validate();
}

namespace {

constexpr AttentionVariant kAllVariants[] = {
    AttentionVariant::none,          AttentionVariant::ca,         AttentionVariant::sca_alpha,
    AttentionVariant::sca_theta,     AttentionVariant::sca_theta_plus, AttentionVariant::csca_alpha,
    AttentionVariant::csca_theta,    AttentionVariant::csca_theta_plus,
};

std::string preset_name(AttentionVariant v, int depth) {
  if (v == AttentionVariant::none) return "fpn" + std::to_string(depth);
  return "apn-" + std::string(variant_name(v)) + std::to_string(depth);
}

ModelSpec toy_spec() {
  ModelSpec s;
  s.arch = "toy";
  s.backbone.stem_kernel = 3;
  s.backbone.stem_width = 8;
  s.backbone.stem_stride = 2;
  s.backbone.stem_pool = true;
  s.backbone.stages = {{1, 8}, {1, 16}};
  s.backbone.lateral_width = 8;
  s.backbone.padding = ops::Padding::replicate;
  s.attention.variant = AttentionVariant::csca_alpha;
  s.attention.t = 2;
  s.attention.r = 2;
  s.num_classes = 8;
  return s;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (int depth : {18, 34}) {
    for (auto v : kAllVariants) names.push_back(preset_name(v, depth));
  }
  names.push_back("toy");
  names.push_back("toy-fpn");
  return names;
}

ModelSpec preset(std::string_view arch) {
  if (arch == "toy") return toy_spec();
  if (arch == "toy-fpn") {
    ModelSpec s = toy_spec();
    s.arch = "toy-fpn";
    s.attention.variant = AttentionVariant::none;
    return s;
  }
  for (int depth : {18, 34}) {
    for (auto v : kAllVariants) {
      if (arch != preset_name(v, depth)) continue;
      ModelSpec s;
      s.arch = std::string(arch);
      s.backbone = depth == 18 ? BackboneSpec::resnet18() : BackboneSpec::resnet34();
      s.attention.variant = v;
      return s;
    }
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown arch '" + std::string(arch) + "' (valid: " + valid + ")");
}

std::string ComplexityReport::text() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "arch %s, input %dx%d\n", arch.c_str(), input.h, input.w);
  out += line;
  std::snprintf(line, sizeof line, "%-32s %14s %16s\n", "module", "params", "macs");
  out += line;
  for (const auto& m : modules) {
    std::snprintf(line, sizeof line, "%-32s %14llu %16llu\n", m.module.c_str(),
                  static_cast<unsigned long long>(m.params), static_cast<unsigned long long>(m.macs));
    out += line;
  }
  std::snprintf(line, sizeof line, "%-32s %14llu %16llu\n", "total", static_cast<unsigned long long>(total_params),
                static_cast<unsigned long long>(total_macs));
  out += line;
  std::snprintf(line, sizeof line, "params %.2fM, FLOPs (multiply-adds) %.3e\n", total_params / 1e6,
                static_cast<double>(total_macs));
  out += line;
  return out;
}

std::string ComplexityReport::json() const {
  nlohmann::ordered_json j;
  j["arch"] = arch;
  j["input"] = {input.h, input.w};
  j["total_params"] = total_params;
  j["total_flops"] = total_macs;
  auto& mods = j["modules"] = nlohmann::ordered_json::array();
  for (const auto& m : modules) mods.push_back({{"module", m.module}, {"params", m.params}, {"flops", m.macs}});
  return j.dump(2);
}

template <typename T>
ApnModel<T>::ApnModel(const ModelSpec& spec, std::uint64_t seed, bool random_init)
    : spec_(spec), store_(seed, random_init), backbone_(store_, spec.backbone) {
  spec_.validate();
  const int levels = spec_.levels();
  const int c = spec_.backbone.lateral_width;
  const auto padding = spec_.backbone.padding;
  const AttentionConfig att = spec_.level_attention();
  for (int l = 0; l < levels; ++l) {
    const std::string prefix = "pyramid.level" + std::to_string(l + 1);
    laterals_.emplace_back(store_, prefix + ".lateral", spec_.backbone.stages[l].width, c, 1, 1, 0, true);
    const bool top = l == levels - 1;
    if (!top || spec_.backbone.smooth_top) {
      smooths_.emplace_back(store_, prefix + ".smooth", c, c, 3, 1, 1, true, padding);
    } else {
      smooths_.emplace_back();
    }
    if (!top) fusions_.emplace_back(store_, prefix + ".attention", att);
  }
  fc_ = Linear<T>(store_, "head.fc", levels * c, spec_.num_classes, true, Init::classifier);
}

template <typename T>
Var<T> ApnModel<T>::forward(Context<T>& ctx, const Var<T>& x, PyramidFeatures<T>* features,
                            std::vector<AttentionProbe<T>>* probes) const {
  auto& tape = ctx.tape;
  const int levels = spec_.levels();
  const auto L = static_cast<std::size_t>(levels);
  PyramidFeatures<T> f;
  f.x = backbone_(ctx, x);
  f.lateral.resize(L);
  f.up.resize(L);
  f.fused.resize(L);
  f.out.resize(L);
  if (probes) probes->assign(L - 1, AttentionProbe<T>{});
  for (int l = levels - 1; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    f.lateral[i] = lateral(ctx, f.x[i], laterals_[i]);
    if (l == levels - 1) {
      f.fused[i] = f.lateral[i];
      f.out[i] = spec_.backbone.smooth_top ? smooth(ctx, f.fused[i], smooths_[i]) : f.fused[i];
      continue;
    }
    const HW target{f.lateral[i]->value.dim(2), f.lateral[i]->value.dim(3)};
    f.up[i] = top_down_upsample(ctx, f.out[i + 1], target);
    f.fused[i] = fusions_[i](ctx, f.lateral[i], f.up[i], probes ? &(*probes)[i] : nullptr);
    f.out[i] = smooth(ctx, f.fused[i], smooths_[i]);
  }
  std::vector<Var<T>> pooled;
  for (const auto& p : f.out) pooled.push_back(ops::global_avg_pool(tape, p));
  const int n = x->value.dim(0);
  auto vec = ops::reshape(tape, ops::concat(tape, std::span<const Var<T>>(pooled), 1),
                          Shape{n, levels * spec_.backbone.lateral_width});
  auto logits = fc_(ctx, vec);
  if (features) *features = std::move(f);
  return logits;
}

template <typename T>
ComplexityReport ApnModel<T>::complexity(HW input) const {
  ComplexityReport report;
  report.arch = spec_.arch;
  report.input = input;
  spec_.backbone.check_input(input.h, input.w);

  std::vector<HW> sizes;
  for (const auto& cost : backbone_.macs(input, sizes)) report.modules.push_back({cost.module, 0, cost.macs});
  const int levels = spec_.levels();
  for (int l = 0; l < levels; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const std::string prefix = "pyramid.level" + std::to_string(l + 1);
    report.modules.push_back({prefix + ".lateral", 0, laterals_[i].macs(sizes[i])});
    if (l < levels - 1) report.modules.push_back({prefix + ".attention", 0, fusions_[i].macs(sizes[i])});
    if (l < levels - 1 || spec_.backbone.smooth_top) {
      report.modules.push_back({prefix + ".smooth", 0, smooths_[i].macs(sizes[i])});
    }
  }
  report.modules.push_back({"head.fc", 0, fc_.macs()});

  // Attribute each parameter tensor to the longest matching module prefix.
  for (const auto& p : store_.params()) {
    ModuleComplexity* best = nullptr;
    for (auto& m : report.modules) {
      const std::string pre = m.module + ".";
      if (p.name.compare(0, pre.size(), pre) == 0 && (!best || m.module.size() > best->module.size())) best = &m;
    }
    if (!best) throw ConfigError("parameter '" + p.name + "' belongs to no reported module");
    best->params += p.var->value.size();
  }
  for (const auto& m : report.modules) {
    report.total_params += m.params;
    report.total_macs += m.macs;
  }
  return report;
}

template <typename T>
void ApnModel<T>::force_unit_masks(bool on) {
  for (auto& f : fusions_) f.force_unit_masks(on);
}

template <typename T>
void ApnModel<T>::set_identity_post() {
  for (auto& f : fusions_) f.set_identity_post();
}

ComplexityReport count_complexity(const ModelSpec& spec, HW input) {
  const ApnModel<float> model(spec, 0, false);
  return model.complexity(input);
}

template class ApnModel<float>;
template class ApnModel<double>;

}  // namespace apn
