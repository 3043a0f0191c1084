#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "apn/attention.hpp"
#include "apn/pyramid.hpp"

namespace apn {

/// Full network description: backbone, pyramid width, attention and head.
struct ModelSpec {
  std::string arch = "custom";
  BackboneSpec backbone;
  AttentionConfig attention;  // channels follow backbone.lateral_width
  int num_classes = 98;

  int levels() const { return backbone.levels(); }
  // Attention config of one fused level (levels 1..L-1).
  AttentionConfig level_attention() const;
  // Throws ConfigError on any invalid field; returns non-fatal warnings.
  std::vector<std::string> validate() const;
};

// Named architectures: fpn18, apn-ca18, apn-sca18, apn-csca18,
// apn-csca-theta18, apn-csca-theta-plus18, the same set with 34, and toy.
ModelSpec preset(std::string_view arch);
std::vector<std::string> preset_names();

struct ModuleComplexity {
  std::string module;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

/// Parameter and multiply-add totals with their per-module breakdown.
struct ComplexityReport {
  std::string arch;
  HW input{0, 0};
  std::vector<ModuleComplexity> modules;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;

  std::string text() const;
  std::string json() const;
};

template <typename T>
class ApnModel {
 public:
  ApnModel(const ModelSpec& spec, std::uint64_t seed, bool random_init = true);
  ApnModel(const ApnModel&) = delete;
  ApnModel& operator=(const ApnModel&) = delete;

  // Logits N x K. `features` receives every pyramid tensor; `probes` one entry
  // per fused level (index 0 is level 1).
  Var<T> forward(Context<T>& ctx, const Var<T>& x, PyramidFeatures<T>* features = nullptr,
                 std::vector<AttentionProbe<T>>* probes = nullptr) const;

  ComplexityReport complexity(HW input) const;

  const ModelSpec& spec() const { return spec_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  AttentionFusion<T>& fusion(int level) { return fusions_.at(static_cast<std::size_t>(level)); }

  void force_unit_masks(bool on);
  void set_identity_post();

 private:
  ModelSpec spec_;
  ParameterStore<T> store_;
  Backbone<T> backbone_;
  std::vector<Conv2d<T>> laterals_;
  std::vector<Conv2d<T>> smooths_;  // level L entry unused unless smooth_top
  std::vector<AttentionFusion<T>> fusions_;
  Linear<T> fc_;
};

// Builds the model once (float storage) and reports its complexity.
ComplexityReport count_complexity(const ModelSpec& spec, HW input);

extern template class ApnModel<float>;
extern template class ApnModel<double>;

}  // namespace apn
