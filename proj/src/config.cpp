#include "apn/config.hpp"

#include <fstream>
#include <set>

namespace apn {

using nlohmann::json;
using nlohmann::ordered_json;

ops::Padding parse_padding(std::string_view name) {
  if (name == "zeros") return ops::Padding::zeros;
  if (name == "replicate") return ops::Padding::replicate;
  throw ConfigError("unknown padding '" + std::string(name) + "' (valid: zeros, replicate)");
}

namespace {

const char* padding_name(ops::Padding p) { return p == ops::Padding::zeros ? "zeros" : "replicate"; }

// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  Fields(const Fields&) = delete;

  // Call after every read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + "." + key + ": unknown key");
    }
  }

  template <typename T>
  void read(const std::string& key, T& dst) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ConfigError("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("expected a string");
      }
      dst = it->get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_attention(const json& j, AttentionConfig& a, const std::string& path) {
  Fields f(j, path);
  std::string variant(variant_name(a.variant));
  f.read("variant", variant);
  a.variant = parse_variant(variant);
  f.read("t", a.t);
  f.read("r", a.r);
  f.read("theta_plus_sigmoid", a.theta_plus_sigmoid);
  f.finish();
}

void parse_model(const json& j, ModelSpec& m) {
  Fields f(j, "model");
  auto& b = m.backbone;
  f.read("stem_kernel", b.stem_kernel);
  f.read("stem_width", b.stem_width);
  f.read("stem_stride", b.stem_stride);
  f.read("stem_pool", b.stem_pool);
  if (const json* stages = f.child("stages")) {
    if (!stages->is_array()) throw ConfigError("model.stages: expected [[blocks, width], ...]");
    b.stages.clear();
    for (const auto& s : *stages) {
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
        throw ConfigError("model.stages: each stage is [blocks, width]");
      }
      b.stages.push_back({s[0].get<int>(), s[1].get<int>()});
    }
  }
  f.read("lateral_width", b.lateral_width);
  f.read("smooth_top", b.smooth_top);
  std::string padding = padding_name(b.padding);
  f.read("padding", padding);
  b.padding = parse_padding(padding);
  if (const json* a = f.child("attention")) parse_attention(*a, m.attention, f.path("attention"));
  f.read("num_classes", m.num_classes);
  f.finish();
}

void parse_train(const json& j, TrainConfig& t) {
  Fields f(j, "train");
  f.read("lr0", t.lr0);
  f.read("lr_decay_epochs", t.lr_decay_epochs);
  f.read("lr_decay_factor", t.lr_decay_factor);
  f.read("momentum", t.momentum);
  f.read("weight_decay", t.weight_decay);
  f.read("batch_size", t.batch_size);
  f.read("epochs", t.epochs);
  f.read("augment", t.augment);
  f.read("augment_pad", t.augment_pad);
  f.read("eval_batch_size", t.eval_batch_size);
  f.finish();
}

void parse_data(const json& j, DataConfig& d) {
  Fields f(j, "data");
  f.read("train", d.train_dir);
  f.read("val", d.val_dir);
  if (const json* s = f.child("synthetic")) {
    SyntheticData syn = d.synthetic.value_or(SyntheticData{});
    Fields g(*s, "data.synthetic");
    g.read("image_size", syn.spec.image_size);
    g.read("species", syn.spec.species);
    g.read("classes_per_species", syn.spec.classes_per_species);
    g.read("train_per_class", syn.train_per_class);
    g.read("val_per_class", syn.val_per_class);
    g.read("noise", syn.spec.noise);
    g.read("texture_contrast", syn.spec.texture_contrast);
    g.read("clutter", syn.spec.clutter);
    g.read("seed", syn.seed);
    g.finish();
    d.synthetic = syn;
  }
  f.finish();
  if (!d.train_dir.empty()) d.synthetic.reset();
}

}  // namespace

RunConfig default_run_config(std::string_view arch) {
  RunConfig cfg;
  cfg.model = preset(arch);
  if (arch == "toy" || arch == "toy-fpn") {
    cfg.input_size = 32;
    cfg.train.lr0 = 0.02;
    cfg.train.lr_decay_epochs = {100, 150};
    cfg.train.epochs = 200;
    cfg.train.batch_size = 16;
    cfg.train.eval_batch_size = 64;
    SyntheticData syn;
    syn.spec.noise = 0.25;
    syn.spec.texture_contrast = 0.2;
    syn.spec.clutter = true;
    cfg.data.synthetic = syn;
    cfg.output = "toy-run";
  }
  return cfg;
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  std::string arch = "toy";
  if (auto it = j.find("arch"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("config.arch: expected a string");
    arch = it->get<std::string>();
  }
  RunConfig cfg = default_run_config(arch);
  Fields f(j, "config");
  f.read("arch", arch);
  if (const json* m = f.child("model")) parse_model(*m, cfg.model);
  if (const json* t = f.child("train")) parse_train(*t, cfg.train);
  if (const json* d = f.child("data")) parse_data(*d, cfg.data);
  f.read("seed", cfg.seed);
  f.read("output", cfg.output);
  f.read("input_size", cfg.input_size);
  f.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  RunConfig cfg = parse_run_config(j);
  cfg.validate();
  return cfg;
}

std::vector<std::string> RunConfig::validate() const {
  auto warnings = model.validate();
  train.validate();
  model.backbone.check_input(input_size, input_size);
  if (data.synthetic) {
    data.synthetic->spec.validate();
    if (data.synthetic->train_per_class < 1 || data.synthetic->val_per_class < 1) {
      throw ConfigError("data.synthetic: train_per_class and val_per_class must be >= 1");
    }
    if (data.synthetic->spec.image_size != input_size) {
      throw ConfigError("data.synthetic.image_size " + std::to_string(data.synthetic->spec.image_size) +
                        " differs from input_size " + std::to_string(input_size));
    }
    if (data.synthetic->spec.num_classes() > model.num_classes) {
      throw ConfigError("synthetic data has " + std::to_string(data.synthetic->spec.num_classes()) +
                        " classes, model.num_classes is " + std::to_string(model.num_classes));
    }
  } else if (!data.train_dir.empty() && data.val_dir.empty()) {
    throw ConfigError("data.val is required with data.train");
  }
  return warnings;
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["arch"] = model.arch;
  ordered_json stages = ordered_json::array();
  for (const auto& s : model.backbone.stages) stages.push_back({s.blocks, s.width});
  const auto& b = model.backbone;
  j["model"] = {
      {"stem_kernel", b.stem_kernel},
      {"stem_width", b.stem_width},
      {"stem_stride", b.stem_stride},
      {"stem_pool", b.stem_pool},
      {"stages", stages},
      {"lateral_width", b.lateral_width},
      {"smooth_top", b.smooth_top},
      {"padding", padding_name(b.padding)},
      {"attention",
       {{"variant", std::string(variant_name(model.attention.variant))},
        {"t", model.attention.t},
        {"r", model.attention.r},
        {"theta_plus_sigmoid", model.attention.theta_plus_sigmoid}}},
      {"num_classes", model.num_classes},
  };
  j["train"] = {
      {"lr0", train.lr0},
      {"lr_decay_epochs", train.lr_decay_epochs},
      {"lr_decay_factor", train.lr_decay_factor},
      {"momentum", train.momentum},
      {"weight_decay", train.weight_decay},
      {"batch_size", train.batch_size},
      {"epochs", train.epochs},
      {"augment", train.augment},
      {"augment_pad", train.augment_pad},
      {"eval_batch_size", train.eval_batch_size},
  };
  ordered_json data_j = ordered_json::object();
  if (!data.train_dir.empty()) data_j["train"] = data.train_dir;
  if (!data.val_dir.empty()) data_j["val"] = data.val_dir;
  if (data.synthetic) {
    const auto& s = *data.synthetic;
    data_j["synthetic"] = {
        {"image_size", s.spec.image_size},
        {"species", s.spec.species},
        {"classes_per_species", s.spec.classes_per_species},
        {"train_per_class", s.train_per_class},
        {"val_per_class", s.val_per_class},
        {"noise", s.spec.noise},
        {"texture_contrast", s.spec.texture_contrast},
        {"clutter", s.spec.clutter},
        {"seed", s.seed},
    };
  }
  j["data"] = data_j;
  j["seed"] = seed;
  j["output"] = output;
  j["input_size"] = input_size;
  return j;
}

std::pair<Dataset, Dataset> load_data(const DataConfig& data) {
  if (!data.train_dir.empty()) return {read_dataset(data.train_dir), read_dataset(data.val_dir)};
  if (!data.synthetic) throw ConfigError("config names no dataset (data.train/data.val or data.synthetic)");
  const auto& s = *data.synthetic;
  const Rng root(s.seed);
  SyntheticSpec spec = s.spec;
  spec.samples_per_class = s.train_per_class;
  Dataset train = synth_generate(spec, root.split("train").next_u64());
  spec.samples_per_class = s.val_per_class;
  Dataset val = synth_generate(spec, root.split("val").next_u64());
  return {std::move(train), std::move(val)};
}

}  // namespace apn
