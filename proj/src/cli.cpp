#include "apn/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "apn/checkpoint.hpp"
#include "apn/config.hpp"
#include "apn/corpus.hpp"
#include "apn/errors.hpp"
#include "apn/gradcheck.hpp"
#include "apn/train.hpp"

namespace apn {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// A failed check that is not an exception-worthy error.
struct VerificationFailure {
  std::string what;
};

struct CommonFlags {
  std::string config;
  std::string arch;
  std::string variant;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> input;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out = true) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--arch", f.arch, "named architecture (used without --config)");
  cmd->add_option("--variant", f.variant, "attention variant override");
  cmd->add_option("--seed", f.seed, "seed override");
  cmd->add_option("--input", f.input, "square input size override");
  if (with_out) cmd->add_option("--out", f.out, "output directory");
}

RunConfig resolve(const CommonFlags& f, std::ostream& err) {
  if (!f.config.empty() && !f.arch.empty()) {
    throw ConfigError("--arch conflicts with --config; set \"arch\" inside the config instead");
  }
  RunConfig cfg = f.config.empty() ? default_run_config(f.arch.empty() ? "toy" : f.arch) : load_run_config(f.config);
  if (!f.variant.empty()) cfg.model.attention.variant = parse_variant(f.variant);
  if (f.seed) cfg.seed = *f.seed;
  if (f.input) {
    cfg.input_size = *f.input;
    if (cfg.data.synthetic) cfg.data.synthetic->spec.image_size = *f.input;
  }
  if (!f.out.empty()) cfg.output = f.out;
  for (const auto& w : cfg.validate()) err << "warning: " << w << '\n';
  cfg.train.seed = cfg.seed;
  return cfg;
}

// Config saved next to a checkpoint by `apn train`, unless one is given.
RunConfig resolve_for_checkpoint(CommonFlags f, const std::string& checkpoint, std::ostream& err) {
  if (f.config.empty() && f.arch.empty()) {
    const fs::path saved = fs::path(checkpoint).parent_path() / "config.json";
    if (fs::exists(saved)) f.config = saved.string();
  }
  return resolve(f, err);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

// Report goes to `path`, or to `out` when no path is given.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

void check_dataset(const Dataset& d, const RunConfig& cfg, const char* split) {
  if (d.size() == 0) throw ConfigError(std::string(split) + " split is empty");
  if (d.channels != 3 || d.height != cfg.input_size || d.width != cfg.input_size) {
    throw ShapeError(std::string(split) + " images are " + std::to_string(d.channels) + "x" +
                     std::to_string(d.height) + "x" + std::to_string(d.width) + ", model expects 3x" +
                     std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
  }
  const int max_label = *std::max_element(d.fine.begin(), d.fine.end());
  if (max_label >= cfg.model.num_classes) {
    throw ConfigError(std::string(split) + " split has label " + std::to_string(max_label) +
                      " but model.num_classes is " + std::to_string(cfg.model.num_classes));
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- count

int cmd_count(const CommonFlags& flags, bool as_json, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(flags, err);
  const auto report = count_complexity(cfg.model, {cfg.input_size, cfg.input_size});
  out << (as_json ? report.json() + "\n" : report.text());
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& fault, bool ops_only, std::ostream& out) {
  set_backward_fault(fault);
  GradSuiteOptions opts;
  opts.include_e2e = !ops_only;
  std::vector<GradSuiteEntry> entries;
  try {
    entries = run_gradient_suite(opts);
  } catch (...) {
    set_backward_fault("");
    throw;
  }
  set_backward_fault("");

  const GradSuiteEntry* worst = nullptr;
  std::vector<std::string> failed;
  for (const auto& e : entries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-28s max_rel_err %.3e  tol %.0e  checked %zu  skipped %zu  %s\n",
                  e.end_to_end ? "e2e" : "op", e.name.c_str(), e.max_rel_err, e.tolerance, e.checked, e.skipped,
                  e.passed() ? "PASS" : "FAIL");
    out << line;
    if (!e.passed()) failed.push_back(e.name);
    if (!worst || e.max_rel_err / e.tolerance > worst->max_rel_err / worst->tolerance) worst = &e;
  }
  if (worst) out << "worst: " << worst->name << " " << fmt("%.3e", worst->max_rel_err) << '\n';
  if (failed.empty()) {
    out << "gradcheck: PASS (" << entries.size() << " checks)\n";
    return kExitOk;
  }
  std::string list;
  for (const auto& n : failed) list += (list.empty() ? "" : ", ") + n;
  throw VerificationFailure{"gradcheck failed: " + list};
}

// ---------------------------------------------------------------- train / eval

int cmd_train(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(flags, err);
  auto [train_set, val_set] = load_data(cfg.data);
  check_dataset(train_set, cfg, "train");
  check_dataset(val_set, cfg, "val");

  make_dir(cfg.output);
  const fs::path dir(cfg.output);
  write_text((dir / "config.json").string(), cfg.to_json().dump(2) + "\n");
  std::ofstream log(dir / "metrics.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write metrics log in '" + cfg.output + "'");

  ApnModel<float> model(cfg.model, cfg.seed);
  out << "train " << cfg.model.arch << " (" << variant_name(cfg.model.attention.variant) << "), "
      << model.store().param_count() << " params, " << train_set.size() << " train / " << val_set.size()
      << " val images, seed " << cfg.seed << '\n';
  const auto result = train(model, train_set, val_set, cfg.train, [&](const EpochLog& e) {
    log << e.json() << '\n';
    log.flush();
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  lr %.4g  loss %.4f  train %.4f  val %.4f  coarse %.4f%s\n", e.epoch,
                  e.lr, e.train_loss, e.train_top1, e.val_top1, e.val_coarse_top1, e.best ? "  *" : "");
    out << line;
  });
  if (!log) throw IoError("metrics log write failed in '" + cfg.output + "'");
  write_file((dir / "best.ckpt").string(), result.best_checkpoint);
  write_file((dir / "final.ckpt").string(), serialize_state(model.store().state()));
  out << "best epoch " << result.best_epoch << " val top1 " << fmt("%.4f", result.best_val_top1) << '\n';
  return kExitOk;
}

ordered_json metrics_json(const MetricsReport& m) {
  ordered_json j;
  j["top1"] = m.top1;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  ordered_json rows = ordered_json::array();
  for (int t = 0; t < m.num_classes; ++t) {
    ordered_json row = ordered_json::array();
    for (int p = 0; p < m.num_classes; ++p) row.push_back(m.at(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& split, std::ostream& out,
             std::ostream& err) {
  if (split != "train" && split != "val") throw ConfigError("--split must be train or val");
  const RunConfig cfg = resolve_for_checkpoint(flags, checkpoint, err);
  ApnModel<float> model(cfg.model, cfg.seed);
  load_checkpoint(model.store(), checkpoint);
  auto [train_set, val_set] = load_data(cfg.data);
  const Dataset& data = split == "train" ? train_set : val_set;
  check_dataset(data, cfg, split.c_str());
  const auto ev = evaluate(model, data, cfg.train.eval_batch_size);
  ordered_json j;
  j["split"] = split;
  j["images"] = data.size();
  j["loss"] = ev.loss;
  j["fine"] = metrics_json(ev.fine);
  j["coarse_top1"] = ev.coarse.top1;
  emit(flags.out.empty() ? "" : (fs::path(flags.out) / ("eval_" + split + ".json")).string(), j.dump() + "\n", out);
  return kExitOk;
}

// ---------------------------------------------------------------- export-masks

Tensor<float> image_tensor(const std::string& path, int size) {
  const PnmImage img = read_pnm(path);
  if (img.width != size || img.height != size) {
    throw ShapeError("image " + path + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     ", model input is " + std::to_string(size) + "x" + std::to_string(size));
  }
  Tensor<float> t(Shape{1, 3, size, size});
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    const int src = img.channels == 1 ? 0 : c;
    for (std::size_t i = 0; i < plane; ++i) {
      t.ptr()[c * plane + i] =
          static_cast<float>(img.samples[i * img.channels + src]) / static_cast<float>(img.maxval);
    }
  }
  return t;
}

void write_mask(const std::string& path, const Tensor<float>& mask) {
  const int h = mask.dim(2), w = mask.dim(3);
  std::vector<std::uint8_t> gray(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = std::clamp(static_cast<double>(mask.ptr()[i]), 0.0, 1.0);
    gray[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(path, w, h, gray);
}

int cmd_export_masks(const CommonFlags& flags, const std::string& checkpoint, const std::string& image,
                     std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_for_checkpoint(flags, checkpoint, err);
  ApnModel<float> model(cfg.model, cfg.seed);
  load_checkpoint(model.store(), checkpoint);
  const auto x = make_var(image_tensor(image, cfg.input_size));
  const std::string dir = flags.out.empty() ? "masks" : flags.out;
  make_dir(dir);

  Tape<float> tape(false);
  Context<float> ctx{tape, false};
  std::vector<AttentionProbe<float>> probes;
  model.forward(ctx, x, nullptr, &probes);

  std::ostringstream tsv;
  tsv << "level\tflow\tchannel\tweight\n";
  int files = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const int level = static_cast<int>(i) + 1;
    const auto& p = probes[i];
    const std::pair<const char*, const Tensor<float>*> masks[] = {{"spatial", &p.xi_spa}, {"semantic", &p.xi_sem}};
    for (const auto& [flow, m] : masks) {
      if (m->empty()) continue;
      write_mask((fs::path(dir) / ("level" + std::to_string(level) + "_" + flow + ".pgm")).string(), *m);
      ++files;
    }
    const std::pair<const char*, const Tensor<float>*> weights[] = {{"spatial", &p.s_spa}, {"semantic", &p.s_sem}};
    for (const auto& [flow, s] : weights) {
      for (std::size_t c = 0; c < s->size(); ++c) {
        tsv << level << '\t' << flow << '\t' << c << '\t' << fmt("%.9g", s->ptr()[c]) << '\n';
      }
    }
  }
  write_text((fs::path(dir) / "channel_weights.tsv").string(), tsv.str());
  out << "wrote " << files << " mask files and channel_weights.tsv to " << dir << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- corpus tools

int cmd_dedup(const std::vector<std::string>& images, const std::string& list, int threshold,
              const std::string& report, std::ostream& out, std::ostream& err) {
  std::vector<std::pair<std::string, std::string>> items;  // id, path
  if (!list.empty()) {
    for (const auto& row : read_tsv(list)) {
      if (row.size() != 2) throw IoError(list + ": each row needs id and path");
      items.emplace_back(row[0], row[1]);
    }
  }
  for (const auto& p : images) items.emplace_back(p, p);
  std::vector<HashedRecord> records;
  for (const auto& [id, path] : items) records.push_back({id, perceptual_hash(to_gray(read_pnm(path)))});
  const auto result = dedup(records, threshold);
  std::ostringstream tsv;
  tsv << "kept_id\tremoved_id\thamming\n";
  for (const auto& d : result.duplicates) tsv << d.kept_id << '\t' << d.removed_id << '\t' << d.hamming << '\n';
  emit(report, tsv.str(), out);
  err << "kept " << result.kept.size() << " of " << records.size() << " images\n";
  return kExitOk;
}

int cmd_reconcile(const std::string& path, const std::string& report, std::ostream& out) {
  std::ostringstream tsv;
  tsv << "image_id\toutcome\tlabel\n";
  for (const auto& row : read_tsv(path)) {
    if (row.empty()) continue;
    const std::vector<std::string> labels(row.begin() + 1, row.end());
    Reconciliation r;
    try {
      r = reconcile(labels);
    } catch (const DomainError& e) {
      throw DomainError(path + ": image '" + row[0] + "': " + e.what());
    }
    tsv << row[0] << '\t' << outcome_name(r.outcome) << '\t' << r.label << '\n';
  }
  emit(report, tsv.str(), out);
  return kExitOk;
}

int cmd_species_report(const std::string& path, std::int64_t floor, const std::string& report, std::ostream& out) {
  const auto r = species_report(read_species_manifest(path), floor);
  std::ostringstream tsv;
  tsv << "species\tclasses\tkept_classes\timages\n";
  for (const auto& s : r.species) tsv << s.species << '\t' << s.classes << '\t' << s.kept_classes << '\t' << s.images << '\n';
  tsv << "\nclass\tspecies\timages\tkept\n";
  for (const auto& c : r.classes) tsv << c.name << '\t' << c.species << '\t' << c.images << '\t' << (c.kept ? 1 : 0) << '\n';
  emit(report, tsv.str(), out);
  return kExitOk;
}

int cmd_synth(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig cfg = resolve(flags, err);
  if (!cfg.data.synthetic) throw ConfigError("config has no data.synthetic section");
  auto [train_set, val_set] = load_data(cfg.data);
  write_dataset(train_set, (fs::path(cfg.output) / "train").string());
  write_dataset(val_set, (fs::path(cfg.output) / "val").string());
  out << "wrote " << train_set.size() << " train and " << val_set.size() << " val images to " << cfg.output << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attentional pyramid network toolkit", "apn"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool as_json = false;
  auto* count = app.add_subcommand("count", "parameter and multiply-add counts");
  add_common(count, flags, false);
  count->add_flag("--json", as_json, "print JSON instead of text");

  std::string fault;
  bool ops_only = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->alias("verify");
  gradcheck->add_option("--fault", fault, "perturb the backward pass of one op (self-test)");
  gradcheck->add_flag("--ops-only", ops_only, "skip the end-to-end checks");

  auto* train_cmd = app.add_subcommand("train", "train a model and write logs and checkpoints");
  add_common(train_cmd, flags);

  std::string checkpoint, split = "val", image;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  add_common(eval_cmd, flags);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--split", split, "train or val");

  auto* masks = app.add_subcommand("export-masks", "write attention masks for one image");
  add_common(masks, flags);
  masks->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  masks->add_option("--image", image, "PGM or PPM image")->required();

  std::vector<std::string> images;
  std::string list, report_path;
  int threshold = 5;
  auto* dedup_cmd = app.add_subcommand("dedup", "perceptual-hash duplicate removal");
  dedup_cmd->add_option("images", images, "PGM/PPM images (id is the path)");
  dedup_cmd->add_option("--list", list, "TSV of id and image path");
  dedup_cmd->add_option("--threshold", threshold, "maximum Hamming distance of a duplicate");
  dedup_cmd->add_option("--out", report_path, "report file (default stdout)");

  std::string input_path;
  auto* reconcile_cmd = app.add_subcommand("reconcile", "majority vote over annotator labels");
  reconcile_cmd->add_option("labels", input_path, "TSV of image id and 2-3 labels")->required();
  reconcile_cmd->add_option("--out", report_path, "report file (default stdout)");

  std::int64_t floor = 0;
  auto* species_cmd = app.add_subcommand("species-report", "per-species class and image counts");
  species_cmd->add_option("manifest", input_path, "TSV of image id, class, species")->required();
  species_cmd->add_option("--floor", floor, "minimum images for a class to be kept");
  species_cmd->add_option("--out", report_path, "report file (default stdout)");

  auto* synth = app.add_subcommand("synth", "write the synthetic train and val splits");
  add_common(synth, flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*count) return cmd_count(flags, as_json, out, err);
    if (*gradcheck) return cmd_gradcheck(fault, ops_only, out);
    if (*train_cmd) return cmd_train(flags, out, err);
    if (*eval_cmd) return cmd_eval(flags, checkpoint, split, out, err);
    if (*masks) return cmd_export_masks(flags, checkpoint, image, out, err);
    if (*dedup_cmd) return cmd_dedup(images, list, threshold, report_path, out, err);
    if (*reconcile_cmd) return cmd_reconcile(input_path, report_path, out);
    if (*species_cmd) return cmd_species_report(input_path, floor, report_path, out);
    if (*synth) return cmd_synth(flags, out, err);
  } catch (const VerificationFailure& e) {
    err << "error: " << e.what << '\n';
    return kExitFailure;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace apn
