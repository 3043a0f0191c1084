#include "apn/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "apn/checkpoint.hpp"
#include "apn/errors.hpp"

namespace apn {

namespace {

class PnmHeader {
 public:
  explicit PnmHeader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string t;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) t += static_cast<char>(bytes_[pos_++]);
    if (t.empty()) throw IoError("PNM header truncated");
    return t;
  }
  int number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        t.size() > 9) {
      throw IoError("bad PNM header field '" + t + "'");
    }
    return std::stoi(t);
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size()) throw IoError("PNM raster missing");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PnmImage parse_pnm(const std::vector<std::uint8_t>& bytes) {
  PnmHeader header(bytes);
  const std::string magic = header.token();
  PnmImage img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw IoError("unsupported PNM magic '" + magic + "' (need P5 or P6)");
  }
  img.width = header.number();
  img.height = header.number();
  img.maxval = header.number();
  if (img.width < 1 || img.height < 1) throw IoError("PNM dimensions must be positive");
  if (img.maxval < 1 || img.maxval > 65535) throw IoError("PNM maxval out of range");
  const std::size_t start = header.raster_start();
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t width = img.maxval > 255 ? 2 : 1;
  if (bytes.size() < start + count * width) throw IoError("PNM raster truncated");
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + start + i * width;
    img.samples[i] = width == 2 ? static_cast<std::uint16_t>(p[0] << 8 | p[1]) : p[0];
  }
  return img;
}

PnmImage read_pnm(const std::string& path) {
  try {
    return parse_pnm(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& gray) {
  if (gray.size() != static_cast<std::size_t>(width) * height) throw ShapeError("PGM pixel count mismatch");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), gray.begin(), gray.end());
  write_file(path, bytes);
}

GrayImage to_gray(const PnmImage& img) {
  GrayImage g;
  g.width = img.width;
  g.height = img.height;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  g.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (img.channels == 1) {
      g.pixels[i] = img.samples[i];
    } else {
      const std::uint16_t* p = img.samples.data() + 3 * i;
      g.pixels[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return g;
}

namespace {

// Overlap of source cell [i, i + 1) with output cell k of `out` over `in`.
std::vector<std::vector<double>> area_weights(int in, int out) {
  std::vector<std::vector<double>> w(static_cast<std::size_t>(out), std::vector<double>(static_cast<std::size_t>(in)));
  for (int k = 0; k < out; ++k) {
    const double lo = static_cast<double>(k) * in / out;
    const double hi = static_cast<double>(k + 1) * in / out;
    for (int i = 0; i < in; ++i) {
      const double overlap = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
      if (overlap > 0) w[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = overlap / (hi - lo);
    }
  }
  return w;
}

}  // namespace

std::uint64_t perceptual_hash(const GrayImage& img) {
  if (img.width < 8 || img.height < 8) {
    throw DomainError("perceptual hash needs at least 8x8 pixels, got " + std::to_string(img.width) + "x" +
                      std::to_string(img.height));
  }
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  if (*lo == *hi) return 0;
  const auto wy = area_weights(img.height, 8);
  const auto wx = area_weights(img.width, 8);
  double cells[64];
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      double acc = 0.0;
      for (int y = 0; y < img.height; ++y) {
        const double a = wy[static_cast<std::size_t>(r)][static_cast<std::size_t>(y)];
        if (a == 0.0) continue;
        const double* row = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
        double line = 0.0;
        for (int x = 0; x < img.width; ++x) line += wx[static_cast<std::size_t>(c)][static_cast<std::size_t>(x)] * row[x];
        acc += a * line;
      }
      cells[r * 8 + c] = acc;
    }
  }
  double mean = 0.0;
  for (double v : cells) mean += v;
  mean /= 64.0;
  std::uint64_t h = 0;
  for (int i = 0; i < 64; ++i) {
    if (cells[i] > mean) h |= std::uint64_t{1} << (63 - i);
  }
  return h;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

DedupResult dedup(const std::vector<HashedRecord>& records, int threshold) {
  if (threshold < 0 || threshold > 64) throw DomainError("hamming threshold must be in [0, 64]");
  DedupResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    int best = std::numeric_limits<int>::max();
    std::size_t best_kept = 0;
    for (std::size_t k : out.kept) {
      const int d = hamming(records[i].hash, records[k].hash);
      if (d < best) {
        best = d;
        best_kept = k;
      }
    }
    if (best <= threshold) {
      out.duplicates.push_back({records[best_kept].id, records[i].id, best});
    } else {
      out.kept.push_back(i);
    }
  }
  return out;
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::accepted: return "accepted";
    case Outcome::dropped: return "dropped";
    case Outcome::needs_third_annotator: return "needs_third_annotator";
  }
  return "dropped";
}

Reconciliation reconcile(const std::vector<std::string>& labels) {
  if (labels.size() < 2 || labels.size() > 3) {
    throw DomainError("reconcile needs 2 or 3 labels, got " + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) return {Outcome::accepted, labels[i]};
    }
  }
  return {labels.size() == 2 ? Outcome::needs_third_annotator : Outcome::dropped, {}};
}

const std::vector<std::string>& herb_species() {
  static const std::vector<std::string> names{"Fruits & Seeds", "Rhizome",     "Flowers", "Bark",
                                              "Thallophyte",    "Whole Herbs", "Leaves",  "Resin"};
  return names;
}

SpeciesReport species_report(const std::vector<ManifestRow>& rows, std::int64_t floor,
                             const std::vector<std::string>& known) {
  std::vector<std::string> unknown;
  for (const auto& r : rows) {
    if (std::find(known.begin(), known.end(), r.species) == known.end() &&
        std::find(unknown.begin(), unknown.end(), r.species) == unknown.end()) {
      unknown.push_back(r.species);
    }
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "'" : ", '") + u + "'";
    throw DomainError("unknown species: " + list);
  }
  SpeciesReport report;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, fresh] = index.try_emplace(r.class_name, report.classes.size());
    if (fresh) report.classes.push_back({r.class_name, r.species, 0, true});
    ClassCount& c = report.classes[it->second];
    if (c.species != r.species) {
      throw DomainError("class '" + r.class_name + "' listed under '" + c.species + "' and '" + r.species + "'");
    }
    ++c.images;
  }
  for (auto& c : report.classes) c.kept = c.images >= floor;
  for (const auto& s : known) {
    SpeciesCount sc{s, 0, 0, 0};
    for (const auto& c : report.classes) {
      if (c.species != s) continue;
      ++sc.classes;
      sc.kept_classes += c.kept ? 1 : 0;
      sc.images += c.images;
    }
    if (sc.classes > 0) report.species.push_back(sc);
  }
  return report;
}

std::vector<std::vector<std::string>> read_tsv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) fields.push_back(field);
    if (line.back() == '\t') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::vector<ManifestRow> read_species_manifest(const std::string& path) {
  std::vector<ManifestRow> rows;
  int lineno = 0;
  for (auto& f : read_tsv(path)) {
    ++lineno;
    if (f.size() != 3) {
      throw IoError(path + ": data row " + std::to_string(lineno) + " needs image_id, class, species");
    }
    rows.push_back({f[0], f[1], f[2]});
  }
  return rows;
}

}  // namespace apn
