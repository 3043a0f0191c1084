#include "apn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "apn/checkpoint.hpp"
#include "apn/errors.hpp"

namespace apn {

namespace fs = std::filesystem;

std::vector<int> Dataset::coarse_of_fine() const {
  std::vector<int> map(static_cast<std::size_t>(num_fine), 0);
  for (std::size_t i = 0; i < size(); ++i) map[static_cast<std::size_t>(fine[i])] = coarse[i];
  return map;
}

std::uint64_t Dataset::hash() const {
  std::uint64_t h = Rng::fnv1a(std::string_view(reinterpret_cast<const char*>(pixels.data()),
                                                pixels.size() * sizeof(float)));
  for (std::size_t i = 0; i < size(); ++i) h = Rng::mix(h ^ (static_cast<std::uint64_t>(fine[i]) << 32 | coarse[i]));
  return h;
}

void SyntheticSpec::validate() const {
  if (image_size < 8) throw ConfigError("synthetic image_size must be >= 8");
  if (species < 1 || species > 6) throw ConfigError("synthetic species must be in [1, 6]");
  if (classes_per_species < 1) throw ConfigError("classes_per_species must be >= 1");
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
  if (noise < 0) throw ConfigError("noise must be >= 0");
  if (texture_contrast <= 0 || texture_contrast > 1) throw ConfigError("texture_contrast must be in (0, 1]");
}

namespace {

// Shape membership in normalized coordinates (u, v) relative to the center,
// scaled so the shape roughly spans [-1, 1].
bool inside(int species, double u, double v) {
  const double r = std::hypot(u, v);
  switch (species) {
    case 0: return r <= 1.0;                                              // disk
    case 1: return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;            // square
    case 2: return r <= 1.0 && r >= 0.55;                                 // ring
    case 3: return (std::abs(u) <= 0.35 && std::abs(v) <= 1.0) ||         // cross
                   (std::abs(v) <= 0.35 && std::abs(u) <= 1.0);
    case 4: return std::abs(u) + std::abs(v) <= 1.0;                      // diamond
    default: return v <= 0.8 && v >= -1.0 + 2 * std::abs(u) - 0.2;        // triangle
  }
}

}  // namespace

Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.channels = 3;
  ds.height = ds.width = spec.image_size;
  ds.num_fine = spec.num_classes();
  ds.num_coarse = spec.species;
  const int s = spec.image_size;
  const std::size_t n = static_cast<std::size_t>(ds.num_fine) * static_cast<std::size_t>(spec.samples_per_class);
  ds.pixels.assign(n * ds.image_size(), 0.0f);

  const Rng root(seed);
  std::size_t idx = 0;
  // Interleave classes so every prefix of the set stays balanced.
  for (int k = 0; k < spec.samples_per_class; ++k) {
    for (int cls = 0; cls < ds.num_fine; ++cls, ++idx) {
      const int species = cls / spec.classes_per_species;
      const int texture = cls % spec.classes_per_species;
      Rng rng = root.split(idx);
      const double cy = s / 2.0 - 0.5 + rng.uniform(-2.0, 2.0);
      const double cx = s / 2.0 - 0.5 + rng.uniform(-2.0, 2.0);
      const double radius = s * 0.34 * rng.uniform(0.85, 1.15);
      const double angle = std::numbers::pi * texture / spec.classes_per_species;
      const double dy = std::cos(angle), dx = std::sin(angle);
      const double phase = rng.uniform(0.0, 4.0);
      const double bg_angle = rng.uniform(0.0, std::numbers::pi);
      const double bdy = std::cos(bg_angle), bdx = std::sin(bg_angle);
      double bg[3], tint[3];
      for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(0.05, 0.3);
      for (int c = 0; c < 3; ++c) tint[c] = rng.uniform(0.55, 1.0);
      float* img = ds.pixels.data() + idx * ds.image_size();
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const bool in = inside(species, (x - cx) / radius, (y - cy) / radius);
          // Period-4 stripes across direction (dy, dx).
          const double t = y * dy + x * dx + phase;
          const double stripe = std::fmod(std::floor(t / 2.0), 2.0) == 0.0 ? 1.0 : 1.0 - spec.texture_contrast;
          // Clutter stripes match the amplitude of the shape texture.
          double bg_stripe = 0.0;
          if (spec.clutter) {
            const double tb = y * bdy + x * bdx + phase;
            bg_stripe = std::fmod(std::floor(tb / 2.0), 2.0) == 0.0 ? 0.75 * spec.texture_contrast : 0.0;
          }
          for (int c = 0; c < 3; ++c) {
            double v = in ? tint[c] * stripe : bg[c] + bg_stripe;
            v += spec.noise * rng.normal();
            img[(static_cast<std::size_t>(c) * s + y) * s + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      ds.fine.push_back(cls);
      ds.coarse.push_back(species);
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw IoError("cannot write manifest in '" + dir + "'");
  manifest << "#shape\t" << ds.channels << '\t' << ds.height << '\t' << ds.width << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.f32", i);
    const auto img = ds.image(i);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(img.data());
    write_file((fs::path(dir) / name).string(), std::vector<std::uint8_t>(raw, raw + img.size() * sizeof(float)));
    manifest << name << '\t' << ds.fine[i] << '\t' << ds.coarse[i] << '\n';
  }
  if (!manifest) throw IoError("manifest write failed in '" + dir + "'");
}

Dataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream manifest(root / "manifest.tsv");
  if (!manifest) throw IoError("no manifest.tsv in '" + dir + "'");
  Dataset ds;
  std::string line;
  int lineno = 0;
  bool have_shape = false;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    if (line[0] == '#') {
      std::string tag;
      row >> tag;
      if (tag == "#shape") {
        if (!(row >> ds.channels >> ds.height >> ds.width) || ds.channels < 1 || ds.height < 1 || ds.width < 1) {
          throw IoError("manifest line " + std::to_string(lineno) + ": bad #shape header");
        }
        have_shape = true;
      }
      continue;
    }
    if (!have_shape) throw IoError("manifest is missing the #shape header");
    std::string path;
    int fine = -1, coarse = -1;
    if (!std::getline(row, path, '\t') || !(row >> fine >> coarse) || fine < 0 || coarse < 0) {
      throw IoError("manifest line " + std::to_string(lineno) + ": expected path, fine, coarse");
    }
    const auto bytes = read_file((root / path).string());
    if (bytes.size() != ds.image_size() * sizeof(float)) {
      throw IoError("image '" + path + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(ds.image_size() * sizeof(float)));
    }
    const std::size_t offset = ds.pixels.size();
    ds.pixels.resize(offset + ds.image_size());
    std::memcpy(ds.pixels.data() + offset, bytes.data(), bytes.size());
    ds.fine.push_back(fine);
    ds.coarse.push_back(coarse);
    ds.num_fine = std::max(ds.num_fine, fine + 1);
    ds.num_coarse = std::max(ds.num_coarse, coarse + 1);
  }
  if (ds.size() == 0) throw IoError("dataset '" + dir + "' is empty");
  return ds;
}

void hflip(std::span<float> image, int channels, int height, int width) {
  for (int row = 0; row < channels * height; ++row) {
    float* p = image.data() + static_cast<std::size_t>(row) * width;
    std::reverse(p, p + width);
  }
}

void shift_crop(std::span<const float> image, int channels, int height, int width, int dy, int dx,
                std::span<float> out) {
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      const int sy = std::clamp(y + dy, 0, height - 1);
      for (int x = 0; x < width; ++x) {
        const int sx = std::clamp(x + dx, 0, width - 1);
        out[(static_cast<std::size_t>(c) * height + y) * width + x] =
            image[(static_cast<std::size_t>(c) * height + sy) * width + sx];
      }
    }
  }
}

void augment(std::span<const float> image, int channels, int height, int width, int pad, Rng& rng,
             std::span<float> out) {
  const bool flip = rng.uniform() < 0.5;
  const int dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  const int dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * pad + 1))) - pad;
  shift_crop(image, channels, height, width, dy, dx, out);
  if (flip) hflip(out, channels, height, width);
}

namespace {

// Mean absolute difference to each of the 8 neighbors, on the channel mean.
std::vector<double> texture_features(const Dataset& ds, std::size_t i) {
  const auto img = ds.image(i);
  const int h = ds.height, w = ds.width;
  std::vector<double> gray(static_cast<std::size_t>(h) * w, 0.0);
  for (int c = 0; c < ds.channels; ++c) {
    for (std::size_t p = 0; p < gray.size(); ++p) gray[p] += img[static_cast<std::size_t>(c) * gray.size() + p];
  }
  std::vector<double> f;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      double acc = 0.0;
      int count = 0;
      for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
          acc += std::abs(gray[static_cast<std::size_t>(y) * w + x] - gray[static_cast<std::size_t>(y + dy) * w + x + dx]);
          ++count;
        }
      }
      f.push_back(acc / count);
    }
  }
  return f;
}

}  // namespace

std::vector<int> texture_oracle(const Dataset& train, const Dataset& test) {
  const auto k = static_cast<std::size_t>(train.num_fine);
  std::vector<std::vector<double>> centroid(k, std::vector<double>(8, 0.0));
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto f = texture_features(train, i);
    const auto c = static_cast<std::size_t>(train.fine[i]);
    for (std::size_t j = 0; j < 8; ++j) centroid[c][j] += f[j];
    ++count[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (auto& v : centroid[c]) v /= std::max(count[c], 1);
  }
  std::vector<int> pred;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto f = texture_features(test, i);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      double d = 0.0;
      for (std::size_t j = 0; j < 8; ++j) d += (f[j] - centroid[c][j]) * (f[j] - centroid[c][j]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    pred.push_back(arg);
  }
  return pred;
}

}  // namespace apn
