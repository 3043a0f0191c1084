#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apn/random.hpp"

namespace apn {

/// In-memory labeled images, float32 in [0, 1], each C x H x W.
struct Dataset {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // N x C x H x W
  std::vector<int> fine;
  std::vector<int> coarse;
  int num_fine = 0;
  int num_coarse = 0;

  std::size_t size() const { return fine.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<const float> image(std::size_t i) const { return {pixels.data() + i * image_size(), image_size()}; }
  // Coarse class of every fine class, taken from the labels.
  std::vector<int> coarse_of_fine() const;
  std::uint64_t hash() const;
};

/// Multi-granularity synthetic set: the species (coarse class) sets the global
/// shape, the fine class within a species sets the stripe orientation of the
/// texture inside the shape.
struct SyntheticSpec {
  int image_size = 32;
  int species = 4;            // 1..6 shapes: disk, square, ring, cross, diamond, triangle
  int classes_per_species = 2;
  int samples_per_class = 16;
  double noise = 0.05;        // Gaussian pixel noise std
  double texture_contrast = 0.65;  // dark stripes are (1 - contrast) of the tint
  bool clutter = false;       // background carries stripes at a random orientation

  int num_classes() const { return species * classes_per_species; }
  void validate() const;
};

Dataset synth_generate(const SyntheticSpec& spec, std::uint64_t seed);

// Directory of raw little-endian float32 images plus manifest.tsv:
//   "#shape<TAB>C<TAB>H<TAB>W", then "path<TAB>fine<TAB>coarse" per image.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Mirror each row in place.
void hflip(std::span<float> image, int channels, int height, int width);
// Output pixel (y, x) reads input (y + dy, x + dx), clamped to the border: a
// crop from the edge-padded image.
void shift_crop(std::span<const float> image, int channels, int height, int width, int dy, int dx,
                std::span<float> out);

/// Random crop from the image edge-padded by `pad` pixels, then a horizontal
/// flip with p = 0.5. Writes into `out` (same size as `image`).
void augment(std::span<const float> image, int channels, int height, int width, int pad, Rng& rng,
             std::span<float> out);

/// Nearest-centroid classifier on 3x3 neighbor-difference texture features.
/// Returns predicted fine labels for `test`.
std::vector<int> texture_oracle(const Dataset& train, const Dataset& test);

}  // namespace apn
