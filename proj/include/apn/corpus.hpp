#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace apn {

/// 8-bit or 16-bit PNM raster, 1 (P5) or 3 (P6) interleaved channels.
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved
};

PnmImage read_pnm(const std::string& path);
PnmImage parse_pnm(const std::vector<std::uint8_t>& bytes);
// Writes an 8-bit P5 image.
void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& gray);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major
};

// Luma 0.299 R + 0.587 G + 0.114 B, in units of the sample values.
GrayImage to_gray(const PnmImage& img);

/// Average hash: area-mean resize to 8x8, one bit per cell set when the cell
/// exceeds the mean of all 64 cells, packed row-major with the first cell in
/// the most significant bit. An image with no contrast hashes to 0. Images
/// smaller than 8x8 throw DomainError.
std::uint64_t perceptual_hash(const GrayImage& img);
int hamming(std::uint64_t a, std::uint64_t b);

struct HashedRecord {
  std::string id;
  std::uint64_t hash = 0;
};

struct DuplicatePair {
  std::string kept_id;
  std::string removed_id;
  int hamming = 0;
};

struct DedupResult {
  std::vector<std::size_t> kept;  // indices into the input, in order
  std::vector<DuplicatePair> duplicates;
};

/// Greedy first-wins scan: a record within `threshold` of any kept record is
/// removed and paired with the closest kept one (earliest on ties).
DedupResult dedup(const std::vector<HashedRecord>& records, int threshold = 5);

enum class Outcome { accepted, dropped, needs_third_annotator };
std::string_view outcome_name(Outcome o);

struct Reconciliation {
  Outcome outcome = Outcome::dropped;
  std::string label;  // set when accepted
};

/// Majority over 2 or 3 annotator labels: a label with two votes is accepted;
/// three distinct labels are dropped; two disagreeing labels with no third
/// annotation report needs_third_annotator.
Reconciliation reconcile(const std::vector<std::string>& labels);

/// The eight CNH-98 species.
const std::vector<std::string>& herb_species();

struct ClassCount {
  std::string name;
  std::string species;
  std::int64_t images = 0;
  bool kept = true;  // images >= floor
};

struct SpeciesCount {
  std::string species;
  int classes = 0;
  int kept_classes = 0;
  std::int64_t images = 0;
};

struct SpeciesReport {
  std::vector<SpeciesCount> species;  // in known-species order, present ones only
  std::vector<ClassCount> classes;    // in first-seen order
};

struct ManifestRow {
  std::string image_id;
  std::string class_name;
  std::string species;
};

/// Tabulates per-species class counts and per-class image counts. Throws
/// DomainError listing every species name outside `known`.
SpeciesReport species_report(const std::vector<ManifestRow>& rows, std::int64_t floor = 0,
                             const std::vector<std::string>& known = herb_species());

// UTF-8 TSV helpers. Lines starting with '#' and blank lines are skipped.
std::vector<std::vector<std::string>> read_tsv(const std::string& path);
std::vector<ManifestRow> read_species_manifest(const std::string& path);

}  // namespace apn
