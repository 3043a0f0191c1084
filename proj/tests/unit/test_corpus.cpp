#include <doctest.h>

#include <algorithm>
#include <bit>
#include <map>

#include "apn/corpus.hpp"
#include "apn/errors.hpp"
#include "apn/random.hpp"

using namespace apn;

namespace {

GrayImage image(int w, int h, double (*f)(int, int)) {
  GrayImage g{w, h, {}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.pixels.push_back(f(x, y));
  return g;
}

// Vote counting straight from the annotation rules.
Reconciliation reconcile_oracle(const std::vector<std::string>& labels) {
  std::map<std::string, int> votes;
  for (const auto& l : labels) ++votes[l];
  for (const auto& [label, n] : votes) {
    if (n >= 2) return {Outcome::accepted, label};
  }
  if (labels.size() == 2) return {Outcome::needs_third_annotator, ""};
  return {Outcome::dropped, ""};
}

}  // namespace

TEST_CASE("perceptual hash: hand-evaluated images") {
  const auto half = image(16, 16, [](int x, int) { return x < 8 ? 0.0 : 255.0; });
  const auto h = perceptual_hash(half);
  CHECK(std::popcount(h) == 32);
  CHECK(h == 0x0F0F0F0F0F0F0F0FULL);
  CHECK(perceptual_hash(image(9, 11, [](int, int) { return 77.0; })) == 0);
  CHECK(hamming(h, perceptual_hash(half)) == 0);
  CHECK(hamming(0, ~0ULL) == 64);
  CHECK_THROWS_AS(perceptual_hash(image(7, 8, [](int, int) { return 0.0; })), DomainError);
}

TEST_CASE("perceptual hash: invariant to brightness scaling") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage g{24, 17, {}};
    for (int i = 0; i < 24 * 17; ++i) g.pixels.push_back(rng.uniform(0.0, 255.0));
    const auto base = perceptual_hash(g);
    for (double k : {0.5, 2.0, 4.0}) {
      GrayImage s = g;
      for (auto& v : s.pixels) v *= k;
      CHECK(perceptual_hash(s) == base);
    }
  }
}

TEST_CASE("dedup: hand traces") {
  // Pairwise distances: d(a,b) = 2, d(b,c) = 10, d(a,c) = 12.
  const std::vector<HashedRecord> three{{"a", 0}, {"b", 0x3}, {"c", 0xFFF}};
  CHECK(hamming(three[0].hash, three[1].hash) == 2);
  CHECK(hamming(three[1].hash, three[2].hash) == 10);
  CHECK(hamming(three[0].hash, three[2].hash) == 12);
  const auto r = dedup(three, 5);
  CHECK(r.kept == std::vector<std::size_t>{0, 2});
  REQUIRE(r.duplicates.size() == 1);
  CHECK(r.duplicates[0].kept_id == "a");
  CHECK(r.duplicates[0].removed_id == "b");
  CHECK(r.duplicates[0].hamming == 2);

  const std::vector<HashedRecord> exact{{"x", 42}, {"y", 42}, {"z", 43}};
  CHECK(dedup(exact, 0).kept == std::vector<std::size_t>{0, 2});
  CHECK(dedup(three, 64).kept == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(dedup(three, 65), DomainError);
  CHECK_THROWS_AS(dedup(three, -1), DomainError);
}

TEST_CASE("dedup: kept records are pairwise farther apart than the threshold") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<HashedRecord> recs;
    const auto base = rng.next_u64();
    for (int i = 0; i < 30; ++i) {
      auto h = base;
      for (int f = 0, n = static_cast<int>(rng.below(12)); f < n; ++f) h ^= 1ULL << rng.below(64);
      recs.push_back({std::to_string(i), h});
    }
    const int threshold = static_cast<int>(rng.below(8));
    const auto r = dedup(recs, threshold);
    CHECK(r.kept.size() + r.duplicates.size() == recs.size());
    for (std::size_t i = 0; i < r.kept.size(); ++i)
      for (std::size_t j = i + 1; j < r.kept.size(); ++j)
        CHECK(hamming(recs[r.kept[i]].hash, recs[r.kept[j]].hash) > threshold);
    for (const auto& d : r.duplicates) CHECK(d.hamming <= threshold);
  }
}

TEST_CASE("reconcile: worked cases and exhaustive enumeration") {
  CHECK(reconcile({"A", "A"}).outcome == Outcome::accepted);
  CHECK(reconcile({"A", "A"}).label == "A");
  CHECK(reconcile({"A", "B", "B"}).label == "B");
  CHECK(reconcile({"A", "B", "C"}).outcome == Outcome::dropped);
  CHECK(reconcile({"A", "B"}).outcome == Outcome::needs_third_annotator);
  CHECK_THROWS_AS(reconcile({"A"}), DomainError);
  CHECK_THROWS_AS(reconcile({"A", "B", "C", "D"}), DomainError);

  const std::vector<std::string> symbols{"A", "B", "C"};
  int cases = 0;
  for (int n : {2, 3}) {
    const int total = n == 2 ? 9 : 27;
    for (int code = 0; code < total; ++code) {
      std::vector<std::string> labels;
      for (int k = 0, c = code; k < n; ++k, c /= 3) labels.push_back(symbols[static_cast<std::size_t>(c % 3)]);
      const auto got = reconcile(labels);
      const auto want = reconcile_oracle(labels);
      CHECK(got.outcome == want.outcome);
      CHECK(got.label == want.label);
      auto perm = labels;
      std::sort(perm.begin(), perm.end());
      do {
        const auto p = reconcile(perm);
        CHECK(p.outcome == got.outcome);
        CHECK(p.label == got.label);
      } while (std::next_permutation(perm.begin(), perm.end()));
      ++cases;
    }
  }
  CHECK(cases == 36);
}

TEST_CASE("species report") {
  CHECK(species_report({}).species.empty());
  CHECK(species_report({}).classes.empty());

  std::vector<ManifestRow> rows;
  for (int c = 0; c < 42; ++c)
    for (int i = 0; i < 10 + c; ++i) rows.push_back({"img" + std::to_string(rows.size()), "fruit" + std::to_string(c), "Fruits & Seeds"});
  rows.push_back({"leaf0", "mint", "Leaves"});
  const auto r = species_report(rows, 14);
  REQUIRE(r.species.size() == 2);
  CHECK(r.species[0].species == "Fruits & Seeds");
  CHECK(r.species[0].classes == 42);
  CHECK(r.species[0].kept_classes == 38);  // 14..51 images
  CHECK(r.species[1].classes == 1);
  CHECK(r.species[1].kept_classes == 0);
  for (const auto& c : r.classes) CHECK(c.kept == (c.images >= 14));

  try {
    species_report({{"a", "x", "Roots"}, {"b", "y", "Seeds"}});
    FAIL("no error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("Roots") != std::string::npos);
    CHECK(std::string(e.what()).find("Seeds") != std::string::npos);
  }
}

TEST_CASE("pnm parsing") {
  const std::string header = "P5\n# comment\n3 2\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint8_t v : {0, 10, 20, 30, 40, 255}) bytes.push_back(v);
  const auto img = parse_pnm(bytes);
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.samples == std::vector<std::uint16_t>{0, 10, 20, 30, 40, 255});
  bytes.pop_back();
  CHECK_THROWS_AS(parse_pnm(bytes), IoError);

  const std::string ppm = "P6 1 1 65535\n";
  std::vector<std::uint8_t> wide(ppm.begin(), ppm.end());
  for (std::uint8_t v : {0x01, 0x00, 0x00, 0x02, 0x00, 0x03}) wide.push_back(v);
  const auto rgb = parse_pnm(wide);
  CHECK(rgb.channels == 3);
  CHECK(rgb.samples == std::vector<std::uint16_t>{256, 2, 3});
  const auto gray = to_gray(rgb);
  CHECK(gray.pixels[0] == doctest::Approx(0.299 * 256 + 0.587 * 2 + 0.114 * 3));

  const std::string bad = "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(parse_pnm(std::vector<std::uint8_t>(bad.begin(), bad.end())), IoError);
}
