#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "nestseg/common.hpp"
#include "nestseg/synth.hpp"

using namespace nestseg;

namespace {

double class_fraction(const LabelMap& label, uint8_t c) {
  std::size_t n = 0;
  for (uint8_t v : label.values) n += v == c;
  return static_cast<double>(n) / static_cast<double>(label.values.size());
}

Sample tiny_sample() {
  Sample s;
  s.image.height = 2;
  s.image.width = 2;
  s.image.values = {0.1, 0.2, 0.3, 0.4};
  s.label.m = 2;
  s.label.height = 2;
  s.label.width = 2;
  s.label.values = {0, 1, 2, 1};
  return s;
}

bool samples_equal(const Sample& a, const Sample& b) {
  return a.image.height == b.image.height && a.image.width == b.image.width &&
         a.image.values == b.image.values && a.label.values == b.label.values;
}

}  // namespace

TEST_CASE("scene spec validation") {
  CHECK_NOTHROW(SceneSpec{}.validate());
  SceneSpec bad;
  bad.radius_frac = {{0.2, 0.3}};  // one pair for m=2
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SceneSpec{};
  bad.jitter_px = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SceneSpec{};
  bad.blobs_min = 3;
  bad.blobs_max = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SceneSpec{};
  bad.intensity_means = {0.5, 0.52, 0.3};  // closer than 2*noise_sigma
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SceneSpec{};
  bad.radius_frac = {{0.15, 0.25}, {0.45, 0.25}};  // min > max
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("scene generation is deterministic per seed") {
  const SceneSpec spec;
  const Sample a = generate_scene(spec, 1234);
  const Sample b = generate_scene(spec, 1234);
  CHECK(a.image.values == b.image.values);
  CHECK(a.label.values == b.label.values);
  const Sample c = generate_scene(spec, 1235);
  CHECK(a.label.values != c.label.values);
}

TEST_CASE("generated scenes nest cleanly with imbalanced classes") {
  const SceneSpec spec;  // 64x64 defaults
  int seeds_checked = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Sample s = generate_scene(spec, seed);
    CHECK(validate_nesting(s.label) == 0);
    // Background dominates cells, cells dominate nuclei.
    const double f0 = class_fraction(s.label, 0);
    const double f1 = class_fraction(s.label, 1);
    const double f2 = class_fraction(s.label, 2);
    CHECK(f0 > f1);
    CHECK(f1 > f2);
    CHECK(f2 > 0.0);
    // Nuclei take a small but non-negligible share of the pixels.
    CHECK(f2 >= 0.01);
    CHECK(f2 <= 0.10);
    // Image values stay in the unit interval.
    const auto [lo, hi] =
        std::minmax_element(s.image.values.begin(), s.image.values.end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
    ++seeds_checked;
  }
  CHECK(seeds_checked == 100);
}

TEST_CASE("class intensity ordering survives the noise") {
  const SceneSpec spec;
  const Sample s = generate_scene(spec, 77);
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < s.label.values.size(); ++i) {
    sums[s.label.values[i]] += s.image.values[i];
    counts[s.label.values[i]] += 1;
  }
  REQUIRE(counts[0] > 0);
  REQUIRE(counts[1] > 0);
  REQUIRE(counts[2] > 0);
  const double m0 = sums[0] / counts[0], m1 = sums[1] / counts[1],
               m2 = sums[2] / counts[2];
  CHECK(m0 > m1);  // background brighter than cells
  CHECK(m1 > m2);  // cells brighter than nuclei
}

TEST_CASE("a single blob labels its center 1 and the corners 0") {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.m = 1;
  spec.blobs_min = 1;
  spec.blobs_max = 1;
  spec.radius_frac = {{0.1, 0.2}};
  spec.intensity_means = {0.85, 0.4};
  spec.noise_sigma = 0.05;
  spec.jitter_px = 0.5;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = generate_scene(spec, seed);
    double cy = 0.0, cx = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (s.label.at(y, x) == 1) {
          cy += y;
          cx += x;
          ++n;
        }
    REQUIRE(n > 0);
    const int iy = static_cast<int>(std::lround(cy / static_cast<double>(n)));
    const int ix = static_cast<int>(std::lround(cx / static_cast<double>(n)));
    CHECK(s.label.at(iy, ix) == 1);  // blob centroid lies inside the blob
    CHECK(s.label.at(0, 0) == 0);
    CHECK(s.label.at(0, 31) == 0);
    CHECK(s.label.at(31, 0) == 0);
    CHECK(s.label.at(31, 31) == 0);
  }
}

TEST_CASE("infeasible radii are reported, not looped forever") {
  SceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.blobs_min = 4;
  spec.blobs_max = 4;
  spec.radius_frac = {{0.6, 0.7}, {0.25, 0.45}};  // blobs larger than the image
  CHECK_THROWS_AS(generate_scene(spec, 1), RuntimeError);
}

TEST_CASE("nesting violation counter on hand-built maps") {
  CHECK(validate_nesting(LabelMap{2, 2, 2, {1, 1, 1, 1}}) == 0);
  CHECK(validate_nesting(LabelMap{2, 1, 2, {0, 2}}) == 1);
  // Center nucleus with a cell ring: legal.
  CHECK(validate_nesting(LabelMap{2, 3, 3, {1, 1, 1, 1, 2, 1, 1, 1, 1}}) == 0);
  // Center nucleus directly on background: four offending edges.
  CHECK(validate_nesting(LabelMap{2, 3, 3, {0, 0, 0, 0, 2, 0, 0, 0, 0}}) == 4);
}

TEST_CASE("flips are involutions and rotations compose") {
  const Sample s = generate_scene(SceneSpec{}, 5);
  CHECK(samples_equal(flip_horizontal(flip_horizontal(s)), s));
  CHECK(samples_equal(flip_vertical(flip_vertical(s)), s));
  CHECK(samples_equal(rotate90(s, 4), s));
  CHECK(samples_equal(rotate90(rotate90(s, 1), 1), rotate90(s, 2)));
  CHECK(samples_equal(rotate90(rotate90(s, 1), 3), s));
  CHECK(samples_equal(rotate90(s, -1), rotate90(s, 3)));
}

TEST_CASE("rotation by a quarter turn is clockwise") {
  const Sample s = tiny_sample();  // image rows (0.1 0.2 / 0.3 0.4)
  const Sample r = rotate90(s, 1);
  CHECK(r.image.values == std::vector<double>{0.3, 0.1, 0.4, 0.2});
  CHECK(r.label.values == std::vector<uint8_t>{2, 0, 1, 1});
  Sample wide = tiny_sample();
  wide.image.width = 4;
  wide.image.values = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  wide.image.height = 2;
  wide.label = LabelMap{2, 2, 4, {0, 0, 0, 0, 0, 0, 0, 0}};
  CHECK_THROWS_AS(rotate90(wide, 1), ConfigError);
  CHECK_NOTHROW(rotate90(wide, 2));
}

TEST_CASE("translation shifts content and pads with background") {
  const Sample s = tiny_sample();
  const Sample t = translate(s, 1, 0);  // down by one row
  CHECK(t.image.values == std::vector<double>{0.0, 0.0, 0.1, 0.2});
  CHECK(t.label.values == std::vector<uint8_t>{0, 0, 0, 1});
  const Sample u = translate(s, 0, -1);  // left by one column
  CHECK(u.image.values == std::vector<double>{0.2, 0.0, 0.4, 0.0});
  CHECK(u.label.values == std::vector<uint8_t>{1, 0, 1, 0});
}

TEST_CASE("identity-parameter transforms leave the sample unchanged") {
  const Sample s = generate_scene(SceneSpec{}, 9);
  CHECK(samples_equal(rotate90(s, 0), s));
  CHECK(samples_equal(translate(s, 0, 0), s));
  CHECK(samples_equal(rescale(s, 1.0), s));
}

TEST_CASE("rescale keeps the extent and uses nearest-neighbor labels") {
  const Sample s = generate_scene(SceneSpec{}, 11);
  for (double f : {0.9, 0.95, 1.05, 1.1}) {
    const Sample r = rescale(s, f);
    CHECK(r.image.height == s.image.height);
    CHECK(r.image.width == s.image.width);
    // Labels stay categorical: only values that already existed appear.
    for (uint8_t v : r.label.values) CHECK(v <= 2);
  }
  CHECK_THROWS_AS(rescale(s, 0.0), ConfigError);
}

TEST_CASE("augmentation is deterministic and preserves nesting") {
  const AugmentConfig aug;
  const SceneSpec spec;
  const Sample s = generate_scene(spec, 3);
  CHECK(samples_equal(augment(s, 42, aug), augment(s, 42, aug)));
  bool any_changed = false;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Sample a = augment(generate_scene(spec, seed), seed ^ 0xAAA, aug);
    CHECK(a.image.height == spec.height);
    CHECK(a.image.width == spec.width);
    CHECK(validate_nesting(a.label) == 0);
    any_changed = any_changed || !samples_equal(a, generate_scene(spec, seed));
  }
  CHECK(any_changed);

  AugmentConfig off;
  off.enabled = false;
  CHECK(samples_equal(augment(s, 7, off), s));
}

TEST_CASE("augmentation handles non-square extents") {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 64;
  const AugmentConfig aug;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Sample s = generate_scene(spec, seed);
    const Sample a = augment(s, seed, aug);
    CHECK(a.image.height == 32);
    CHECK(a.image.width == 64);
    CHECK(validate_nesting(a.label) == 0);
  }
}

TEST_CASE("fold assignment rotates every image through the test slot") {
  const std::vector<FoldTriple> triples = make_folds(16, 4, 99);
  REQUIRE(triples.size() == 16);
  std::multiset<int> tests;
  for (const FoldTriple& t : triples) {
    CHECK(t.train.size() == 12);
    CHECK(t.val.size() == 3);
    tests.insert(t.test);
    std::set<int> seen(t.train.begin(), t.train.end());
    seen.insert(t.val.begin(), t.val.end());
    seen.insert(t.test);
    CHECK(seen.size() == 16);  // disjoint cover of all images
    CHECK(std::find(t.train.begin(), t.train.end(), t.test) == t.train.end());
    CHECK(std::find(t.val.begin(), t.val.end(), t.test) == t.val.end());
  }
  for (int i = 0; i < 16; ++i) CHECK(tests.count(i) == 1);

  // Same seed, same folds; different seed, different shuffle.
  const std::vector<FoldTriple> again = make_folds(16, 4, 99);
  CHECK(again[0].test == triples[0].test);
  CHECK(again[0].train == triples[0].train);
  bool differs = false;
  for (uint64_t s = 100; s < 110 && !differs; ++s)
    differs = make_folds(16, 4, s)[0].train != triples[0].train;
  CHECK(differs);
}

TEST_CASE("fold assignment rejects degenerate configurations") {
  CHECK_THROWS_AS(make_folds(15, 4, 1), ConfigError);  // k does not divide n
  CHECK_THROWS_WITH_AS(
      make_folds(4, 4, 1),
      "make_folds: fold size 1 leaves the validation set empty (need "
      "n-images/k-folds >= 2)",
      ConfigError);
  CHECK_THROWS_AS(make_folds(0, 1, 1), ConfigError);
}
