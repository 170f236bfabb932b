#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "nestseg/common.hpp"
#include "nestseg/losses.hpp"
#include "nestseg/metrics.hpp"
#include "nestseg/synth.hpp"

using namespace nestseg;

namespace {

Image image_from(int h, int w, std::vector<double> v) {
  return Image{h, w, std::move(v)};
}

LabelMap random_labels(Rng& rng, int m, int h, int w) {
  LabelMap t{m, h, w, {}};
  t.values.resize(static_cast<std::size_t>(h) * w);
  for (uint8_t& v : t.values)
    v = static_cast<uint8_t>(rng.uniform_int(0, m));
  return t;
}

// Independent W and exact-p computation by full sign enumeration.
struct EnumResult {
  double w;
  double p;
};

EnumResult enumerate_wilcoxon(const std::vector<double>& diffs) {
  const int n = static_cast<int>(diffs.size());
  std::vector<std::pair<double, int>> mag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    mag[static_cast<std::size_t>(i)] = {std::abs(diffs[static_cast<std::size_t>(i)]), i};
  std::sort(mag.begin(), mag.end());
  std::vector<double> rank(static_cast<std::size_t>(n));
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && mag[static_cast<std::size_t>(j)].first ==
                        mag[static_cast<std::size_t>(i)].first)
      ++j;
    for (int t = i; t < j; ++t)
      rank[static_cast<std::size_t>(mag[static_cast<std::size_t>(t)].second)] =
          (i + 1 + j) / 2.0;
    i = j;
  }
  double w_plus = 0.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += rank[static_cast<std::size_t>(i)];
    if (diffs[static_cast<std::size_t>(i)] > 0.0)
      w_plus += rank[static_cast<std::size_t>(i)];
  }
  const double w_obs = std::min(w_plus, total - w_plus);
  unsigned long hits = 0;
  const unsigned long all = 1UL << n;
  for (unsigned long mask = 0; mask < all; ++mask) {
    double s = 0.0;
    for (int b = 0; b < n; ++b)
      if (mask & (1UL << b)) s += rank[static_cast<std::size_t>(b)];
    if (std::min(s, total - s) <= w_obs + 1e-12) ++hits;
  }
  return {w_obs, static_cast<double>(hits) / static_cast<double>(all)};
}

WilcoxonResult wilcoxon_of_diffs(const std::vector<double>& diffs) {
  const std::vector<double> zeros(diffs.size(), 0.0);
  return wilcoxon_signed_rank(diffs, zeros);
}

}  // namespace

TEST_CASE("threshold presets per loss") {
  const Thresholds sse = preset_thresholds(LossKind::kSse, 2);
  CHECK(sse.theta == std::vector<double>{0.5, 1.5});
  const Thresholds nce = preset_thresholds(LossKind::kNce, 2);
  CHECK(nce.theta == std::vector<double>{0.5, 1.5});
  const Thresholds mce = preset_thresholds(LossKind::kMce, 2);
  REQUIRE(mce.theta.size() == 2);
  CHECK(mce.theta[0] == 0.5);
  CHECK(mce.theta[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  const Thresholds mce3 = preset_thresholds(LossKind::kMce, 3);
  CHECK(mce3.theta[0] == 0.5);
  CHECK(mce3.theta[1] == 1.5);
  CHECK(mce3.theta[2] == doctest::Approx(2.25).epsilon(1e-15));
  CHECK_THROWS_AS(preset_thresholds(LossKind::kSoftmaxCe, 2), ConfigError);

  Thresholds bad{{1.5, 0.5}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  Thresholds outside{{0.5, 2.5}};
  CHECK_THROWS_AS(outside.validate(), ConfigError);
}

TEST_CASE("ordinal thresholding follows the left-closed counting rule") {
  const Thresholds th{{0.5, 1.5}};
  const Image a = image_from(1, 4, {0.3, 1.0, 1.7, 1.5});
  const LabelMap lab = threshold_map(a, th);
  CHECK(lab.m == 2);
  CHECK(lab.values == std::vector<uint8_t>{0, 1, 2, 2});  // 1.5 maps up

  const Thresholds th3{{0.5, 1.5, 2.5}};
  const LabelMap lab3 = threshold_map(image_from(1, 1, {2.49}), th3);
  CHECK(lab3.values[0] == 2);
}

TEST_CASE("thresholding is monotone in activations and thresholds") {
  Rng rng(41);
  const Thresholds th{{0.5, 1.5}};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(16);
    for (double& x : v) x = rng.uniform(0.0, 2.0);
    const Image a = image_from(4, 4, v);
    const LabelMap base = threshold_map(a, th);
    // Raising one activation never lowers its label.
    std::vector<double> up = v;
    const std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, 15));
    up[i] += rng.uniform(0.0, 0.4);
    const LabelMap bumped = threshold_map(image_from(4, 4, up), th);
    CHECK(bumped.values[i] >= base.values[i]);
    // Raising a threshold never raises any label.
    const Thresholds higher{{0.5, 1.7}};
    const LabelMap stricter = threshold_map(a, higher);
    for (std::size_t p = 0; p < 16; ++p)
      CHECK(stricter.values[p] <= base.values[p]);
  }
}

TEST_CASE("refining thresholds cannot hide nesting violations") {
  // Bilinear-upsampled random maps, thresholded coarse (2 cuts) vs. refined
  // (same cuts plus one inserted): the refined labeling has at least as many
  // adjacent >1 jumps.
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    double coarse[4][4];
    for (auto& row : coarse)
      for (double& v : row) v = rng.uniform(0.0, 2.0);
    std::vector<double> fine(64);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const double sy = std::clamp(y / 2.0 - 0.25, 0.0, 3.0);
        const double sx = std::clamp(x / 2.0 - 0.25, 0.0, 3.0);
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(3, y0 + 1), x1 = std::min(3, x0 + 1);
        const double fy = sy - y0, fx = sx - x0;
        fine[static_cast<std::size_t>(y) * 8 + x] =
            (1 - fy) * ((1 - fx) * coarse[y0][x0] + fx * coarse[y0][x1]) +
            fy * ((1 - fx) * coarse[y1][x0] + fx * coarse[y1][x1]);
      }
    const Image a = image_from(8, 8, fine);
    const int v2 = validate_nesting(threshold_map(a, Thresholds{{0.5, 1.5}}));
    const int v3 =
        validate_nesting(threshold_map(a, Thresholds{{0.5, 1.0, 1.5}}));
    CHECK(v2 <= v3);
  }
}

TEST_CASE("dice agrees with brute-force pixel counting") {
  // Worked example: two predicted, four true, two shared -> 2*2/(2+4).
  LabelMap pred{2, 2, 4, {2, 2, 0, 0, 0, 0, 0, 0}};
  LabelMap gt{2, 2, 4, {2, 2, 2, 2, 0, 0, 0, 0}};
  CHECK(dice(pred, gt, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(dice(pred, pred, 2) == 1.0);
  CHECK(dice(pred, pred, 0) == 1.0);
  // Absent from both maps: perfect agreement on absence.
  CHECK(dice(pred, gt, 1) == 1.0);
  CHECK_THROWS_AS(dice(pred, LabelMap{2, 4, 2, {0, 0, 0, 0, 0, 0, 0, 0}}, 0),
                  ConfigError);

  Rng rng(44);
  for (int trial = 0; trial < 200; ++trial) {
    const LabelMap a = random_labels(rng, 2, 8, 8);
    const LabelMap b = random_labels(rng, 2, 8, 8);
    const int c = static_cast<int>(rng.uniform_int(0, 2));
    std::size_t na = 0, nb = 0, inter = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        na += a.at(y, x) == c;
        nb += b.at(y, x) == c;
        inter += (a.at(y, x) == c) && (b.at(y, x) == c);
      }
    const double want =
        na + nb == 0 ? 1.0
                     : 2.0 * static_cast<double>(inter) /
                           static_cast<double>(na + nb);
    const double got = dice(a, b, c);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(dice(b, a, c) == got);  // symmetry
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("top-threshold sweep maximizes validation dice") {
  const Thresholds base = preset_thresholds(LossKind::kSse, 2);
  // Truth's class-2 region is exactly {a >= 1.4}.
  const Image a = image_from(1, 4, {1.35, 1.45, 1.0, 1.7});
  const LabelMap gt{2, 1, 4, {1, 2, 1, 2}};
  const std::vector<Image> maps = {a};
  const std::vector<LabelMap> gts = {gt};
  const Thresholds swept =
      sweep_top_threshold(maps, gts, 2, {1.3, 1.4, 1.5}, base);
  CHECK(swept.theta == std::vector<double>{0.5, 1.4});

  // No pixel between candidates: all tie, smallest wins.
  const Image flat = image_from(1, 4, {1.0, 1.0, 1.0, 1.0});
  const std::vector<Image> flats = {flat};
  const Thresholds tied =
      sweep_top_threshold(flats, gts, 2, {1.8, 1.2, 1.6}, base);
  CHECK(tied.theta[1] == 1.2);  // grid order does not matter

  const Thresholds single =
      sweep_top_threshold(maps, gts, 2, {1.55}, base);
  CHECK(single.theta[1] == 1.55);

  CHECK_THROWS_AS(
      sweep_top_threshold(std::span<const Image>{}, std::span<const LabelMap>{},
                          2, {1.5}, base),
      ConfigError);
}

TEST_CASE("top-threshold candidate grid spans the last open interval") {
  const Thresholds base{{0.5, 1.5}};
  const std::vector<double> g = top_threshold_grid(base, 3);
  REQUIRE(g.size() == 3);
  // Evenly spaced strictly inside (theta_1, m) = (0.5, 2).
  CHECK(g[0] == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(g[2] == doctest::Approx(1.625).epsilon(1e-15));
  CHECK(g.front() > 0.5);
  CHECK(g.back() < 2.0);
  const std::vector<double> g1 = top_threshold_grid(base, 1);
  CHECK(g1 == std::vector<double>{1.25});
  // One level: candidates span (0, 1).
  const std::vector<double> gm1 = top_threshold_grid(Thresholds{{0.5}}, 1);
  CHECK(gm1 == std::vector<double>{0.5});
}

TEST_CASE("wilcoxon matches frozen worked examples") {
  // Six nonzero differences, one negative: W = 2, exact p = 12/128.
  const WilcoxonResult r6 =
      wilcoxon_of_diffs({0.12, -0.05, 0.08, 0.03, 0.11, 0.07});
  CHECK(r6.n == 6);
  CHECK(r6.w == 2.0);
  CHECK(r6.p == doctest::Approx(0.09375).epsilon(1e-15));

  // Five positive differences: the most extreme table, p = 2/32.
  const WilcoxonResult r5 = wilcoxon_of_diffs({0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(r5.w == 0.0);
  CHECK(r5.p == doctest::Approx(0.0625).epsilon(1e-15));

  // Identical lists short-circuit to "no signal".
  const std::vector<double> same = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const WilcoxonResult req = wilcoxon_signed_rank(same, same);
  CHECK(req.w == 0.0);
  CHECK(req.p == 1.0);
  CHECK(req.n == 0);

  // Too few informative pairs.
  CHECK_THROWS_AS(wilcoxon_of_diffs({0.1, 0.2, 0.3, 0.4}), ConfigError);
  CHECK_THROWS_AS(wilcoxon_of_diffs({0.1, 0.2, 0.0, 0.0, 0.3, 0.4}),
                  ConfigError);
}

TEST_CASE("wilcoxon exact branch equals full sign enumeration") {
  Rng rng(45);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(5, 10));
    std::vector<double> diffs(static_cast<std::size_t>(n));
    for (double& d : diffs) {
      // Quantized to a coarse grid so rank ties actually occur.
      d = 0.05 * static_cast<double>(rng.uniform_int(-8, 8));
      if (d == 0.0) d = 0.05;
    }
    const WilcoxonResult got = wilcoxon_of_diffs(diffs);
    const EnumResult want = enumerate_wilcoxon(diffs);
    CHECK(got.w == doctest::Approx(want.w).epsilon(1e-12));
    CHECK(got.p == doctest::Approx(want.p).epsilon(1e-12));
    CHECK(got.p > 0.0);
    CHECK(got.p <= 1.0);
  }
}

TEST_CASE("wilcoxon approximation stays near the exact answer at n=16") {
  const std::vector<double> diffs = {0.5,  0.4,   0.45, 0.3,  0.2,  0.35,
                                     0.25, 0.15,  0.1,  0.05, 0.12, 0.18,
                                     -0.02, 0.22, 0.28, -0.07};
  const WilcoxonResult got = wilcoxon_of_diffs(diffs);
  CHECK(got.n == 16);
  // Frozen oracle for the tie-corrected, continuity-corrected normal tail.
  CHECK(got.p == doctest::Approx(0.0010252415986359272).epsilon(1e-12));
  const EnumResult exact = enumerate_wilcoxon(diffs);
  CHECK(std::abs(got.p - exact.p) <= 0.02);

  // Shifting both lists leaves the paired differences untouched.
  std::vector<double> x = diffs, y(diffs.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += 3.7;
    y[i] += 3.7;
  }
  const WilcoxonResult shifted = wilcoxon_signed_rank(x, y);
  CHECK(shifted.w == got.w);
  CHECK(shifted.p == got.p);
}

TEST_CASE("argmax baseline prediction with low-class tie preference") {
  // One-hot logits reproduce their classes.
  const std::vector<double> onehot = {1, 0, 0, 0,   0, 1, 0, 0,  0, 0, 1, 0};
  const LabelMap lab = baseline_predict(onehot, 3, 2, 2);
  CHECK(lab.values == std::vector<uint8_t>{0, 1, 2, 0});
  CHECK(lab.m == 2);
  // All-equal logits collapse to class 0.
  const LabelMap zero = baseline_predict(std::vector<double>(12, 0.4), 3, 2, 2);
  CHECK(zero.values == std::vector<uint8_t>(4, 0));

  Rng rng(46);
  std::vector<double> logits(48);
  for (double& v : logits) v = rng.uniform(-2.0, 2.0);
  const LabelMap pred = baseline_predict(logits, 3, 4, 4);
  for (std::size_t p = 0; p < 16; ++p) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (logits[static_cast<std::size_t>(c) * 16 + p] >
          logits[static_cast<std::size_t>(best) * 16 + p])
        best = c;
    CHECK(pred.values[p] == best);
  }
  CHECK_THROWS_AS(baseline_predict(std::vector<double>(10, 0.0), 3, 2, 2),
                  ConfigError);
}

TEST_CASE("per-class score report bundles dice, counts, and violations") {
  const LabelMap pred{2, 2, 2, {0, 2, 1, 1}};  // 0|2 adjacency: one violation
  const LabelMap gt{2, 2, 2, {0, 1, 1, 1}};
  const DiceReport rep = score_prediction(pred, gt);
  REQUIRE(rep.dice.size() == 3);
  CHECK(rep.dice[0] == 1.0);
  CHECK(rep.dice[1] == doctest::Approx(0.8).epsilon(1e-15));  // 2*2/(2+3)
  CHECK(rep.dice[2] == 0.0);
  CHECK(rep.pred_pixels == std::vector<std::size_t>{1, 2, 1});
  CHECK(rep.gt_pixels == std::vector<std::size_t>{1, 3, 0});
  CHECK(rep.violations == 1);
  CHECK_THROWS_AS(score_prediction(pred, LabelMap{1, 2, 2, {0, 1, 1, 1}}),
                  ConfigError);
}
