#include "nestseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nestseg/common.hpp"
#include "nestseg/synth.hpp"

namespace nestseg {

void Thresholds::validate() const {
  check_config(!theta.empty(), "Thresholds: empty");
  const int mm = m();
  for (int i = 0; i < mm; ++i) {
    check_config(theta[static_cast<std::size_t>(i)] > 0.0 &&
                     theta[static_cast<std::size_t>(i)] < mm,
                 "Thresholds: theta_", i + 1, " = ",
                 theta[static_cast<std::size_t>(i)], " outside (0, ", mm, ")");
    if (i > 0)
      check_config(theta[static_cast<std::size_t>(i - 1)] <
                       theta[static_cast<std::size_t>(i)],
                   "Thresholds: not strictly increasing at theta_", i + 1);
  }
}

Thresholds preset_thresholds(LossKind loss, int m) {
  check_config(m >= 1, "preset_thresholds: m >= 1 required, got ", m);
  check_config(loss != LossKind::kSoftmaxCe,
               "preset_thresholds: the softmax baseline decides by argmax, "
               "not thresholds");
  Thresholds th;
  th.theta.resize(static_cast<std::size_t>(m));
  for (int n = 1; n <= m; ++n)
    th.theta[static_cast<std::size_t>(n - 1)] = n - 0.5;
  if (loss == LossKind::kMce)
    th.theta.back() = static_cast<double>(m) * m / (m + 1);
  return th;
}

LabelMap threshold_map(const Image& a_map, const Thresholds& th) {
  th.validate();
  LabelMap out;
  out.m = th.m();
  out.height = a_map.height;
  out.width = a_map.width;
  out.values.resize(a_map.values.size());
  for (std::size_t i = 0; i < a_map.values.size(); ++i) {
    int cls = 0;
    for (double t : th.theta)
      if (t <= a_map.values[i]) ++cls;
    out.values[i] = static_cast<uint8_t>(cls);
  }
  return out;
}

double dice(const LabelMap& pred, const LabelMap& gt, int c) {
  check_config(pred.height == gt.height && pred.width == gt.width,
               "dice: prediction is ", pred.height, "x", pred.width,
               " but ground truth is ", gt.height, "x", gt.width);
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] == c;
    const bool g = gt.values[i] == c;
    np += p;
    ng += g;
    both += p && g;
  }
  if (np + ng == 0) return 1.0;  // agreement on absence
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

Thresholds sweep_top_threshold(std::span<const Image> a_maps,
                               std::span<const LabelMap> gts,
                               int class_of_interest,
                               const std::vector<double>& top_grid,
                               const Thresholds& base) {
  check_config(!a_maps.empty(), "sweep_top_threshold: empty validation set");
  check_config(a_maps.size() == gts.size(), "sweep_top_threshold: ",
               a_maps.size(), " activation maps vs ", gts.size(),
               " ground-truth maps");
  check_config(!top_grid.empty(), "sweep_top_threshold: empty candidate grid");
  base.validate();
  check_config(class_of_interest >= 0 && class_of_interest <= base.m(),
               "sweep_top_threshold: class ", class_of_interest,
               " out of range [0, ", base.m(), "]");

  std::vector<double> grid = top_grid;
  std::sort(grid.begin(), grid.end());
  Thresholds best = base;
  double best_score = -1.0;
  for (double cand : grid) {
    Thresholds th = base;
    th.theta.back() = cand;
    th.validate();
    double total = 0.0;
    for (std::size_t i = 0; i < a_maps.size(); ++i)
      total += dice(threshold_map(a_maps[i], th), gts[i], class_of_interest);
    const double score = total / static_cast<double>(a_maps.size());
    if (score > best_score + 1e-12) {  // strict improvement: ties keep smallest
      best_score = score;
      best = th;
    }
  }
  return best;
}

std::vector<double> top_threshold_grid(const Thresholds& base, int points) {
  base.validate();
  check_config(points >= 1, "top_threshold_grid: points >= 1 required, got ",
               points);
  const int m = base.m();
  const double lo = m >= 2 ? base.theta[static_cast<std::size_t>(m) - 2] : 0.0;
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 1; i <= points; ++i)
    grid[static_cast<std::size_t>(i - 1)] =
        lo + i * (static_cast<double>(m) - lo) / (points + 1);
  return grid;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

namespace {

double normal_sf_two_sided(double z_abs) {
  return std::erfc(z_abs / std::sqrt(2.0));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                    std::span<const double> y) {
  check_config(x.size() == y.size(), "wilcoxon_signed_rank: paired lists of ",
               x.size(), " and ", y.size(), " scores");
  check_config(!x.empty(), "wilcoxon_signed_rank: empty input");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) return {0.0, 1.0, 0};

  const int n = static_cast<int>(diffs.size());
  check_config(n >= 5, "wilcoxon_signed_rank: only ", n,
               " nonzero differences; need at least 5 for a meaningful test");

  // Average ranks of |d|, tie groups tracked for the variance correction.
  std::vector<std::size_t> idx(diffs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });
  std::vector<double> ranks(diffs.size());
  double tie_correction = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() &&
           std::abs(diffs[idx[j]]) == std::abs(diffs[idx[i]]))
      ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[idx[t]] = avg_rank;
    const double g = static_cast<double>(j - i);
    tie_correction += (g * g * g - g) / 48.0;
    i = j;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0.0) w_plus += ranks[i];
  const double total = static_cast<double>(n) * (n + 1) / 2.0;
  const double w_minus = total - w_plus;
  const double w_obs = std::min(w_plus, w_minus);

  WilcoxonResult res;
  res.w = w_obs;
  res.n = n;

  if (n <= 12) {
    // Exact two-sided p: fraction of all sign assignments whose min rank sum
    // is at least as extreme as observed.
    const unsigned long assignments = 1UL << n;
    unsigned long hits = 0;
    for (unsigned long mask = 0; mask < assignments; ++mask) {
      double s = 0.0;
      for (int b = 0; b < n; ++b)
        if (mask & (1UL << b)) s += ranks[static_cast<std::size_t>(b)];
      if (std::min(s, total - s) <= w_obs + 1e-12) ++hits;
    }
    res.p = static_cast<double>(hits) / static_cast<double>(assignments);
  } else {
    const double mean = total / 2.0;
    const double var =
        static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_correction;
    check_runtime(var > 0.0,
                  "wilcoxon_signed_rank: zero variance (all ranks tied)");
    double d = w_plus - mean;
    // Continuity correction shrinks |d| by 0.5.
    d = d > 0.0 ? std::max(0.0, d - 0.5) : std::min(0.0, d + 0.5);
    res.p = std::min(1.0, normal_sf_two_sided(std::abs(d) / std::sqrt(var)));
  }
  return res;
}

LabelMap baseline_predict(const std::vector<double>& logits, int channels,
                          int height, int width) {
  check_config(channels >= 1, "baseline_predict: channels >= 1 required, got ",
               channels);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  check_config(logits.size() == plane * channels, "baseline_predict: ",
               channels, "x", height, "x", width, " wants ", plane * channels,
               " logits, got ", logits.size());
  LabelMap out;
  out.m = channels - 1;
  out.height = height;
  out.width = width;
  out.values.resize(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    double best_v = logits[p];
    for (int c = 1; c < channels; ++c) {
      const double v = logits[c * plane + p];
      if (v > best_v) {  // strict: ties keep the lowest class
        best_v = v;
        best = c;
      }
    }
    out.values[p] = static_cast<uint8_t>(best);
  }
  return out;
}

DiceReport score_prediction(const LabelMap& pred, const LabelMap& gt) {
  check_config(pred.m == gt.m, "score_prediction: prediction has m=", pred.m,
               ", ground truth m=", gt.m);
  DiceReport rep;
  const std::size_t classes = static_cast<std::size_t>(gt.m) + 1;
  rep.dice.resize(classes);
  rep.pred_pixels.assign(classes, 0);
  rep.gt_pixels.assign(classes, 0);
  for (uint8_t v : pred.values) ++rep.pred_pixels[v];
  for (uint8_t v : gt.values) ++rep.gt_pixels[v];
  for (std::size_t c = 0; c < classes; ++c)
    rep.dice[c] = dice(pred, gt, static_cast<int>(c));
  rep.violations = validate_nesting(pred);
  return rep;
}

}  // namespace nestseg
