#pragma once

#include <span>
#include <vector>

#include "nestseg/image.hpp"
#include "nestseg/losses.hpp"

namespace nestseg {

// Ordinal decision thresholds theta_1 < ... < theta_m, each in (0, m).
// A pixel with activation a gets class = #{k : theta_k <= a}.
struct Thresholds {
  std::vector<double> theta;

  int m() const { return static_cast<int>(theta.size()); }
  void validate() const;
};

// Preset thresholds theta_n = n - 0.5, except that for the mce loss the top
// threshold sits where the pseudo-probabilities of the two innermost classes
// intersect, at m^2/(m+1) (= 4/3 for m = 2). For nce and sse the
// intersection argument lands back on m - 0.5.
Thresholds preset_thresholds(LossKind loss, int m);

// Left-closed ordinal thresholding: a == theta_k maps to class k.
LabelMap threshold_map(const Image& a_map, const Thresholds& th);

// 2|P ∩ G| / (|P| + |G|) for class c; 1.0 when the class is absent from both
// maps (perfect agreement on absence).
double dice(const LabelMap& pred, const LabelMap& gt, int c);

// Picks the top threshold from `top_grid` maximizing the mean Dice of
// `class_of_interest` over the validation pairs; lower thresholds come from
// `base`. Ties break toward the smallest grid value.
Thresholds sweep_top_threshold(std::span<const Image> a_maps,
                               std::span<const LabelMap> gts,
                               int class_of_interest,
                               const std::vector<double>& top_grid,
                               const Thresholds& base);

// Evenly spaced interior candidates for the top threshold, spanning
// (theta_{m-1}, m) exclusive.
std::vector<double> top_threshold_grid(const Thresholds& base, int points);

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-) over nonzero differences
  double p = 1.0;  // two-sided
  int n = 0;       // pairs remaining after dropping zero differences
};

// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped
// (all-zero input returns W=0, p=1); ties get average ranks. Exact p by full
// sign enumeration for n <= 12, else a normal approximation with tie and
// continuity corrections. n < 5 after dropping zeros is an error.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                    std::span<const double> y);

// Per-pixel argmax over logit channels [C,H,W]; ties pick the lowest class.
LabelMap baseline_predict(const std::vector<double>& logits, int channels,
                          int height, int width);

// Per-class scoring of one prediction against ground truth.
struct DiceReport {
  std::vector<double> dice;              // per class 0..m
  std::vector<std::size_t> pred_pixels;  // per class
  std::vector<std::size_t> gt_pixels;    // per class
  int violations = 0;                    // validate_nesting(pred)
};

DiceReport score_prediction(const LabelMap& pred, const LabelMap& gt);

}  // namespace nestseg
