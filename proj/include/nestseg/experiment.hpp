#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "nestseg/config.hpp"
#include "nestseg/metrics.hpp"
#include "nestseg/segnet.hpp"
#include "nestseg/synth.hpp"

namespace nestseg {

// The n-images scenes for one master seed; sample i is a pure function of
// (scene spec, master seed, i).
std::vector<Sample> generate_dataset(const SceneSpec& spec, int n_images,
                                     uint64_t master_seed);

struct CurvePoint {
  int iteration = 0;
  double val_dice = 0.0;  // innermost class, preset thresholds / argmax
};

struct TrainOutput {
  std::unique_ptr<SegNet> net;
  std::vector<CurvePoint> curve;
  // First evaluated iteration with validation Dice >= 0.8 for the innermost
  // class; iterations + eval_every when never reached (censored).
  int iterations_to_target = 0;
};

// Trains one network for `method` on the triple's training images with online
// augmentation, evaluating on the validation images every eval_every steps.
// Deterministic per (cfg, method, data, triple, run_seed).
TrainOutput train_one(const ExperimentConfig& cfg, const std::string& method,
                      const std::vector<Sample>& data, const FoldTriple& triple,
                      uint64_t run_seed);

// Forward pass helpers (no gradient bookkeeping).
Image activation_map(const SegNet& net, const ActivationConfig& ac,
                     const Image& img);
std::vector<double> logit_map(const SegNet& net, const Image& img);

// One scored prediction set for a (triple, method) pair.
struct BenchmarkRow {
  int triple = 0;
  std::string method;              // e.g. "sse" or "sse-preset"
  std::vector<double> dice;        // per class 0..m
  double theta_top = 0.0;          // NaN for the argmax baseline
  int violations = 0;
  int iterations_to_target = 0;
};

struct MethodSummary {
  std::string method;
  std::vector<double> mean_dice;  // per class
  std::vector<double> sd_dice;    // per class
  double mean_violations = 0.0;
  double mean_iterations = 0.0;
  // Paired test vs the baseline on innermost-class test Dice; NaN when not
  // applicable (the baseline itself, or too few nonzero differences).
  double wilcoxon_p = 0.0;
  double wilcoxon_w = 0.0;
  int wilcoxon_n = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<CurvePoint> curves;      // flattened; see curve_keys
  std::vector<std::pair<int, std::string>> curve_keys;  // (triple, method) per point
  std::vector<MethodSummary> summaries;
};

// Full cross-validation benchmark for one master seed: every triple times
// every method in cfg.methods, threshold sweep on validation, scoring on the
// test image. Writes report.csv (flushed after every triple), curves.csv and
// summary.csv under cfg.output_dir. `progress` (may be null) receives one
// line per completed triple/method.
BenchmarkReport run_benchmark(const ExperimentConfig& cfg,
                              std::ostream* progress);

// Training entry point: trains cfg.loss on the first cross-validation triple
// and writes checkpoint.nseg (+ .ini config sidecar) and curve.csv under
// cfg.output_dir.
TrainOutput run_training(const ExperimentConfig& cfg, std::ostream* progress);

}  // namespace nestseg
