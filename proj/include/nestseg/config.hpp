#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nestseg/activation.hpp"
#include "nestseg/losses.hpp"
#include "nestseg/segnet.hpp"
#include "nestseg/synth.hpp"

namespace nestseg {

// Full experiment recipe. Defaults are sized so that the complete benchmark
// (all methods x all cross-validation triples x 5 master seeds) finishes in
// tens of minutes on one CPU core; larger settings are a config file away.
// scene.m is the single source of truth for the nesting depth — the network
// and activation copy it when a config is parsed or dumped.
struct ExperimentConfig {
  SceneSpec scene;
  NetworkConfig network;
  ActivationConfig activation;
  AugmentConfig augment;
  LossKind loss = LossKind::kSse;
  std::vector<std::string> methods;  // benchmark column list
  int iterations = 600;
  int batch_size = 2;
  int eval_every = 25;
  double learning_rate = 1e-3;
  int k_folds = 4;
  int n_images = 16;
  int theta_grid_points = 41;
  std::string output_dir = "out";
  uint64_t master_seed = 1;

  ExperimentConfig();

  // Copies scene.m into network/activation and checks cross-field
  // invariants; called by the parser and before every run.
  void finalize_and_validate();
};

// Method labels accepted in the benchmark list: the four losses plus
// "mce-flat" (mce with uniform class weights, the reweighting ablation).
LossKind method_loss(const std::string& method);
bool method_uses_uniform_weights(const std::string& method);

// Flat INI: `key = value`, `#` comments, sections [scene], [network],
// [train], [activation]. Unknown keys or sections are errors. Errors report
// `origin:line:`.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Complete INI dump of a config; parse_config_text(dump_config(c))
// reproduces c. Used by --print-defaults and as the checkpoint sidecar.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace nestseg
