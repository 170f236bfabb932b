#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "doctest.h"
#include "nestseg/common.hpp"
#include "nestseg/config.hpp"

using namespace nestseg;

namespace {

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected a config error");
  return "";
}

bool same_config(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.scene.height == b.scene.height && a.scene.width == b.scene.width &&
         a.scene.m == b.scene.m && a.scene.blobs_min == b.scene.blobs_min &&
         a.scene.blobs_max == b.scene.blobs_max &&
         a.scene.children_min == b.scene.children_min &&
         a.scene.children_max == b.scene.children_max &&
         a.scene.radius_frac == b.scene.radius_frac &&
         a.scene.aspect_max == b.scene.aspect_max &&
         a.scene.jitter_px == b.scene.jitter_px &&
         a.scene.intensity_means == b.scene.intensity_means &&
         a.scene.noise_sigma == b.scene.noise_sigma &&
         a.network.input_channels == b.network.input_channels &&
         a.network.depth == b.network.depth &&
         a.network.base_channels == b.network.base_channels &&
         a.network.head == b.network.head && a.network.m == b.network.m &&
         a.activation.m == b.activation.m && a.activation.h == b.activation.h &&
         a.activation.kappa == b.activation.kappa &&
         a.activation.t == b.activation.t && a.loss == b.loss &&
         a.methods == b.methods && a.iterations == b.iterations &&
         a.batch_size == b.batch_size && a.eval_every == b.eval_every &&
         a.learning_rate == b.learning_rate && a.k_folds == b.k_folds &&
         a.n_images == b.n_images &&
         a.theta_grid_points == b.theta_grid_points &&
         a.output_dir == b.output_dir && a.master_seed == b.master_seed &&
         a.augment.enabled == b.augment.enabled &&
         a.augment.translate_frac == b.augment.translate_frac &&
         a.augment.scale_min == b.augment.scale_min &&
         a.augment.scale_max == b.augment.scale_max;
}

}  // namespace

TEST_CASE("defaults are a valid runnable recipe") {
  ExperimentConfig cfg;
  cfg.finalize_and_validate();
  CHECK(cfg.scene.height == 40);
  CHECK(cfg.scene.width == 40);
  CHECK(cfg.scene.m == 2);
  CHECK(cfg.network.m == 2);  // copied from the scene
  CHECK(cfg.activation.m == 2);
  CHECK(cfg.iterations % cfg.eval_every == 0);
  CHECK(cfg.n_images % cfg.k_folds == 0);
  CHECK(cfg.methods ==
        std::vector<std::string>{"softmax-ce", "sse", "mce", "nce",
                                 "mce-flat"});

  // Empty text parses to the same defaults.
  const ExperimentConfig parsed = parse_config_text("", "empty");
  CHECK(same_config(cfg, parsed));
}

TEST_CASE("dump and parse are inverse") {
  ExperimentConfig cfg;
  cfg.finalize_and_validate();
  CHECK(same_config(cfg, parse_config_text(dump_config(cfg), "dump")));

  // A heavily customized recipe survives the trip too, exact doubles included.
  ExperimentConfig custom;
  custom.scene.height = 64;
  custom.scene.width = 32;
  custom.scene.jitter_px = 1.37e-1;
  custom.scene.noise_sigma = 0.041999999999999996;
  custom.network.depth = 3;
  custom.network.base_channels = 8;
  custom.activation.kappa = 12.5;
  custom.activation.t = 100.0;
  custom.loss = LossKind::kNce;
  custom.methods = {"nce", "mce-flat"};
  custom.iterations = 90;
  custom.eval_every = 9;
  custom.batch_size = 3;
  custom.learning_rate = 3.0000000000000001e-4;
  custom.k_folds = 8;
  custom.n_images = 24;
  custom.output_dir = "elsewhere";
  custom.master_seed = 18446744073709551615ull;
  custom.augment.enabled = false;
  custom.finalize_and_validate();
  const ExperimentConfig back =
      parse_config_text(dump_config(custom), "dump2");
  CHECK(same_config(custom, back));

  ExperimentConfig softmax;
  softmax.loss = LossKind::kSoftmaxCe;
  softmax.network.head = HeadKind::kSoftmax;
  softmax.finalize_and_validate();
  CHECK(same_config(softmax,
                    parse_config_text(dump_config(softmax), "dump3")));
}

TEST_CASE("scene m feeds the network head and activation") {
  const ExperimentConfig cfg = parse_config_text(
      "[scene]\n"
      "m = 3\n"
      "radius-frac-min = 0.10, 0.20, 0.32\n"
      "radius-frac-max = 0.15, 0.30, 0.45\n"
      "intensity-means = 0.9, 0.7, 0.5, 0.3\n",
      "m3");
  CHECK(cfg.scene.m == 3);
  CHECK(cfg.network.m == 3);
  CHECK(cfg.activation.m == 3);
  REQUIRE(cfg.scene.radius_frac.size() == 3);
  CHECK(cfg.scene.radius_frac[2] == std::pair<double, double>{0.32, 0.45});
}

TEST_CASE("value parsing accepts comments, spacing, and typed fields") {
  const ExperimentConfig cfg = parse_config_text(
      "# leading comment\n"
      "\n"
      "[train]\n"
      "  iterations = 100   # inline note\n"
      "eval-every=10\n"
      "augment = off\n"
      "master-seed = 7\n"
      "methods = sse , mce-flat\n"
      "[activation]\n"
      "kappa = 12.5\n",
      "styling");
  CHECK(cfg.iterations == 100);
  CHECK(cfg.eval_every == 10);
  CHECK(cfg.augment.enabled == false);
  CHECK(cfg.master_seed == 7);
  CHECK(cfg.methods == std::vector<std::string>{"sse", "mce-flat"});
  CHECK(cfg.activation.kappa == 12.5);
  CHECK(method_loss("mce-flat") == LossKind::kMce);
  CHECK(method_loss("sse") == LossKind::kSse);
  CHECK(method_uses_uniform_weights("mce-flat"));
  CHECK(!method_uses_uniform_weights("mce"));
}

TEST_CASE("parse errors carry origin and line number") {
  const std::string unknown_key = thrown_message(
      [] { parse_config_text("[scene]\nfoo = 1\n", "test.ini"); });
  CHECK(unknown_key.find("test.ini:2:") != std::string::npos);
  CHECK(unknown_key.find("unknown key 'foo' in [scene]") != std::string::npos);

  const std::string unknown_section = thrown_message(
      [] { parse_config_text("[bogus]\nx = 1\n", "test.ini"); });
  CHECK(unknown_section.find("test.ini:2:") != std::string::npos);
  CHECK(unknown_section.find("unknown section [bogus]") != std::string::npos);

  const std::string no_section = thrown_message(
      [] { parse_config_text("iterations = 5\n", "test.ini"); });
  CHECK(no_section.find("test.ini:1:") != std::string::npos);
  CHECK(no_section.find("before any [section] header") != std::string::npos);

  const std::string no_equals = thrown_message(
      [] { parse_config_text("[train]\niterations\n", "test.ini"); });
  CHECK(no_equals.find("expected 'key = value'") != std::string::npos);

  const std::string bad_number = thrown_message(
      [] { parse_config_text("[activation]\nkappa = abc\n", "test.ini"); });
  CHECK(bad_number.find("test.ini:2:") != std::string::npos);
  CHECK(bad_number.find("bad number 'abc'") != std::string::npos);

  const std::string bad_seed = thrown_message([] {
    parse_config_text("[train]\nmaster-seed = -3\n", "test.ini");
  });
  CHECK(bad_seed.find("bad unsigned integer '-3'") != std::string::npos);

  const std::string bad_bool = thrown_message([] {
    parse_config_text("[train]\naugment = maybe\n", "test.ini");
  });
  CHECK(bad_bool.find("bad boolean 'maybe'") != std::string::npos);
}

TEST_CASE("cross-field validation rejects inconsistent recipes") {
  const std::string kappa = thrown_message(
      [] { parse_config_text("[activation]\nkappa = -1\n", "neg"); });
  CHECK(kappa.find("kappa > 0") != std::string::npos);

  // Pairing invariant, both directions.
  const std::string ml_head = thrown_message([] {
    parse_config_text("[train]\nloss = nce\n[network]\nhead = softmax\n",
                      "pair");
  });
  CHECK(ml_head.find("requires head 'multi-level'") != std::string::npos);
  const std::string sm_head = thrown_message(
      [] { parse_config_text("[train]\nloss = softmax-ce\n", "pair"); });
  CHECK(sm_head.find("requires head 'softmax'") != std::string::npos);

  const std::string eval = thrown_message(
      [] { parse_config_text("[train]\neval-every = 7\n", "eval"); });
  CHECK(eval.find("eval-every 7 must divide iterations 600") !=
        std::string::npos);

  const std::string folds = thrown_message(
      [] { parse_config_text("[train]\nk-folds = 5\n", "folds"); });
  CHECK(folds.find("k-folds 5 must divide n-images 16") != std::string::npos);

  const std::string divisible = thrown_message(
      [] { parse_config_text("[scene]\nheight = 42\n", "grid"); });
  CHECK(divisible.find("divisible by 2^depth = 4") != std::string::npos);
  // Deeper net, same extent: 40 is not a multiple of 16.
  CHECK_THROWS_AS(parse_config_text("[network]\ndepth = 4\n", "grid"),
                  ConfigError);

  const std::string dup = thrown_message(
      [] { parse_config_text("[train]\nmethods = sse,sse\n", "dup"); });
  CHECK(dup.find("method 'sse' listed twice") != std::string::npos);

  CHECK_THROWS_AS(parse_config_text("[train]\nmethods = frobnicate\n", "m"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\nmethods =\n", "m"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\niterations = -1\n", "it"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("[train]\nlearning-rate = 0\n", "lr"),
                  ConfigError);
}

TEST_CASE("config files parse like inline text") {
  const auto path =
      (std::filesystem::temp_directory_path() / "nestseg-config-test.ini")
          .string();
  {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << "[train]\niterations = 50\neval-every = 10\n";
  }
  const ExperimentConfig cfg = parse_config_file(path);
  CHECK(cfg.iterations == 50);
  CHECK(cfg.eval_every == 10);
  std::remove(path.c_str());

  const std::string missing = thrown_message(
      [] { parse_config_file("/nonexistent-dir/nothing.ini"); });
  CHECK(missing.find("cannot open config file") != std::string::npos);
}
