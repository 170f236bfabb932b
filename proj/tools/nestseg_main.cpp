#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nestseg/common.hpp"
#include "nestseg/config.hpp"
#include "nestseg/experiment.hpp"
#include "nestseg/metrics.hpp"
#include "nestseg/param_store.hpp"
#include "nestseg/pgm.hpp"
#include "nestseg/segnet.hpp"
#include "nestseg/synth.hpp"

namespace {

using namespace nestseg;

ExperimentConfig load_config(const std::string& config_path,
                             const std::string& out_dir, uint64_t seed,
                             bool seed_set) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = parse_config_file(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_set) cfg.master_seed = seed;
  cfg.finalize_and_validate();
  return cfg;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::vector<Sample> data =
      generate_dataset(cfg.scene, cfg.n_images, cfg.master_seed);
  std::ofstream manifest(cfg.output_dir + "/manifest.txt");
  check_runtime(manifest.good(), "gen-data: cannot write to ", cfg.output_dir);
  manifest << "# image/label pairs generated with master-seed "
           << cfg.master_seed << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    char img_name[32], lab_name[32];
    std::snprintf(img_name, sizeof img_name, "img_%02zu.pgm", i);
    std::snprintf(lab_name, sizeof lab_name, "lab_%02zu.pgm", i);
    write_pgm(data[i].image, cfg.output_dir + "/" + img_name);
    write_label_pgm(data[i].label, cfg.output_dir + "/" + lab_name);
    manifest << img_name << " " << lab_name << "\n";
  }
  manifest << "\n# generating configuration:\n";
  std::istringstream dump(dump_config(cfg));
  std::string line;
  while (std::getline(dump, line)) manifest << "# " << line << "\n";
  check_runtime(manifest.good(), "gen-data: failed writing manifest");
  std::cout << "wrote " << data.size() << " image/label pairs to "
            << cfg.output_dir << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path,
                const std::string& image_path,
                const std::string& thresholds_arg, const std::string& out_dir) {
  check_config(!checkpoint_path.empty(), "predict: --checkpoint is required");
  check_config(!image_path.empty(), "predict: --image is required");
  const std::string sidecar = checkpoint_path + ".ini";
  check_runtime(std::filesystem::exists(checkpoint_path),
                "predict: checkpoint ", checkpoint_path, " does not exist");
  check_runtime(std::filesystem::exists(sidecar), "predict: config sidecar ",
                sidecar, " does not exist");
  ExperimentConfig cfg = parse_config_file(sidecar);
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  SegNet net(
      [&] {
        NetworkConfig nc = cfg.network;
        nc.m = cfg.scene.m;
        nc.head = cfg.loss == LossKind::kSoftmaxCe ? HeadKind::kSoftmax
                                                   : HeadKind::kMultiLevel;
        return nc;
      }(),
      0);
  net.params().params.clear();
  load_checkpoint(net.params(), checkpoint_path);

  const Image img = read_pgm(image_path);
  const int m = cfg.scene.m;
  LabelMap pred;
  Image act;
  act.height = img.height;
  act.width = img.width;
  if (cfg.loss == LossKind::kSoftmaxCe) {
    std::vector<double> logits = logit_map(net, img);
    pred = baseline_predict(logits, m + 1, img.height, img.width);
    // Scalar summary of the logits: softmax-expected class level.
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    act.values.resize(plane);
    for (std::size_t p = 0; p < plane; ++p) {
      double zmax = logits[p];
      for (int c = 1; c <= m; ++c)
        zmax = std::max(zmax, logits[c * plane + p]);
      double denom = 0.0, acc = 0.0;
      for (int c = 0; c <= m; ++c) {
        const double e = std::exp(logits[c * plane + p] - zmax);
        denom += e;
        acc += c * e;
      }
      act.values[p] = acc / denom / m;
    }
  } else {
    Thresholds th = preset_thresholds(cfg.loss, m);
    if (!thresholds_arg.empty()) {
      th.theta.clear();
      std::stringstream ss(thresholds_arg);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          std::size_t pos = 0;
          const double v = std::stod(item, &pos);
          check_config(pos == item.size(), "predict: bad threshold '", item,
                       "'");
          th.theta.push_back(v);
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception&) {
          throw ConfigError(format_msg("predict: bad threshold '", item, "'"));
        }
      }
      check_config(th.m() == m, "predict: got ", th.m(), " thresholds for m=",
                   m);
      th.validate();
    }
    act = activation_map(net, cfg.activation, img);
    pred = threshold_map(act, th);
    for (double& v : act.values) v /= m;  // scale (0,m) into [0,1] for PGM
  }

  std::filesystem::create_directories(cfg.output_dir);
  write_label_pgm(pred, cfg.output_dir + "/pred_label.pgm");
  for (double& v : act.values) v = std::clamp(v, 0.0, 1.0);
  write_pgm(act, cfg.output_dir + "/pred_activation.pgm");

  std::vector<std::size_t> counts(static_cast<std::size_t>(m) + 1, 0);
  for (uint8_t v : pred.values) ++counts[v];
  for (std::size_t c = 0; c < counts.size(); ++c)
    std::cout << "class " << c << ": " << counts[c] << " pixels\n";
  std::cout << "violations: " << validate_nesting(pred) << "\n";
  std::cout << "wrote " << cfg.output_dir << "/pred_label.pgm and "
            << cfg.output_dir << "/pred_activation.pgm\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested-class segmentation workbench"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir;
  uint64_t seed = 0;
  bool print_defaults = false;
  app.add_option("--config", config_path, "INI config file");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  auto* seed_opt =
      app.add_option("--seed", seed, "master seed (overrides config)");
  app.add_flag("--print-defaults", print_defaults,
               "print the resolved configuration and exit");

  auto* train_cmd = app.add_subcommand("train", "train one network");
  auto* bench_cmd =
      app.add_subcommand("benchmark", "cross-validated method comparison");
  auto* predict_cmd =
      app.add_subcommand("predict", "segment one image with a checkpoint");
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset");

  std::string checkpoint_path, image_path, thresholds_arg;
  predict_cmd->add_option("--checkpoint", checkpoint_path,
                          "checkpoint file (expects a .ini sidecar next to it)");
  predict_cmd->add_option("--image", image_path, "input PGM image");
  predict_cmd->add_option("--thresholds", thresholds_arg,
                          "comma-separated decision thresholds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (print_defaults) {
      ExperimentConfig cfg = load_config(config_path, out_dir, seed,
                                         seed_opt->count() > 0);
      std::cout << dump_config(cfg);
      return 0;
    }
    check_config(app.get_subcommands().size() == 1,
                 "expected one of: train, benchmark, predict, gen-data");
    if (predict_cmd->parsed())
      return cmd_predict(checkpoint_path, image_path, thresholds_arg, out_dir);

    ExperimentConfig cfg =
        load_config(config_path, out_dir, seed, seed_opt->count() > 0);
    if (train_cmd->parsed()) {
      nestseg::run_training(cfg, &std::cout);
      return 0;
    }
    if (bench_cmd->parsed()) {
      nestseg::run_benchmark(cfg, &std::cout);
      return 0;
    }
    if (gen_cmd->parsed()) return cmd_gen_data(cfg);
    return 0;
  } catch (const nestseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const nestseg::RuntimeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
