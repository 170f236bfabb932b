#include "nestseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "nestseg/common.hpp"
#include "nestseg/losses.hpp"
#include "nestseg/param_store.hpp"

namespace nestseg {

std::vector<Sample> generate_dataset(const SceneSpec& spec, int n_images,
                                     uint64_t master_seed) {
  check_config(n_images >= 1, "generate_dataset: n-images >= 1 required, got ",
               n_images);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i)
    out.push_back(generate_scene(
        spec, derive_seed(master_seed, 0xDA7A, static_cast<uint64_t>(i))));
  return out;
}

namespace {

// Suspends gradient tracking on all parameters for cheap inference passes.
struct InferenceGuard {
  ParamStore& store;
  explicit InferenceGuard(const ParamStore& s)
      : store(const_cast<ParamStore&>(s)) {
    for (auto& [name, t] : store.params) t.set_requires_grad(false);
  }
  ~InferenceGuard() {
    for (auto& [name, t] : store.params) t.set_requires_grad(true);
  }
};

Tensor image_batch(const std::vector<const Image*>& imgs) {
  const int h = imgs[0]->height, w = imgs[0]->width;
  Tensor t = Tensor::zeros({static_cast<int>(imgs.size()), 1, h, w});
  std::size_t off = 0;
  for (const Image* img : imgs) {
    check_config(img->height == h && img->width == w,
                 "image_batch: mixed extents ", h, "x", w, " and ", img->height,
                 "x", img->width);
    std::copy(img->values.begin(), img->values.end(), t.values().begin() + off);
    off += img->values.size();
  }
  return t;
}

LabelMap predict_label(const SegNet& net, const ExperimentConfig& cfg,
                       const std::string& method, const Image& img,
                       const Thresholds* th) {
  if (method_loss(method) == LossKind::kSoftmaxCe) {
    std::vector<double> logits = logit_map(net, img);
    return baseline_predict(logits, net.config().out_channels(), img.height,
                            img.width);
  }
  const Thresholds preset = preset_thresholds(method_loss(method), cfg.scene.m);
  return threshold_map(activation_map(net, cfg.activation, img),
                       th ? *th : preset);
}

double mean_val_dice(const SegNet& net, const ExperimentConfig& cfg,
                     const std::string& method,
                     const std::vector<Sample>& data,
                     const std::vector<int>& val_indices) {
  const int innermost = cfg.scene.m;
  double total = 0.0;
  for (int idx : val_indices) {
    const Sample& s = data[static_cast<std::size_t>(idx)];
    total += dice(predict_label(net, cfg, method, s.image, nullptr), s.label,
                  innermost);
  }
  return total / static_cast<double>(val_indices.size());
}

}  // namespace

Image activation_map(const SegNet& net, const ActivationConfig& ac,
                     const Image& img) {
  InferenceGuard guard(net.params());
  Tensor out = net.forward(image_batch({&img}));
  check_runtime(out.dim(1) == 1,
                "activation_map: network has ", out.dim(1),
                " output channels, the multi-level head needs 1");
  Tensor a = multi_level_activation(out, ac);
  Image result;
  result.height = img.height;
  result.width = img.width;
  result.values = a.values();
  return result;
}

std::vector<double> logit_map(const SegNet& net, const Image& img) {
  InferenceGuard guard(net.params());
  Tensor out = net.forward(image_batch({&img}));
  return out.values();
}

TrainOutput train_one(const ExperimentConfig& cfg, const std::string& method,
                      const std::vector<Sample>& data, const FoldTriple& triple,
                      uint64_t run_seed) {
  const LossKind loss = method_loss(method);
  check_config(!triple.train.empty(), "train_one: empty training set");
  check_config(!triple.val.empty(), "train_one: empty validation set");
  for (int idx : triple.train)
    check_config(idx >= 0 && idx < static_cast<int>(data.size()),
                 "train_one: training index ", idx, " outside dataset of ",
                 data.size());

  NetworkConfig netcfg = cfg.network;
  netcfg.m = cfg.scene.m;
  netcfg.head = loss == LossKind::kSoftmaxCe ? HeadKind::kSoftmax
                                             : HeadKind::kMultiLevel;

  TrainOutput out;
  out.net = std::make_unique<SegNet>(netcfg, derive_seed(run_seed, 1));
  SegNet& net = *out.net;

  ClassWeights weights = ClassWeights::uniform(cfg.scene.m);
  if (loss == LossKind::kMce && !method_uses_uniform_weights(method)) {
    std::vector<LabelMap> train_labels;
    for (int idx : triple.train)
      train_labels.push_back(data[static_cast<std::size_t>(idx)].label);
    weights = class_weights(train_labels);
  }

  Rng batch_rng(derive_seed(run_seed, 2));
  const double target = 0.8;
  out.iterations_to_target = cfg.iterations + cfg.eval_every;
  bool reached = false;

  for (int step = 1; step <= cfg.iterations; ++step) {
    std::vector<Sample> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int pick = triple.train[static_cast<std::size_t>(batch_rng.uniform_int(
          0, static_cast<int>(triple.train.size()) - 1))];
      batch.push_back(augment(data[static_cast<std::size_t>(pick)],
                              derive_seed(run_seed, 3, static_cast<uint64_t>(step),
                                          static_cast<uint64_t>(b)),
                              cfg.augment));
    }
    std::vector<const Image*> imgs;
    std::vector<LabelMap> labels;
    for (const Sample& s : batch) {
      imgs.push_back(&s.image);
      labels.push_back(s.label);
    }
    Tensor input = image_batch(imgs);
    Tensor logits = net.forward(input);
    Tensor loss_value;
    const std::span<const LabelMap> span(labels.data(), labels.size());
    switch (loss) {
      case LossKind::kSse:
        loss_value = sse_loss(multi_level_activation(logits, cfg.activation), span);
        break;
      case LossKind::kMce:
        loss_value =
            mce_loss(multi_level_activation(logits, cfg.activation), span, weights);
        break;
      case LossKind::kNce:
        loss_value = nce_loss(multi_level_activation(logits, cfg.activation), span,
                              cfg.activation.t);
        break;
      case LossKind::kSoftmaxCe:
        loss_value = softmax_ce_loss(logits, span);
        break;
    }
    check_runtime(std::isfinite(loss_value.item()), "train_one: ", method,
                  " loss became non-finite at step ", step);
    loss_value.backward();
    adam_step(net.params(), cfg.learning_rate);

    if (step % cfg.eval_every == 0) {
      const double v = mean_val_dice(net, cfg, method, data, triple.val);
      out.curve.push_back({step, v});
      if (!reached && v >= target) {
        out.iterations_to_target = step;
        reached = true;
      }
    }
  }
  return out;
}

namespace {

std::string csv_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Aggregation + Wilcoxon over one method's swept rows vs the baseline's.
MethodSummary summarize(const std::string& method,
                        const std::vector<const BenchmarkRow*>& rows,
                        const std::vector<const BenchmarkRow*>& baseline_rows,
                        int m) {
  MethodSummary s;
  s.method = method;
  const std::size_t classes = static_cast<std::size_t>(m) + 1;
  s.mean_dice.assign(classes, 0.0);
  s.sd_dice.assign(classes, 0.0);
  const double n = static_cast<double>(rows.size());
  for (const BenchmarkRow* r : rows) {
    for (std::size_t c = 0; c < classes; ++c) s.mean_dice[c] += r->dice[c];
    s.mean_violations += r->violations;
    s.mean_iterations += r->iterations_to_target;
  }
  for (std::size_t c = 0; c < classes; ++c) s.mean_dice[c] /= n;
  s.mean_violations /= n;
  s.mean_iterations /= n;
  for (const BenchmarkRow* r : rows)
    for (std::size_t c = 0; c < classes; ++c) {
      const double d = r->dice[c] - s.mean_dice[c];
      s.sd_dice[c] += d * d;
    }
  for (std::size_t c = 0; c < classes; ++c)
    s.sd_dice[c] = rows.size() > 1 ? std::sqrt(s.sd_dice[c] / (n - 1.0)) : 0.0;

  s.wilcoxon_p = std::nan("");
  s.wilcoxon_w = std::nan("");
  if (!baseline_rows.empty() && baseline_rows.size() == rows.size() &&
      rows != baseline_rows) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.push_back(rows[i]->dice[classes - 1]);
      y.push_back(baseline_rows[i]->dice[classes - 1]);
    }
    try {
      const WilcoxonResult wr = wilcoxon_signed_rank(x, y);
      s.wilcoxon_p = wr.p;
      s.wilcoxon_w = wr.w;
      s.wilcoxon_n = wr.n;
    } catch (const ConfigError&) {
      // Too few nonzero differences for the test; columns stay NaN.
    }
  }
  return s;
}

}  // namespace

BenchmarkReport run_benchmark(const ExperimentConfig& cfg_in,
                              std::ostream* progress) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize_and_validate();
  std::filesystem::create_directories(cfg.output_dir);

  const std::vector<Sample> data =
      generate_dataset(cfg.scene, cfg.n_images, cfg.master_seed);
  const std::vector<FoldTriple> triples =
      make_folds(cfg.n_images, cfg.k_folds, derive_seed(cfg.master_seed, 0xF01D5));
  const int m = cfg.scene.m;

  BenchmarkReport report;
  std::ofstream report_csv(cfg.output_dir + "/report.csv");
  check_runtime(report_csv.good(), "run_benchmark: cannot write to ",
                cfg.output_dir);
  report_csv << "fold,method,class,dice,theta2,violations,iterations\n";

  auto emit_row = [&](const BenchmarkRow& row) {
    report.rows.push_back(row);
    for (std::size_t c = 0; c < row.dice.size(); ++c)
      report_csv << row.triple << "," << row.method << "," << c << ","
                 << csv_real(row.dice[c]) << "," << csv_real(row.theta_top)
                 << "," << row.violations << "," << row.iterations_to_target
                 << "\n";
  };

  for (std::size_t ti = 0; ti < triples.size(); ++ti) {
    const FoldTriple& triple = triples[ti];
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const std::string& method = cfg.methods[mi];
      const uint64_t run_seed =
          derive_seed(cfg.master_seed, 0x5EED, static_cast<uint64_t>(ti),
                      static_cast<uint64_t>(mi));
      TrainOutput trained = train_one(cfg, method, data, triple, run_seed);
      for (const CurvePoint& pt : trained.curve) {
        report.curves.push_back(pt);
        report.curve_keys.emplace_back(static_cast<int>(ti), method);
      }
      const Sample& test = data[static_cast<std::size_t>(triple.test)];

      if (method_loss(method) == LossKind::kSoftmaxCe) {
        LabelMap pred = predict_label(*trained.net, cfg, method, test.image,
                                      nullptr);
        DiceReport dr = score_prediction(pred, test.label);
        emit_row({static_cast<int>(ti), method, dr.dice, std::nan(""),
                  dr.violations, trained.iterations_to_target});
      } else {
        const Thresholds preset = preset_thresholds(method_loss(method), m);
        std::vector<Image> val_maps;
        std::vector<LabelMap> val_gts;
        for (int idx : triple.val) {
          val_maps.push_back(activation_map(*trained.net, cfg.activation,
                                            data[static_cast<std::size_t>(idx)].image));
          val_gts.push_back(data[static_cast<std::size_t>(idx)].label);
        }
        const Thresholds swept = sweep_top_threshold(
            val_maps, val_gts, m,
            top_threshold_grid(preset, cfg.theta_grid_points), preset);

        const Image test_map =
            activation_map(*trained.net, cfg.activation, test.image);
        DiceReport dr_swept =
            score_prediction(threshold_map(test_map, swept), test.label);
        DiceReport dr_preset =
            score_prediction(threshold_map(test_map, preset), test.label);
        emit_row({static_cast<int>(ti), method, dr_swept.dice,
                  swept.theta.back(), dr_swept.violations,
                  trained.iterations_to_target});
        emit_row({static_cast<int>(ti), method + "-preset", dr_preset.dice,
                  preset.theta.back(), dr_preset.violations,
                  trained.iterations_to_target});
      }
      if (progress)
        *progress << "triple " << ti << "/" << triples.size() << " method "
                  << method << " done\n";
    }
    report_csv.flush();  // a crash loses at most the current triple
  }

  // Curves.
  std::ofstream curves_csv(cfg.output_dir + "/curves.csv");
  curves_csv << "fold,method,iteration,val_dice\n";
  for (std::size_t i = 0; i < report.curves.size(); ++i)
    curves_csv << report.curve_keys[i].first << "," << report.curve_keys[i].second
               << "," << report.curves[i].iteration << ","
               << csv_real(report.curves[i].val_dice) << "\n";

  // Aggregates; the means are recomputed from the emitted rows so the summary
  // can never drift from the report.
  std::vector<std::string> row_methods;
  for (const BenchmarkRow& r : report.rows)
    if (std::find(row_methods.begin(), row_methods.end(), r.method) ==
        row_methods.end())
      row_methods.push_back(r.method);
  std::map<std::string, std::vector<const BenchmarkRow*>> by_method;
  for (const BenchmarkRow& r : report.rows) by_method[r.method].push_back(&r);
  const std::vector<const BenchmarkRow*> baseline =
      by_method.count("softmax-ce") ? by_method["softmax-ce"]
                                    : std::vector<const BenchmarkRow*>{};
  for (const std::string& method : row_methods)
    report.summaries.push_back(
        summarize(method, by_method[method], baseline, m));

  // Self-consistency: the aggregate mean must equal the mean of row entries.
  for (const MethodSummary& s : report.summaries) {
    const auto& rows = by_method[s.method];
    for (std::size_t c = 0; c < s.mean_dice.size(); ++c) {
      double total = 0.0;
      for (const BenchmarkRow* r : rows) total += r->dice[c];
      check_runtime(std::abs(total / static_cast<double>(rows.size()) -
                             s.mean_dice[c]) < 1e-12,
                    "run_benchmark: summary mean for ", s.method, " class ", c,
                    " does not match its rows");
    }
  }

  std::ofstream summary_csv(cfg.output_dir + "/summary.csv");
  summary_csv << "method,class,mean_dice,sd_dice,mean_violations,"
                 "mean_iterations,wilcoxon_p,wilcoxon_w,wilcoxon_n\n";
  for (const MethodSummary& s : report.summaries)
    for (std::size_t c = 0; c < s.mean_dice.size(); ++c) {
      const bool innermost = c + 1 == s.mean_dice.size();
      summary_csv << s.method << "," << c << "," << csv_real(s.mean_dice[c])
                  << "," << csv_real(s.sd_dice[c]) << ","
                  << csv_real(s.mean_violations) << ","
                  << csv_real(s.mean_iterations) << ","
                  << (innermost ? csv_real(s.wilcoxon_p) : "nan") << ","
                  << (innermost ? csv_real(s.wilcoxon_w) : "nan") << ","
                  << (innermost ? std::to_string(s.wilcoxon_n) : "0") << "\n";
    }
  check_runtime(report_csv.good() && curves_csv.good() && summary_csv.good(),
                "run_benchmark: failed writing CSVs under ", cfg.output_dir);
  return report;
}

TrainOutput run_training(const ExperimentConfig& cfg_in, std::ostream* progress) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize_and_validate();
  std::filesystem::create_directories(cfg.output_dir);

  const std::vector<Sample> data =
      generate_dataset(cfg.scene, cfg.n_images, cfg.master_seed);
  const std::vector<FoldTriple> triples =
      make_folds(cfg.n_images, cfg.k_folds, derive_seed(cfg.master_seed, 0xF01D5));
  const std::string method = loss_kind_name(cfg.loss);
  TrainOutput out = train_one(cfg, method, data, triples[0],
                              derive_seed(cfg.master_seed, 0x5EED, 0, 0));

  save_checkpoint(out.net->params(), cfg.output_dir + "/checkpoint.nseg");
  std::ofstream sidecar(cfg.output_dir + "/checkpoint.nseg.ini");
  sidecar << dump_config(cfg);
  std::ofstream curve_csv(cfg.output_dir + "/curve.csv");
  curve_csv << "fold,method,iteration,val_dice\n";
  for (const CurvePoint& pt : out.curve)
    curve_csv << 0 << "," << method << "," << pt.iteration << ","
              << csv_real(pt.val_dice) << "\n";
  check_runtime(sidecar.good() && curve_csv.good(),
                "run_training: failed writing outputs under ", cfg.output_dir);
  if (progress)
    *progress << "trained " << method << " for " << cfg.iterations
              << " iterations; reached 0.8 at "
              << (out.iterations_to_target > cfg.iterations
                      ? "never"
                      : std::to_string(out.iterations_to_target))
              << "\n";
  return out;
}

}  // namespace nestseg
