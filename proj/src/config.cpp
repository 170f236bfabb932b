#include "nestseg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nestseg/common.hpp"

namespace nestseg {

ExperimentConfig::ExperimentConfig() {
  // Desk-scale overrides of the type-level defaults; chosen from measured
  // step times so the full benchmark fits a single-core time budget.
  scene.height = 40;
  scene.width = 40;
  scene.radius_frac = {{0.17, 0.27}, {0.30, 0.45}};
  scene.aspect_max = 1.2;
  scene.jitter_px = 1.0;
  scene.noise_sigma = 0.06;
  network.depth = 2;
  network.base_channels = 4;
  methods = {"softmax-ce", "sse", "mce", "nce", "mce-flat"};
}

LossKind method_loss(const std::string& method) {
  if (method == "mce-flat") return LossKind::kMce;
  return parse_loss_kind(method);
}

bool method_uses_uniform_weights(const std::string& method) {
  return method == "mce-flat";
}

void ExperimentConfig::finalize_and_validate() {
  network.m = scene.m;
  activation.m = scene.m;
  scene.validate();
  network.validate();
  activation.validate();
  augment.validate();
  check_config(loss != LossKind::kSoftmaxCe ||
                   network.head == HeadKind::kSoftmax,
               "loss 'softmax-ce' requires head 'softmax' (the pairing "
               "invariant: softmax-ce <-> softmax, multi-level losses <-> "
               "multi-level head)");
  check_config(loss == LossKind::kSoftmaxCe ||
                   network.head == HeadKind::kMultiLevel,
               "loss '", loss_kind_name(loss),
               "' requires head 'multi-level' (the pairing invariant: "
               "softmax-ce <-> softmax, multi-level losses <-> multi-level "
               "head)");
  check_config(iterations >= 0, "iterations >= 0 required, got ", iterations);
  check_config(eval_every > 0, "eval-every > 0 required, got ", eval_every);
  check_config(iterations % eval_every == 0, "eval-every ", eval_every,
               " must divide iterations ", iterations);
  check_config(batch_size >= 1, "batch-size >= 1 required, got ", batch_size);
  check_config(learning_rate > 0.0, "learning-rate > 0 required, got ",
               learning_rate);
  check_config(n_images >= 1, "n-images >= 1 required, got ", n_images);
  check_config(k_folds >= 1, "k-folds >= 1 required, got ", k_folds);
  check_config(n_images % k_folds == 0, "k-folds ", k_folds,
               " must divide n-images ", n_images);
  check_config(theta_grid_points >= 1, "theta-grid-points >= 1 required, got ",
               theta_grid_points);
  check_config(!output_dir.empty(), "output-dir must not be empty");
  check_config(!methods.empty(), "methods list must not be empty");
  for (const std::string& method : methods) {
    method_loss(method);  // throws on unknown names
    check_config(std::count(methods.begin(), methods.end(), method) == 1,
                 "method '", method, "' listed twice");
  }
  const int div = 1 << network.depth;
  check_config(scene.height % div == 0 && scene.width % div == 0,
               "scene ", scene.height, "x", scene.width,
               " must be divisible by 2^depth = ", div);
}

namespace {

struct ParseCursor {
  const std::string& origin;
  int line;
};

[[noreturn]] void fail_at(const ParseCursor& at, const std::string& msg) {
  throw ConfigError(at.origin + ":" + std::to_string(at.line) + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& v, const ParseCursor& at) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d))
      fail_at(at, "bad number '" + v + "'");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail_at(at, "bad number '" + v + "'");
  }
}

long long parse_int(const std::string& v, const ParseCursor& at) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) fail_at(at, "bad integer '" + v + "'");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail_at(at, "bad integer '" + v + "'");
  }
}

uint64_t parse_seed(const std::string& v, const ParseCursor& at) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size() || v.find('-') != std::string::npos)
      fail_at(at, "bad unsigned integer '" + v + "'");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail_at(at, "bad unsigned integer '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const ParseCursor& at) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  fail_at(at, "bad boolean '" + v + "' (want true/false/on/off/1/0)");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& v, const ParseCursor& at) {
  std::vector<double> out;
  for (const std::string& item : split_list(v)) out.push_back(parse_real(item, at));
  if (out.empty()) fail_at(at, "empty list");
  return out;
}

void apply_key(ExperimentConfig& cfg, const std::string& section,
               const std::string& key, const std::string& value,
               const ParseCursor& at) {
  auto as_int = [&] { return static_cast<int>(parse_int(value, at)); };
  auto as_real = [&] { return parse_real(value, at); };

  if (section == "scene") {
    SceneSpec& s = cfg.scene;
    if (key == "height") s.height = as_int();
    else if (key == "width") s.width = as_int();
    else if (key == "m") s.m = as_int();
    else if (key == "blobs-min") s.blobs_min = as_int();
    else if (key == "blobs-max") s.blobs_max = as_int();
    else if (key == "children-min") s.children_min = as_int();
    else if (key == "children-max") s.children_max = as_int();
    else if (key == "radius-frac-min" || key == "radius-frac-max") {
      const std::vector<double> vals = parse_real_list(value, at);
      if (s.radius_frac.size() < vals.size()) s.radius_frac.resize(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) {
        if (key == "radius-frac-min") s.radius_frac[i].first = vals[i];
        else s.radius_frac[i].second = vals[i];
      }
      if (s.radius_frac.size() > vals.size()) s.radius_frac.resize(vals.size());
    } else if (key == "aspect-max") s.aspect_max = as_real();
    else if (key == "jitter") s.jitter_px = as_real();
    else if (key == "intensity-means") s.intensity_means = parse_real_list(value, at);
    else if (key == "noise-sigma") s.noise_sigma = as_real();
    else fail_at(at, "unknown key '" + key + "' in [scene]");
  } else if (section == "network") {
    NetworkConfig& n = cfg.network;
    if (key == "input-channels") n.input_channels = as_int();
    else if (key == "depth") n.depth = as_int();
    else if (key == "base-channels") n.base_channels = as_int();
    else if (key == "head") n.head = parse_head_kind(value);
    else fail_at(at, "unknown key '" + key + "' in [network]");
  } else if (section == "activation") {
    ActivationConfig& a = cfg.activation;
    if (key == "h") a.h = as_real();
    else if (key == "kappa") a.kappa = as_real();
    else if (key == "t") a.t = as_real();
    else fail_at(at, "unknown key '" + key + "' in [activation]");
  } else if (section == "train") {
    if (key == "loss") cfg.loss = parse_loss_kind(value);
    else if (key == "methods") cfg.methods = split_list(value);
    else if (key == "iterations") cfg.iterations = as_int();
    else if (key == "batch-size") cfg.batch_size = as_int();
    else if (key == "eval-every") cfg.eval_every = as_int();
    else if (key == "learning-rate") cfg.learning_rate = as_real();
    else if (key == "k-folds") cfg.k_folds = as_int();
    else if (key == "n-images") cfg.n_images = as_int();
    else if (key == "theta-grid-points") cfg.theta_grid_points = as_int();
    else if (key == "output-dir") cfg.output_dir = value;
    else if (key == "master-seed") cfg.master_seed = parse_seed(value, at);
    else if (key == "augment") cfg.augment.enabled = parse_bool(value, at);
    else if (key == "aug-translate-frac") cfg.augment.translate_frac = as_real();
    else if (key == "aug-scale-min") cfg.augment.scale_min = as_real();
    else if (key == "aug-scale-max") cfg.augment.scale_max = as_real();
    else fail_at(at, "unknown key '" + key + "' in [train]");
  } else {
    fail_at(at, "unknown section [" + section + "]");
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    ParseCursor at{origin, lineno};
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        fail_at(at, "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail_at(at, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_at(at, "empty key");
    if (section.empty())
      fail_at(at, "key '" + key + "' before any [section] header");
    apply_key(cfg, section, key, value, at);
  }
  cfg.finalize_and_validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  check_config(in.good(), "cannot open config file ", path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

namespace {

std::string real_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += real_str(v[i]);
  }
  return out;
}

}  // namespace

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::vector<double> fmin, fmax;
  for (const auto& [lo, hi] : cfg.scene.radius_frac) {
    fmin.push_back(lo);
    fmax.push_back(hi);
  }
  std::string methods;
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    if (i) methods += ",";
    methods += cfg.methods[i];
  }
  os << "# nesting depth m is set once here and shared by the network head\n"
     << "# and the activation layer\n"
     << "[scene]\n"
     << "height = " << cfg.scene.height << "\n"
     << "width = " << cfg.scene.width << "\n"
     << "m = " << cfg.scene.m << "\n"
     << "blobs-min = " << cfg.scene.blobs_min << "\n"
     << "blobs-max = " << cfg.scene.blobs_max << "\n"
     << "children-min = " << cfg.scene.children_min << "\n"
     << "children-max = " << cfg.scene.children_max << "\n"
     << "radius-frac-min = " << join_reals(fmin) << "\n"
     << "radius-frac-max = " << join_reals(fmax) << "\n"
     << "aspect-max = " << real_str(cfg.scene.aspect_max) << "\n"
     << "jitter = " << real_str(cfg.scene.jitter_px) << "\n"
     << "intensity-means = " << join_reals(cfg.scene.intensity_means) << "\n"
     << "noise-sigma = " << real_str(cfg.scene.noise_sigma) << "\n"
     << "\n[network]\n"
     << "input-channels = " << cfg.network.input_channels << "\n"
     << "depth = " << cfg.network.depth << "\n"
     << "base-channels = " << cfg.network.base_channels << "\n"
     << "head = " << head_kind_name(cfg.network.head) << "\n"
     << "\n[activation]\n"
     << "h = " << real_str(cfg.activation.h) << "\n"
     << "kappa = " << real_str(cfg.activation.kappa) << "\n"
     << "t = " << real_str(cfg.activation.t) << "\n"
     << "\n[train]\n"
     << "loss = " << loss_kind_name(cfg.loss) << "\n"
     << "methods = " << methods << "\n"
     << "iterations = " << cfg.iterations << "\n"
     << "batch-size = " << cfg.batch_size << "\n"
     << "eval-every = " << cfg.eval_every << "\n"
     << "learning-rate = " << real_str(cfg.learning_rate) << "\n"
     << "k-folds = " << cfg.k_folds << "\n"
     << "n-images = " << cfg.n_images << "\n"
     << "theta-grid-points = " << cfg.theta_grid_points << "\n"
     << "output-dir = " << cfg.output_dir << "\n"
     << "master-seed = " << cfg.master_seed << "\n"
     << "augment = " << (cfg.augment.enabled ? "true" : "false") << "\n"
     << "aug-translate-frac = " << real_str(cfg.augment.translate_frac) << "\n"
     << "aug-scale-min = " << real_str(cfg.augment.scale_min) << "\n"
     << "aug-scale-max = " << real_str(cfg.augment.scale_max) << "\n";
  return os.str();
}

}  // namespace nestseg
