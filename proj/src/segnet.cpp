#include "nestseg/segnet.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "nestseg/common.hpp"

namespace nestseg {

HeadKind parse_head_kind(const std::string& name) {
  if (name == "multi-level") return HeadKind::kMultiLevel;
  if (name == "softmax") return HeadKind::kSoftmax;
  check_config(false, "unknown head '", name,
               "' (expected multi-level or softmax)");
  return HeadKind::kMultiLevel;
}

std::string head_kind_name(HeadKind kind) {
  return kind == HeadKind::kMultiLevel ? "multi-level" : "softmax";
}

void NetworkConfig::validate() const {
  check_config(input_channels >= 1, "NetworkConfig: input_channels >= 1 required, got ",
               input_channels);
  check_config(depth >= 1, "NetworkConfig: depth >= 1 required, got ", depth);
  check_config(depth <= 8, "NetworkConfig: depth <= 8 required, got ", depth);
  check_config(base_channels >= 1, "NetworkConfig: base_channels >= 1 required, got ",
               base_channels);
  check_config(m >= 1, "NetworkConfig: m >= 1 required, got ", m);
}

namespace {

// Stage layout. Encoder stage d maps in_ch(d) -> base*2^d; the bottleneck
// maps base*2^(depth-1) -> base*2^depth; decoder stage d receives the
// upsampled deeper features (base*2^(d+1)) concatenated with the stage-d skip
// (base*2^d) and maps back to base*2^d.
int stage_channels(const NetworkConfig& cfg, int d) {
  return cfg.base_channels << d;
}

struct ConvSpec {
  std::string name;
  int in_ch;
  int out_ch;
  int ksize;
  double gain;  // scale on the He stddev; the output conv starts near zero
};

// Parameter creation order (and naming) is fixed so that a given seed always
// produces the same weights.
std::vector<ConvSpec> conv_specs(const NetworkConfig& cfg) {
  std::vector<ConvSpec> specs;
  for (int d = 0; d < cfg.depth; ++d) {
    const int in0 = d == 0 ? cfg.input_channels : stage_channels(cfg, d - 1);
    const int out = stage_channels(cfg, d);
    specs.push_back({"enc" + std::to_string(d) + ".conv1", in0, out, 3, 1.0});
    specs.push_back({"enc" + std::to_string(d) + ".conv2", out, out, 3, 1.0});
  }
  {
    const int in0 = stage_channels(cfg, cfg.depth - 1);
    const int out = stage_channels(cfg, cfg.depth);
    specs.push_back({"bottleneck.conv1", in0, out, 3, 1.0});
    specs.push_back({"bottleneck.conv2", out, out, 3, 1.0});
  }
  for (int d = cfg.depth - 1; d >= 0; --d) {
    const int skip = stage_channels(cfg, d);
    const int in0 = stage_channels(cfg, d + 1) + skip;
    specs.push_back({"dec" + std::to_string(d) + ".conv1", in0, skip, 3, 1.0});
    specs.push_back({"dec" + std::to_string(d) + ".conv2", skip, skip, 3, 1.0});
  }
  specs.push_back({"out", stage_channels(cfg, 0), cfg.out_channels(), 1, 0.01});
  return specs;
}

}  // namespace

SegNet::SegNet(NetworkConfig cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  params_.rng_seed = init_seed;
  Rng rng(derive_seed(init_seed, 0x1217));
  for (const ConvSpec& spec : conv_specs(cfg_)) {
    const int fan_in = spec.in_ch * spec.ksize * spec.ksize;
    const double stddev = spec.gain * std::sqrt(2.0 / fan_in);
    Shape kshape = {spec.out_ch, spec.in_ch, spec.ksize, spec.ksize};
    Tensor w = Tensor::zeros(kshape);
    for (double& v : w.values()) v = rng.normal(0.0, stddev);
    params_.add(spec.name + ".w", w);
    params_.add(spec.name + ".b", Tensor::zeros({spec.out_ch}));
  }
}

Tensor SegNet::forward(const Tensor& image) const {
  check_config(image.defined(), "SegNet::forward: undefined input");
  check_config(image.shape().size() == 4,
               "SegNet::forward: input must be [B,C,H,W], got ",
               shape_str(image.shape()));
  check_config(image.dim(1) == cfg_.input_channels, "SegNet::forward: input has ",
               image.dim(1), " channels, network expects ", cfg_.input_channels);
  const int h = image.dim(2), w = image.dim(3);
  const int div = 1 << cfg_.depth;
  check_config(h % div == 0 && w % div == 0, "SegNet::forward: input ", h, "x", w,
               " must be divisible by 2^depth = ", div);

  auto p = [&](const std::string& name) -> const Tensor& {
    auto it = params_.params.find(name);
    check_runtime(it != params_.params.end(),
                  "SegNet::forward: missing parameter '", name, "'");
    return it->second;
  };
  auto conv_block = [&](Tensor x, const std::string& stage) {
    x = relu(conv2d(x, p(stage + ".conv1.w"), p(stage + ".conv1.b"), Padding::kSame));
    x = relu(conv2d(x, p(stage + ".conv2.w"), p(stage + ".conv2.b"), Padding::kSame));
    return x;
  };

  Tensor x = image;
  std::vector<Tensor> skips;
  skips.reserve(static_cast<std::size_t>(cfg_.depth));
  for (int d = 0; d < cfg_.depth; ++d) {
    x = conv_block(x, "enc" + std::to_string(d));
    skips.push_back(x);
    x = max_pool2(x);
  }
  x = conv_block(x, "bottleneck");
  for (int d = cfg_.depth - 1; d >= 0; --d) {
    x = concat_channels(upsample2(x), skips[static_cast<std::size_t>(d)]);
    x = conv_block(x, "dec" + std::to_string(d));
  }
  return conv2d(x, p("out.w"), p("out.b"), Padding::kSame);
}

std::size_t SegNet::param_count(const NetworkConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  for (const ConvSpec& spec : conv_specs(cfg)) {
    total += static_cast<std::size_t>(spec.out_ch) * spec.in_ch * spec.ksize *
                 spec.ksize +
             static_cast<std::size_t>(spec.out_ch);
  }
  return total;
}

}  // namespace nestseg
