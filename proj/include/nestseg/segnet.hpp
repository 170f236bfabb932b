#pragma once

#include <cstdint>
#include <string>

#include "nestseg/param_store.hpp"
#include "nestseg/tensor.hpp"

namespace nestseg {

enum class HeadKind {
  kMultiLevel,  // one output channel, fed to the multi-level activation
  kSoftmax,     // m+1 output channels of logits
};

HeadKind parse_head_kind(const std::string& name);
std::string head_kind_name(HeadKind kind);

struct NetworkConfig {
  int input_channels = 1;
  int depth = 3;          // number of downsampling stages
  int base_channels = 16; // channels of the first encoder stage
  HeadKind head = HeadKind::kMultiLevel;
  int m = 2;              // class count is m+1; sets softmax head width

  void validate() const;
  int out_channels() const {
    return head == HeadKind::kMultiLevel ? 1 : m + 1;
  }
};

// U-shaped encoder/decoder with two 3x3 conv+ReLU layers per stage, 2x2 max
// pooling down, nearest-neighbor upsampling with skip concatenation up, and a
// linear 1x1 output conv. Input [B,Cin,H,W] with H and W divisible by
// 2^depth; output [B,out_channels,H,W].
class SegNet {
 public:
  SegNet(NetworkConfig cfg, uint64_t init_seed);

  const NetworkConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  Tensor forward(const Tensor& image) const;

  // Closed-form parameter count for a config; equals params().total_size().
  static std::size_t param_count(const NetworkConfig& cfg);

 private:
  NetworkConfig cfg_;
  ParamStore params_;
};

}  // namespace nestseg
