#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nestseg/activation.hpp"
#include "nestseg/tensor.hpp"

namespace nestseg {

// Per-pixel integer class map, values in {0..m}. Class k+1 regions are nested
// inside class-k regions in ground truth.
struct LabelMap {
  int m = 2;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> values;  // row-major

  std::size_t size() const { return values.size(); }
  uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  uint8_t& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  void validate() const;
};

// Inverse-frequency class weights w[c] = N_tot / N_c over a training set.
struct ClassWeights {
  std::vector<double> weights;  // length m+1

  void validate() const;
  static ClassWeights uniform(int m) {
    return ClassWeights{std::vector<double>(static_cast<std::size_t>(m) + 1, 1.0)};
  }
};

ClassWeights class_weights(std::span<const LabelMap> targets);

// Pseudo-probabilities are clamped at this floor before the log; endpoint
// ramps never reach 0 for activations in (0, m), interior tents can.
inline constexpr double kLogClampEps = 1e-7;

// Mean squared error between the activation map and the integer target
// levels, (1/N) * sum_i (a_i - c_i)^2. Minimized at exact fit, always >= 0.
Tensor sse_loss(const Tensor& a, std::span<const LabelMap> targets);

// Weighted cross-entropy through the P mapping:
// -(1/N) * sum_i w[c_i] * log P^{c_i}(a_i). The P slopes favor interior
// classes, which the inverse-frequency weights compensate.
Tensor mce_loss(const Tensor& a, std::span<const LabelMap> targets,
                const ClassWeights& w);

// Cross-entropy through the Q mapping at softplus temperature t, unweighted:
// slopes around each class peak already match. Q^c can slightly exceed 1, so
// the value can be marginally negative near a perfect fit. Pass weights to
// get the (non-default) reweighted variant.
Tensor nce_loss(const Tensor& a, std::span<const LabelMap> targets, double t,
                const ClassWeights* w = nullptr);

// Standard per-pixel softmax cross-entropy over logits [C,H,W] or [B,C,H,W]
// with C = m+1, mean over pixels, stable via max subtraction.
Tensor softmax_ce_loss(const Tensor& logits, std::span<const LabelMap> targets);

// Convenience single-map overloads.
Tensor sse_loss(const Tensor& a, const LabelMap& target);
Tensor mce_loss(const Tensor& a, const LabelMap& target, const ClassWeights& w);
Tensor nce_loss(const Tensor& a, const LabelMap& target, double t,
                const ClassWeights* w = nullptr);
Tensor softmax_ce_loss(const Tensor& logits, const LabelMap& target);

enum class LossKind { kSse, kMce, kNce, kSoftmaxCe };

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);
bool loss_uses_multilevel_head(LossKind kind);

}  // namespace nestseg
