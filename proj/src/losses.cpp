#include "nestseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>

#include "nestseg/common.hpp"

namespace nestseg {

void LabelMap::validate() const {
  check_config(m >= 1, "LabelMap: m >= 1 required, got ", m);
  check_config(height > 0 && width > 0, "LabelMap: positive extent required, got ",
               height, "x", width);
  check_config(values.size() == static_cast<std::size_t>(height) * width,
               "LabelMap: ", height, "x", width, " wants ",
               static_cast<std::size_t>(height) * width, " values, got ",
               values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    check_config(values[i] <= m, "LabelMap: value ", int(values[i]), " at index ",
                 i, " exceeds class count m=", m);
}

void ClassWeights::validate() const {
  check_config(!weights.empty(), "ClassWeights: empty");
  for (std::size_t c = 0; c < weights.size(); ++c)
    check_config(weights[c] > 0.0, "ClassWeights: weight for class ", c,
                 " must be positive, got ", weights[c]);
}

ClassWeights class_weights(std::span<const LabelMap> targets) {
  check_config(!targets.empty(), "class_weights: no label maps given");
  const int m = targets[0].m;
  std::vector<std::size_t> counts(static_cast<std::size_t>(m) + 1, 0);
  std::size_t total = 0;
  for (const LabelMap& t : targets) {
    t.validate();
    check_config(t.m == m, "class_weights: mixed class counts m=", m, " and m=",
                 t.m);
    for (uint8_t v : t.values) ++counts[v];
    total += t.size();
  }
  ClassWeights w;
  w.weights.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    check_config(counts[c] > 0, "class_weights: class ", c,
                 " absent from the given label maps; weights would be undefined");
    w.weights[c] = static_cast<double>(total) / static_cast<double>(counts[c]);
  }
  return w;
}

namespace {

// Accepts activation maps shaped [H,W] or [B,1,H,W] (one channel) and checks
// each label map against them. Returns the concatenated target classes in the
// same flattened order as the tensor values.
std::vector<uint8_t> aligned_targets(const Tensor& a,
                                     std::span<const LabelMap> targets,
                                     const char* op) {
  check_config(a.defined(), op, ": undefined activation tensor");
  check_config(!targets.empty(), op, ": no label maps given");
  const Shape& s = a.shape();
  int batch = 0, h = 0, wdt = 0;
  if (s.size() == 2) {
    batch = 1;
    h = s[0];
    wdt = s[1];
  } else if (s.size() == 4) {
    check_config(s[1] == 1, op, ": expected a single activation channel, got shape ",
                 shape_str(s));
    batch = s[0];
    h = s[2];
    wdt = s[3];
  } else {
    check_config(false, op, ": activation must be [H,W] or [B,1,H,W], got ",
                 shape_str(s));
  }
  check_config(static_cast<std::size_t>(batch) == targets.size(), op,
               ": batch of ", batch, " activation maps vs ", targets.size(),
               " label maps");
  std::vector<uint8_t> out;
  out.reserve(a.size());
  const int m = targets[0].m;
  for (const LabelMap& t : targets) {
    t.validate();
    check_config(t.m == m, op, ": mixed class counts m=", m, " and m=", t.m);
    check_config(t.height == h && t.width == wdt, op, ": activation is ", h, "x",
                 wdt, " but label map is ", t.height, "x", t.width);
    out.insert(out.end(), t.values.begin(), t.values.end());
  }
  return out;
}

Tensor log_clamped(const Tensor& x) {
  return elementwise_unary(
      x, [](double v) { return std::log(std::max(v, kLogClampEps)); },
      [](double v) { return v > kLogClampEps ? 1.0 / v : 0.0; });
}

// Shared core of the two pseudo-probability cross-entropies: the per-class
// mapping differs, the masked weighted log-sum structure is identical.
Tensor masked_ce(const Tensor& a, std::span<const LabelMap> targets,
                 const ClassWeights& w, const char* op,
                 const std::function<Tensor(const Tensor&, int)>& prob_for_class) {
  const std::vector<uint8_t> gt = aligned_targets(a, targets, op);
  const int m = targets[0].m;
  w.validate();
  check_config(w.weights.size() == static_cast<std::size_t>(m) + 1, op,
               ": weights cover ", w.weights.size(), " classes, label maps have ",
               m + 1);
  const std::size_t n = gt.size();
  Tensor acc;
  for (int c = 0; c <= m; ++c) {
    std::vector<double> mask(n, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (gt[i] == c) {
        mask[i] = w.weights[static_cast<std::size_t>(c)];
        any = true;
      }
    }
    if (!any) continue;  // class absent from this batch contributes nothing
    Tensor term =
        sum(mul(Tensor::from_values(a.shape(), std::move(mask)),
                log_clamped(prob_for_class(a, c))));
    acc = acc.defined() ? add(acc, term) : term;
  }
  check_runtime(acc.defined(), op, ": empty batch");
  return scalar_mul(acc, -1.0 / static_cast<double>(n));
}

}  // namespace

Tensor sse_loss(const Tensor& a, std::span<const LabelMap> targets) {
  std::vector<uint8_t> gt = aligned_targets(a, targets, "sse_loss");
  std::vector<double> target_vals(gt.begin(), gt.end());
  Tensor t = Tensor::from_values(a.shape(), std::move(target_vals));
  Tensor d = sub(a, t);
  return mean(mul(d, d));
}

Tensor mce_loss(const Tensor& a, std::span<const LabelMap> targets,
                const ClassWeights& w) {
  const int m = targets.empty() ? 0 : targets[0].m;
  return masked_ce(a, targets, w, "mce_loss", [m](const Tensor& act, int c) {
    return pseudo_prob_P(act, c, m);
  });
}

Tensor nce_loss(const Tensor& a, std::span<const LabelMap> targets, double t,
                const ClassWeights* w) {
  check_config(t > 0.0, "nce_loss: softplus temperature must be positive, got ",
               t);
  const int m = targets.empty() ? 0 : targets[0].m;
  const ClassWeights weights = w ? *w : ClassWeights::uniform(m);
  return masked_ce(a, targets, weights, "nce_loss",
                   [m, t](const Tensor& act, int c) {
                     return pseudo_prob_Q(act, c, m, t);
                   });
}

Tensor softmax_ce_loss(const Tensor& logits, std::span<const LabelMap> targets) {
  check_config(logits.defined(), "softmax_ce_loss: undefined logits tensor");
  check_config(!targets.empty(), "softmax_ce_loss: no label maps given");
  const Shape& s = logits.shape();
  int batch = 0, chans = 0, h = 0, wdt = 0;
  if (s.size() == 3) {
    batch = 1;
    chans = s[0];
    h = s[1];
    wdt = s[2];
  } else if (s.size() == 4) {
    batch = s[0];
    chans = s[1];
    h = s[2];
    wdt = s[3];
  } else {
    check_config(false, "softmax_ce_loss: logits must be [C,H,W] or [B,C,H,W], got ",
                 shape_str(s));
  }
  const int m = targets[0].m;
  check_config(chans == m + 1, "softmax_ce_loss: ", chans,
               " logit channels vs m+1=", m + 1, " classes");
  check_config(static_cast<std::size_t>(batch) == targets.size(),
               "softmax_ce_loss: batch of ", batch, " logit maps vs ",
               targets.size(), " label maps");
  for (const LabelMap& t : targets) {
    t.validate();
    check_config(t.m == m, "softmax_ce_loss: mixed class counts m=", m,
                 " and m=", t.m);
    check_config(t.height == h && t.width == wdt, "softmax_ce_loss: logits are ",
                 h, "x", wdt, " but label map is ", t.height, "x", t.width);
  }

  const std::size_t plane = static_cast<std::size_t>(h) * wdt;
  const std::size_t npix = static_cast<std::size_t>(batch) * plane;
  auto probs = std::make_shared<std::vector<double>>(logits.size());
  auto gt = std::make_shared<std::vector<uint8_t>>();
  gt->reserve(npix);
  for (const LabelMap& t : targets)
    gt->insert(gt->end(), t.values.begin(), t.values.end());

  const std::vector<double>& z = logits.values();
  double total = 0.0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(batch); ++b) {
    const std::size_t base = b * chans * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double zmax = z[base + p];
      for (int c = 1; c < chans; ++c)
        zmax = std::max(zmax, z[base + c * plane + p]);
      double denom = 0.0;
      for (int c = 0; c < chans; ++c)
        denom += std::exp(z[base + c * plane + p] - zmax);
      const double log_denom = std::log(denom);
      for (int c = 0; c < chans; ++c)
        (*probs)[base + c * plane + p] =
            std::exp(z[base + c * plane + p] - zmax) / denom;
      const int cls = (*gt)[b * plane + p];
      total += log_denom + zmax - z[base + cls * plane + p];
    }
  }

  Tensor out = Tensor::from_values({1}, {total / static_cast<double>(npix)});
  out.node()->inputs = {logits.node()};
  out.node()->requires_grad = logits.requires_grad();
  if (logits.requires_grad()) {
    const int ch = chans;
    out.node()->backward_fn = [probs, gt, ch, plane, npix](TensorNode& self) {
      TensorNode& nl = *self.inputs[0];
      nl.ensure_grad();
      const double g = self.grad[0] / static_cast<double>(npix);
      const std::size_t nb = npix / plane;
      for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t base = b * ch * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const int cls = (*gt)[b * plane + p];
          for (int c = 0; c < ch; ++c) {
            const std::size_t idx = base + c * plane + p;
            nl.grad[idx] += g * ((*probs)[idx] - (c == cls ? 1.0 : 0.0));
          }
        }
      }
    };
  }
  return out;
}

Tensor sse_loss(const Tensor& a, const LabelMap& target) {
  return sse_loss(a, std::span<const LabelMap>(&target, 1));
}
Tensor mce_loss(const Tensor& a, const LabelMap& target, const ClassWeights& w) {
  return mce_loss(a, std::span<const LabelMap>(&target, 1), w);
}
Tensor nce_loss(const Tensor& a, const LabelMap& target, double t,
                const ClassWeights* w) {
  return nce_loss(a, std::span<const LabelMap>(&target, 1), t, w);
}
Tensor softmax_ce_loss(const Tensor& logits, const LabelMap& target) {
  return softmax_ce_loss(logits, std::span<const LabelMap>(&target, 1));
}

LossKind parse_loss_kind(const std::string& name) {
  static const std::map<std::string, LossKind> kNames = {
      {"sse", LossKind::kSse},
      {"mce", LossKind::kMce},
      {"nce", LossKind::kNce},
      {"softmax-ce", LossKind::kSoftmaxCe},
  };
  auto it = kNames.find(name);
  check_config(it != kNames.end(), "unknown loss '", name,
               "' (expected sse, mce, nce, or softmax-ce)");
  return it->second;
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kSse: return "sse";
    case LossKind::kMce: return "mce";
    case LossKind::kNce: return "nce";
    case LossKind::kSoftmaxCe: return "softmax-ce";
  }
  return "?";
}

bool loss_uses_multilevel_head(LossKind kind) {
  return kind != LossKind::kSoftmaxCe;
}

}  // namespace nestseg
