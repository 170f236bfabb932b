#include "nestseg/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace nestseg {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_config(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()),
               " vs ", shape_str(b.shape()));
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_size(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, 0.0));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_size(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  check_config(shape_size(shape) == values.size(), "from_values: shape ",
               shape_str(shape), " wants ", shape_size(shape), " values, got ",
               values.size());
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  check_runtime(size() == 1, "item(): tensor has ", size(), " elements");
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto node = make_node(node_->shape, node_->values);
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  check_runtime(size() == 1, "backward(): root must be scalar, got shape ",
                shape_str(shape()));
  // Iterative post-order DFS for the topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_input < f.node->inputs.size()) {
      TensorNode* child = f.node->inputs[f.next_input++].get();
      if (visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding padding) {
  check_config(input.shape().size() == 4, "conv2d: input must be [B,Cin,H,W], got ",
               shape_str(input.shape()));
  check_config(kernel.shape().size() == 4,
               "conv2d: kernel must be [Cout,Cin,kh,kw], got ",
               shape_str(kernel.shape()));
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  check_config(kernel.dim(1) == Cin, "conv2d: kernel ", shape_str(kernel.shape()),
               " does not match input ", shape_str(input.shape()),
               " (channel count)");
  check_config(bias.shape() == Shape{Cout}, "conv2d: bias ", shape_str(bias.shape()),
               " does not match kernel ", shape_str(kernel.shape()));
  int py = 0, px = 0, Ho = 0, Wo = 0;
  if (padding == Padding::kSame) {
    check_config(kh % 2 == 1 && kw % 2 == 1,
                 "conv2d: same padding requires odd kernel dims, got ",
                 shape_str(kernel.shape()));
    py = (kh - 1) / 2;
    px = (kw - 1) / 2;
    Ho = H;
    Wo = W;
  } else {
    check_config(H >= kh && W >= kw, "conv2d: input ", shape_str(input.shape()),
                 " smaller than kernel ", shape_str(kernel.shape()));
    Ho = H - kh + 1;
    Wo = W - kw + 1;
  }

  Tensor out = Tensor::zeros({B, Cout, Ho, Wo});
  {
    const double* bs = bias.values().data();
    double* o = out.values().data();
    const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co) {
        double v = bs[co];
        double* dst = o + (static_cast<std::size_t>(b) * Cout + co) * plane;
        std::fill(dst, dst + plane, v);
      }
  }

  const double* in = input.values().data();
  const double* kv = kernel.values().data();
  double* ov = out.values().data();
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;

  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co) {
      double* out_img = ov + (static_cast<std::size_t>(b) * Cout + co) * out_plane;
      for (int ci = 0; ci < Cin; ++ci) {
        const double* in_img = in + (static_cast<std::size_t>(b) * Cin + ci) * in_plane;
        const double* kslice =
            kv + (static_cast<std::size_t>(co) * Cin + ci) * kh * kw;
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx) {
            const double w = kslice[dy * kw + dx];
            if (w == 0.0) continue;
            const int y_lo = std::max(0, py - dy);
            const int y_hi = std::min(Ho, H + py - dy);
            const int x_lo = std::max(0, px - dx);
            const int x_hi = std::min(Wo, W + px - dx);
            for (int y = y_lo; y < y_hi; ++y) {
              double* orow = out_img + static_cast<std::size_t>(y) * Wo;
              const double* irow =
                  in_img + static_cast<std::size_t>(y + dy - py) * W + (dx - px);
              for (int x = x_lo; x < x_hi; ++x) orow[x] += w * irow[x];
            }
          }
      }
    }

  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.node();
  out.node()->inputs = {in_node, k_node, b_node};
  out.node()->requires_grad = any_requires_grad({&input, &kernel, &bias});
  if (out.node()->requires_grad) {
    out.node()->backward_fn = [B, Cin, Cout, H, W, Ho, Wo, kh, kw, py, px, in_plane,
                               out_plane](TensorNode& self) {
      TensorNode& ni = *self.inputs[0];
      TensorNode& nk = *self.inputs[1];
      TensorNode& nb = *self.inputs[2];
      const double* g = self.grad.data();
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (int b = 0; b < B; ++b)
          for (int co = 0; co < Cout; ++co) {
            const double* gimg = g + (static_cast<std::size_t>(b) * Cout + co) * out_plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < out_plane; ++i) acc += gimg[i];
            nb.grad[co] += acc;
          }
      }
      if (nk.requires_grad) {
        nk.ensure_grad();
        const double* in = ni.values.data();
        for (int b = 0; b < B; ++b)
          for (int co = 0; co < Cout; ++co) {
            const double* gimg = g + (static_cast<std::size_t>(b) * Cout + co) * out_plane;
            for (int ci = 0; ci < Cin; ++ci) {
              const double* in_img = in + (static_cast<std::size_t>(b) * Cin + ci) * in_plane;
              double* kg = nk.grad.data() + (static_cast<std::size_t>(co) * Cin + ci) * kh * kw;
              for (int dy = 0; dy < kh; ++dy)
                for (int dx = 0; dx < kw; ++dx) {
                  const int y_lo = std::max(0, py - dy);
                  const int y_hi = std::min(Ho, H + py - dy);
                  const int x_lo = std::max(0, px - dx);
                  const int x_hi = std::min(Wo, W + px - dx);
                  double acc = 0.0;
                  for (int y = y_lo; y < y_hi; ++y) {
                    const double* grow = gimg + static_cast<std::size_t>(y) * Wo;
                    const double* irow =
                        in_img + static_cast<std::size_t>(y + dy - py) * W + (dx - px);
                    for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * irow[x];
                  }
                  kg[dy * kw + dx] += acc;
                }
            }
          }
      }
      if (ni.requires_grad) {
        ni.ensure_grad();
        const double* kv = nk.values.data();
        for (int b = 0; b < B; ++b)
          for (int co = 0; co < Cout; ++co) {
            const double* gimg = g + (static_cast<std::size_t>(b) * Cout + co) * out_plane;
            for (int ci = 0; ci < Cin; ++ci) {
              double* ig = ni.grad.data() + (static_cast<std::size_t>(b) * Cin + ci) * in_plane;
              const double* kslice = kv + (static_cast<std::size_t>(co) * Cin + ci) * kh * kw;
              for (int dy = 0; dy < kh; ++dy)
                for (int dx = 0; dx < kw; ++dx) {
                  const double w = kslice[dy * kw + dx];
                  if (w == 0.0) continue;
                  const int y_lo = std::max(0, py - dy);
                  const int y_hi = std::min(Ho, H + py - dy);
                  const int x_lo = std::max(0, px - dx);
                  const int x_hi = std::min(Wo, W + px - dx);
                  for (int y = y_lo; y < y_hi; ++y) {
                    const double* grow = gimg + static_cast<std::size_t>(y) * Wo;
                    double* irow =
                        ig + static_cast<std::size_t>(y + dy - py) * W + (dx - px);
                    for (int x = x_lo; x < x_hi; ++x) irow[x] += w * grow[x];
                  }
                }
            }
          }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling / resampling / concat

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [n](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      const double* xv = nx.values.data();
      const double* g = self.grad.data();
      double* xg = nx.grad.data();
      for (std::size_t i = 0; i < n; ++i)
        if (xv[i] > 0.0) xg[i] += g[i];
    };
  }
  return out;
}

Tensor max_pool2(const Tensor& x) {
  check_config(x.shape().size() == 4, "max_pool2: input must be [B,C,H,W], got ",
               shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_config(H % 2 == 0 && W % 2 == 0, "max_pool2: spatial dims must be even, got ",
               shape_str(x.shape()));
  const int Ho = H / 2, Wo = W / 2;
  Tensor out = Tensor::zeros({B, C, Ho, Wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* xv = x.values().data();
  double* ov = out.values().data();
  std::size_t oi = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* img = xv + static_cast<std::size_t>(bc) * H * W;
    for (int y = 0; y < Ho; ++y)
      for (int xo = 0; xo < Wo; ++xo, ++oi) {
        const std::size_t base = static_cast<std::size_t>(bc) * H * W +
                                 static_cast<std::size_t>(2 * y) * W + 2 * xo;
        const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        std::size_t best = cand[0];
        for (int j = 1; j < 4; ++j)
          if (xv[cand[j]] > xv[best]) best = cand[j];
        ov[oi] = xv[best];
        (*arg)[oi] = best;
        (void)img;
      }
  }
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [arg](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      const double* g = self.grad.data();
      double* xg = nx.grad.data();
      for (std::size_t i = 0; i < self.values.size(); ++i) xg[(*arg)[i]] += g[i];
    };
  }
  return out;
}

Tensor upsample2(const Tensor& x) {
  check_config(x.shape().size() == 4, "upsample2: input must be [B,C,H,W], got ",
               shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;
  Tensor out = Tensor::zeros({B, C, Ho, Wo});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = xv + static_cast<std::size_t>(bc) * H * W;
    double* dst = ov + static_cast<std::size_t>(bc) * Ho * Wo;
    for (int y = 0; y < Ho; ++y) {
      const double* srow = src + static_cast<std::size_t>(y / 2) * W;
      double* drow = dst + static_cast<std::size_t>(y) * Wo;
      for (int xo = 0; xo < Wo; ++xo) drow[xo] = srow[xo / 2];
    }
  }
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [B, C, H, W, Ho, Wo](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      const double* g = self.grad.data();
      double* xg = nx.grad.data();
      for (int bc = 0; bc < B * C; ++bc) {
        double* dst = xg + static_cast<std::size_t>(bc) * H * W;
        const double* src = g + static_cast<std::size_t>(bc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
          double* drow = dst + static_cast<std::size_t>(y / 2) * W;
          const double* srow = src + static_cast<std::size_t>(y) * Wo;
          for (int xo = 0; xo < Wo; ++xo) drow[xo / 2] += srow[xo];
        }
      }
    };
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_config(a.shape().size() == 4 && b.shape().size() == 4,
               "concat_channels: inputs must be [B,C,H,W], got ", shape_str(a.shape()),
               " and ", shape_str(b.shape()));
  check_config(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
               "concat_channels: shape mismatch ", shape_str(a.shape()), " vs ",
               shape_str(b.shape()));
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out = Tensor::zeros({B, Ca + Cb, H, W});
  double* ov = out.values().data();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int bb = 0; bb < B; ++bb) {
    double* dst = ov + static_cast<std::size_t>(bb) * (Ca + Cb) * plane;
    std::copy(av + static_cast<std::size_t>(bb) * Ca * plane,
              av + static_cast<std::size_t>(bb + 1) * Ca * plane, dst);
    std::copy(bv + static_cast<std::size_t>(bb) * Cb * plane,
              bv + static_cast<std::size_t>(bb + 1) * Cb * plane, dst + Ca * plane);
  }
  out.node()->inputs = {a.node(), b.node()};
  out.node()->requires_grad = any_requires_grad({&a, &b});
  if (out.node()->requires_grad) {
    out.node()->backward_fn = [B, Ca, Cb, plane](TensorNode& self) {
      TensorNode& na = *self.inputs[0];
      TensorNode& nb = *self.inputs[1];
      const double* g = self.grad.data();
      if (na.requires_grad) {
        na.ensure_grad();
        for (int bb = 0; bb < B; ++bb) {
          const double* src = g + static_cast<std::size_t>(bb) * (Ca + Cb) * plane;
          double* dst = na.grad.data() + static_cast<std::size_t>(bb) * Ca * plane;
          for (std::size_t i = 0; i < Ca * plane; ++i) dst[i] += src[i];
        }
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (int bb = 0; bb < B; ++bb) {
          const double* src = g + static_cast<std::size_t>(bb) * (Ca + Cb) * plane + Ca * plane;
          double* dst = nb.grad.data() + static_cast<std::size_t>(bb) * Cb * plane;
          for (std::size_t i = 0; i < Cb * plane; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise / reductions

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  out.node()->inputs = {a.node(), b.node()};
  out.node()->requires_grad = any_requires_grad({&a, &b});
  if (out.node()->requires_grad) {
    out.node()->backward_fn = [n](TensorNode& self) {
      for (int k = 0; k < 2; ++k) {
        TensorNode& t = *self.inputs[k];
        if (!t.requires_grad) continue;
        t.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) t.grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  out.node()->inputs = {a.node(), b.node()};
  out.node()->requires_grad = any_requires_grad({&a, &b});
  if (out.node()->requires_grad) {
    out.node()->backward_fn = [n](TensorNode& self) {
      TensorNode& na = *self.inputs[0];
      TensorNode& nb = *self.inputs[1];
      if (na.requires_grad) {
        na.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) na.grad[i] += self.grad[i];
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) nb.grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  out.node()->inputs = {a.node(), b.node()};
  out.node()->requires_grad = any_requires_grad({&a, &b});
  if (out.node()->requires_grad) {
    out.node()->backward_fn = [n](TensorNode& self) {
      TensorNode& na = *self.inputs[0];
      TensorNode& nb = *self.inputs[1];
      if (na.requires_grad) {
        na.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) na.grad[i] += self.grad[i] * nb.values[i];
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) nb.grad[i] += self.grad[i] * na.values[i];
      }
    };
  }
  return out;
}

Tensor scalar_mul(const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = s * x.values()[i];
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [n, s](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) nx.grad[i] += s * self.grad[i];
    };
  }
  return out;
}

Tensor sum(const Tensor& x) {
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x.values()[i];
  Tensor out = Tensor::from_values({1}, {acc});
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [n](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      const double g = self.grad[0];
      for (std::size_t i = 0; i < n; ++i) nx.grad[i] += g;
    };
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.size();
  check_config(n > 0, "mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x.values()[i];
  Tensor out = Tensor::from_values({1}, {acc / static_cast<double>(n)});
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    out.node()->backward_fn = [n](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      const double g = self.grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) nx.grad[i] += g;
    };
  }
  return out;
}

Tensor elementwise_unary(const Tensor& x, const std::function<double(double)>& f,
                         const std::function<double(double)>& dfdx) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = f(x.values()[i]);
  out.node()->inputs = {x.node()};
  out.node()->requires_grad = x.requires_grad();
  if (x.requires_grad()) {
    auto deriv = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) (*deriv)[i] = dfdx(x.values()[i]);
    out.node()->backward_fn = [n, deriv](TensorNode& self) {
      TensorNode& nx = *self.inputs[0];
      nx.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) nx.grad[i] += self.grad[i] * (*deriv)[i];
    };
  }
  return out;
}

}  // namespace nestseg
