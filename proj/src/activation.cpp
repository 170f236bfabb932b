#include "nestseg/activation.hpp"

#include <cmath>

namespace nestseg {

namespace {

// Sigmoid center offsets h*(n - (m+1)/2), n = 1..m, symmetric about 0.
std::vector<double> center_offsets(const ActivationConfig& cfg) {
  std::vector<double> off(static_cast<std::size_t>(cfg.m));
  for (int n = 1; n <= cfg.m; ++n)
    off[static_cast<std::size_t>(n - 1)] =
        cfg.h * (static_cast<double>(n) - 0.5 * (cfg.m + 1));
  return off;
}

void check_class_index(int c, int m, const char* who) {
  check_config(c >= 0 && c <= m, who, ": class index ", c, " out of range [0, ", m, "]");
}

}  // namespace

double multi_level_activation_value(double x, const ActivationConfig& cfg) {
  double a = 0.0;
  for (int n = 1; n <= cfg.m; ++n)
    a += sigmoid(cfg.kappa * (x + cfg.h * (static_cast<double>(n) - 0.5 * (cfg.m + 1))));
  return a;
}

double multi_level_activation_deriv(double x, const ActivationConfig& cfg) {
  double d = 0.0;
  for (int n = 1; n <= cfg.m; ++n)
    d += cfg.kappa *
         sigmoid_deriv(cfg.kappa * (x + cfg.h * (static_cast<double>(n) - 0.5 * (cfg.m + 1))));
  return d;
}

Tensor multi_level_activation(const Tensor& x, const ActivationConfig& cfg) {
  cfg.validate();
  const auto off = center_offsets(cfg);
  const double kappa = cfg.kappa;
  return elementwise_unary(
      x,
      [&off, kappa](double v) {
        double a = 0.0;
        for (double o : off) a += sigmoid(kappa * (v + o));
        return a;
      },
      [&off, kappa](double v) {
        double d = 0.0;
        for (double o : off) d += kappa * sigmoid_deriv(kappa * (v + o));
        return d;
      });
}

double softplus_value(double x, double t) {
  const double z = t * x;
  if (z > 30.0) return x + std::log1p(std::exp(-z)) / t;
  return std::log1p(std::exp(z)) / t;
}

Tensor softplus(const Tensor& x, double t) {
  check_config(t > 0.0, "softplus: t > 0 required, got ", t);
  return elementwise_unary(
      x, [t](double v) { return softplus_value(v, t); },
      [t](double v) { return sigmoid(t * v); });
}

double pseudo_prob_P_value(double a, int c, int m) {
  check_class_index(c, m, "pseudo_prob_P");
  if (c == 0) return 1.0 - a / m;
  if (c == m) return a / m;
  const double tent = 1.0 - std::fabs(static_cast<double>(c) - a);
  return tent > 0.0 ? tent : 0.0;
}

double pseudo_prob_P_deriv(double a, int c, int m) {
  check_class_index(c, m, "pseudo_prob_P");
  if (c == 0) return -1.0 / m;
  if (c == m) return 1.0 / m;
  const double d = a - static_cast<double>(c);
  if (d == 0.0 || std::fabs(d) >= 1.0) return 0.0;
  return d < 0.0 ? 1.0 : -1.0;
}

Tensor pseudo_prob_P(const Tensor& a, int c, int m) {
  check_class_index(c, m, "pseudo_prob_P");
  return elementwise_unary(
      a, [c, m](double v) { return pseudo_prob_P_value(v, c, m); },
      [c, m](double v) { return pseudo_prob_P_deriv(v, c, m); });
}

double pseudo_prob_Q_value(double a, int c, int m, double t) {
  check_class_index(c, m, "pseudo_prob_Q");
  if (c == 0) return softplus_value(1.0 - a, t);
  if (c == m) return softplus_value(a - (m - 1), t);
  const double tent = 1.0 - std::fabs(static_cast<double>(c) - a);
  return tent > 0.0 ? tent : 0.0;
}

double pseudo_prob_Q_deriv(double a, int c, int m, double t) {
  check_class_index(c, m, "pseudo_prob_Q");
  if (c == 0) return -sigmoid(t * (1.0 - a));
  if (c == m) return sigmoid(t * (a - (m - 1)));
  const double d = a - static_cast<double>(c);
  if (d == 0.0 || std::fabs(d) >= 1.0) return 0.0;
  return d < 0.0 ? 1.0 : -1.0;
}

Tensor pseudo_prob_Q(const Tensor& a, int c, int m, double t) {
  check_class_index(c, m, "pseudo_prob_Q");
  check_config(t > 0.0, "pseudo_prob_Q: t > 0 required, got ", t);
  return elementwise_unary(
      a, [c, m, t](double v) { return pseudo_prob_Q_value(v, c, m, t); },
      [c, m, t](double v) { return pseudo_prob_Q_deriv(v, c, m, t); });
}

}  // namespace nestseg
