#pragma once

#include "nestseg/tensor.hpp"

namespace nestseg {

// Parameters of the multi-level activation: m nesting levels (m+1 classes),
// sigmoid spacing h and steepness kappa, and the softplus temperature t used
// by the Q pseudo-probability mapping.
struct ActivationConfig {
  int m = 2;
  double h = 1.0;
  double kappa = 10.0;
  double t = 10.0;

  void validate() const {
    check_config(m >= 1, "activation: m >= 1 required, got ", m);
    check_config(h > 0.0, "activation: h > 0 required, got ", h);
    check_config(kappa > 0.0, "activation: kappa > 0 required, got ", kappa);
    check_config(t > 0.0, "activation: t > 0 required, got ", t);
  }
};

// a(x) = sum_{n=1..m} sigmoid(kappa * (x + h*(n - (m+1)/2))).
// Strictly increasing, range (0, m), and a(x) + a(-x) = m. With one level it
// is the plain logistic sigmoid(kappa * x).
double multi_level_activation_value(double x, const ActivationConfig& cfg);
double multi_level_activation_deriv(double x, const ActivationConfig& cfg);
Tensor multi_level_activation(const Tensor& x, const ActivationConfig& cfg);

// Tempered softplus s(x) = log(1 + exp(t*x)) / t, evaluated without overflow;
// s'(x) = sigmoid(t*x) and s(x) - s(-x) = x.
double softplus_value(double x, double t);
Tensor softplus(const Tensor& x, double t);

// Pseudo-probability of class c as a function of the activation value a.
// Endpoints are linear ramps 1 - a/m and a/m; interior classes are tents
// max(1 - |c - a|, 0), with subgradient 0 at the apex. For two levels this is
// exactly P^0 = 1 - a/2, P^1 = 1 - |1 - a|, P^2 = a/2. The extension to more
// levels keeps the peak-at-target and slope structure; the two-level case is
// the reference.
double pseudo_prob_P_value(double a, int c, int m);
double pseudo_prob_P_deriv(double a, int c, int m);
Tensor pseudo_prob_P(const Tensor& a, int c, int m);

// Q replaces the endpoint ramps by softplus ramps s(1 - a) and s(a - (m-1))
// so all classes share the same slope magnitude around their peak; interior
// classes keep the tent. Sum over classes approaches 1 as t grows.
double pseudo_prob_Q_value(double a, int c, int m, double t);
double pseudo_prob_Q_deriv(double a, int c, int m, double t);
Tensor pseudo_prob_Q(const Tensor& a, int c, int m, double t);

}  // namespace nestseg
