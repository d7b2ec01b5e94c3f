#pragma once

namespace ppolab {

/// log Gamma(x) for x > 0 (Lanczos, g = 7, nine coefficients).
double log_gamma(double x);

/// psi(x) = d/dx log Gamma(x) for x > 0.
double digamma(double x);

/// psi'(x), the derivative of digamma, for x > 0.
double trigamma(double x);

/// log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b).
double log_beta_function(double a, double b);

/// Numerically stable log(1 + exp(x)).
double softplus(double x);

/// 1 / (1 + exp(-x)), the derivative of softplus.
double sigmoid(double x);

}  // namespace ppolab
