#pragma once

#include <vector>

#include "px/common.hpp"

namespace px {

/// Calculus for one-dimensional heat-kernel chains: elements are finite sums
///   f(w) = sum_n c_n d^n/dw^n G_s(w),   G_s(w) = (4 pi s)^{-1/2} e^{-w^2/(4s)},
/// closed under convolution (widths add, derivative orders add) and under
/// pointwise products (re-expanded in the derivative basis of the combined
/// width). Used to collapse the spatial part of frozen counterterm graphs.
struct Gauss1 {
  double s = 0.0;               // width parameter
  std::vector<double> c;        // c[n] multiplies G^{(n)}_s

  static Gauss1 kernel(double s, int deriv_order = 0);

  Gauss1 convolve(const Gauss1& other) const;
  Gauss1 multiply(const Gauss1& other) const;
  Gauss1 derivative(int order = 1) const;

  double integral() const;      // int f dw  (= c[0]; derivatives integrate to 0)
  double value_at_zero() const; // f(0)
};

/// Coefficients of the polynomial P_n with d^n/dw^n G_s = P_n(w) G_s(w);
/// index = power of w.
std::vector<double> hermite_factor(int n, double s);

}  // namespace px
