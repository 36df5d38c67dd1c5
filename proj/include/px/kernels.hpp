#pragma once

#include "px/coefficients.hpp"
#include "px/common.hpp"

namespace px {

/// How spatial displacements are interpreted when evaluating the frozen
/// Gaussian on the torus.
///   none    - displacement used as given (full-space counterterm integrals)
///   nearest - nearest periodic image only
///   images  - adaptive lattice sum (honest torus kernel)
enum class Periodisation { none, nearest, images };

/// 1-D lattice Gaussian sum theta(y, beta) = sum_k exp(-beta (y+k)^2) with
/// first and second derivatives in y. The k-range adapts to beta so dropped
/// terms are below `tol` relative to the central one.
struct Theta1D {
  double val = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};
Theta1D theta_sum_1d(double y, double beta, double tol = 1e-12);

/// Z(x,t; src) = C(src) (t-tau)^{-d/2} exp(-theta^{src}(x-src)/(4(t-tau))),
/// with value plus target-space derivatives.
struct GaussEval {
  double z = 0.0;
  Vec dz{};   // d_i Z
  Mat d2z;    // d_i d_j Z
};

double frozen_gaussian(const FrozenData& src, const Vec& x, double t,
                       Periodisation per = Periodisation::nearest);

GaussEval frozen_gaussian_derivs(const FrozenData& src, const Vec& x, double t,
                                 Periodisation per = Periodisation::nearest);

/// LZ(x,t; src) = sum_ij (a_ij(x,t) - a_ij(src)) d_i d_j Z
///              + sum_i b_i(x,t) d_i Z + c(x,t) Z.
double apply_L_to_Z(const CoefficientField& field, const FrozenData& src,
                    const Vec& x, double t,
                    Periodisation per = Periodisation::nearest);

/// Adjoint frozen Gaussian Z0*(eta,tau; x,t) for tau < t: frozen at the late
/// base point (x,t), evaluated at the earlier point (eta,tau).
double adjoint_gaussian(const FrozenData& base, const Vec& eta, double tau);

/// Splits d/dx_i Z0*(eta,tau; x,t) into the leading odd part
///   Z_{0;i} = (A^{-1}(x,t) (eta-x))_i / (2(t-tau)) * Z0*
/// and a remainder one power of (t-tau)^{1/2} better; leading + remainder
/// equals the exact base-point derivative.
struct GradientSplit {
  Vec leading{};
  Vec remainder{};
  Vec full{};  // d/dx_i Z0*, closed form
};
GradientSplit gradient_split_Z0(const CoefficientField& field, const Vec& eta,
                                double tau, const Vec& x, double t);

/// Smallest k-window radius so that images beyond it are below tol for the
/// quadratic form with largest eigenvalue lam_max at time lag s.
int image_window(double lam_max, double s, double tol = 1e-12);

}  // namespace px
