#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "px/common.hpp"

namespace px {

/// Operator data a_ij, b_i, c on the space-time torus. All maps are
/// 1-periodic in each spatial coordinate; a is symmetrised on evaluation.
struct CoefficientField {
  int d = 2;
  std::string name = "custom";
  bool time_dependent = false;
  bool diagonal = true;  // enables the per-dimension theta fast path

  std::function<Mat(const Vec&, double)> a;
  std::function<Vec(const Vec&, double)> b;    // null -> 0
  std::function<double(const Vec&, double)> c; // null -> 0

  /// Optional closed-form spatial derivatives d_k a_ij; when absent a
  /// periodic central difference with step h_fd is used.
  std::function<double(int, int, int, const Vec&, double)> da;

  double h_fd = 1e-4;

  Mat eval_a(const Vec& x, double t) const;
  Vec eval_b(const Vec& x, double t) const;
  double eval_c(const Vec& x, double t) const;
  /// d_k a_ij at (x,t).
  double eval_da(int k, int i, int j, const Vec& x, double t) const;
};

/// Frozen-coefficient data at a base point: A = a(z), its exact inverse and
/// determinant, and the Gaussian normalisation C = (4 pi)^{-d/2} det(A)^{-1/2}.
struct FrozenData {
  int d = 2;
  Vec x{};
  double t = 0.0;
  Mat A;
  Mat A_inv;
  double detA = 0.0;
  double C = 0.0;
};

FrozenData evaluate_frozen(const CoefficientField& field, const Vec& x, double t);
FrozenData frozen_from_matrix(const Mat& A);

/// theta^z(zeta) = zeta^T A(z)^{-1} zeta.
double inverse_metric(const FrozenData& frozen, const Vec& zeta);

struct EllipticityRange {
  double lambda0 = 0.0;  // min eigenvalue over the sample lattice
  double lambda1 = 0.0;  // max eigenvalue
};

/// Eigenvalue range of a over a sample lattice (n_space^d points x n_time
/// times over [0, t_max]); throws NonPositiveDefinite naming the offending
/// point when the minimum is <= 0.
EllipticityRange check_ellipticity(const CoefficientField& field,
                                   int n_space = 64, int n_time = 16,
                                   double t_max = 1.0);

struct CoefficientDerivatives {
  // da[k][i][j] = d_k a_ij
  std::array<std::array<std::array<double, max_dim>, max_dim>, max_dim> da{};
  // db[j][i] = d_j b_i
  std::array<std::array<double, max_dim>, max_dim> db{};
  double div_b = 0.0;        // sum_i d_i b_i
  double dd_a_contract = 0.0;  // sum_ij d_i d_j a_ij
  Vec b_star{};              // -b_i + 2 sum_j d_j a_ij
  double c_star = 0.0;       // c - div b + sum_ij d_i d_j a_ij
};

CoefficientDerivatives coefficient_derivatives(const CoefficientField& field,
                                               const Vec& x, double t);

/// Field with the same a and the adjoint drift/zeroth-order coefficients
/// (b*, c*), time reversed about t_ref. Its forward heat kernel started at
/// elapsed time 0 equals the adjoint kernel of the original operator based
/// at time t_ref.
CoefficientField adjoint_field(const CoefficientField& field, double t_ref);

// Named built-ins (the experiment configs refer to these).
//   identity             a = I
//   diag-sine            a_11 = 1 + amp sin(2 pi x_1), a_ii = 1 otherwise
//   rotated-anisotropic  constant R(angle) diag(ratio,1) R(angle)^T  (d = 2)
//   checkerboard-smooth  a_ii = 1 + amp sin(2 pi x_1) sin(2 pi x_2)
// Optional constant drift / zeroth order via b0, c0.
CoefficientField make_field(const std::string& name, int d,
                            const std::map<std::string, double>& params = {});

}  // namespace px
