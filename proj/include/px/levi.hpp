#pragma once

#include <map>
#include <memory>
#include <vector>

#include "px/coefficients.hpp"
#include "px/common.hpp"
#include "px/kernels.hpp"
#include "px/quadrature.hpp"

namespace px {

/// Two-point kernel sampled on the torus grid for a fixed source; one value
/// array per stored lag. Entries with t <= tau are never stored (the smallest
/// stored lag is positive by construction).
struct GridKernel {
  int d = 2;
  int n = 64;
  int N = 0;  // truncation depth used to build it
  double T = 0.0;
  double tau = 0.0;
  Vec source{};
  std::string field_name;
  std::string policy;  // periodisation / diagonal handling tags
  std::vector<double> lags;
  std::vector<std::vector<double>> values;  // [lag][cell]

  double value(std::size_t lag_idx, std::size_t cell) const {
    return values[lag_idx][cell];
  }
};

struct LeviQuadrature {
  int time_nodes_half = 6;   // GL nodes per graded half of each time integral
  double trunc_tol = 1e-10;  // spatial window cutoff relative to the envelope
  int coarse_factor = 2;     // spatial coarsening for layers nu >= 2
  double band_safety = 1.2;  // near-diagonal band = (safety*dx)^2/(2 lam0)
  std::size_t max_gather_ops = 600ull * 1000 * 1000 * 1000;
};

/// Levi iteration for one source point: closed-form frozen Gaussian Z0,
/// iterated space-time convolutions (LZ)_nu and the layer kernels Z_nu,
///
///   (LZ)_{nu+1}(x,t;z) = int_0^t int LZ(x,t;y,s) (LZ)_nu(y,s;z) dy ds,
///   Z_nu(x,t;z)        = int_0^t int  Z(x,t;y,s) (LZ)_nu(y,s;z) dy ds.
///
/// Time integrals use Gauss nodes graded into both endpoints plus an
/// analytic near-diagonal band; spatial integrals are periodic trapezoid
/// sums with lattice-summed (theta) Gaussians and envelope windowing.
/// (LZ)_nu tables for nu >= 2 live on a coarsened grid.
class LeviEngine {
 public:
  LeviEngine(CoefficientField field, Grid grid, Vec source, double tau,
             LeviQuadrature quad = {}, Exec exec = Exec::parallel);

  const CoefficientField& field() const { return field_; }
  const Grid& grid() const { return grid_; }
  const Vec& source() const { return source_; }
  double tau() const { return tau_; }
  double lambda0() const { return lam0_; }
  double lambda1() const { return lam1_; }

  /// Z_nu on the full grid at absolute time t (> tau).
  std::vector<double> layer_grid(int nu, double t);
  /// Z_nu at a single (off-grid allowed) target.
  double layer_at(int nu, const Vec& x, double t);
  /// Gamma_N = sum_{nu <= N}.
  std::vector<double> gamma_grid(int N, double t);
  double gamma_at(int N, const Vec& x, double t);

  /// (LZ)_nu on the layer grid at absolute time s; memoised.
  const std::vector<double>& lz_slice(int nu, double s);

  Grid layer_grid_dims() const { return lgrid_; }
  bool trivial_layers() const { return trivial_; }

  std::size_t gather_ops() const { return ops_; }

 private:
  struct FieldTable {
    std::vector<double> a[max_dim][max_dim];
    std::vector<double> b[max_dim];
    std::vector<double> c;
    std::vector<double> Bdiag[max_dim];
    std::vector<double> Cnorm;
    bool has_b = false, has_c = false;
  };

  const FieldTable& table(const Grid& g, double t);
  double band(double h) const;
  void budget(std::size_t add);

  // theta lookup tables for one lag: frozen matrix taken at the source cell
  // of grid gsrc, displacements in full-grid steps.
  struct ThetaTables {
    int W = 0;
    int stride = 0;  // 2W+1
    // [dim][src_cell*(2W+1) + (g+W)] for val/d1/d2
    std::vector<double> val[max_dim], d1[max_dim], d2[max_dim];
    std::vector<double> pref;  // Cnorm * lag^{-d/2} per src cell
  };
  ThetaTables build_tables(const Grid& gsrc, double t_src, double lag,
                           bool derivs, int disp_step) const;

  std::vector<double> lz1_values(const Grid& g, double s);
  std::vector<double> compute_slice(int nu, double s);
  const std::vector<double>& t1_full(double s);

  // out[x] += w * sum_y Zker(x - y; frozen at y) * T[y] dVol
  void gather_z(const Grid& gsrc, double t_src, double lag, double weight,
                const std::vector<double>& T, std::vector<double>& out,
                int disp_step);
  // same with the LZ integrand (frozen at y, target coefficients at x)
  void gather_lz(const Grid& gsrc, const Grid& gtgt, double s_src,
                 double t_tgt, double lag, double weight,
                 const std::vector<double>& T, std::vector<double>& out,
                 int disp_step);

  CoefficientField field_;
  Grid grid_, lgrid_;
  Vec source_{};
  double tau_ = 0.0;
  LeviQuadrature quad_;
  Exec exec_;
  double lam0_ = 1.0, lam1_ = 1.0;
  bool trivial_ = false;  // constant a, b = c = 0: all layers vanish
  FrozenData frozen_src_;
  std::map<std::pair<int, double>, std::vector<double>> slices_;
  std::map<double, std::vector<double>> t1_full_;
  std::map<std::pair<int, double>, FieldTable> tables_;  // (cells, time)
  std::size_t ops_ = 0;
};

// ---------------------------------------------------------------------------
// Kernel-level operations built on the engine.

GridKernel gamma_truncated(LeviEngine& eng, int N,
                           const std::vector<double>& lags);

/// Fits |Z_nu| <= H0 H^nu / Gamma(nu) (t-tau)^{nu-d/2} over nu = 1..N:
/// m_nu = sup over lags of sup|Z_nu| Gamma(nu) lag^{d/2-nu}, least squares on
/// log m_nu. max_ratio is the spread of m_nu / H^nu (1 = perfectly geometric).
struct LayerBoundFit {
  std::vector<double> m_nu;
  double H0 = 0.0, H = 0.0;
  double max_ratio = 1.0;
  double tail_bound(int N, double lag, int d) const;
};
LayerBoundFit fit_layer_bounds(LeviEngine& eng, int N,
                               const std::vector<double>& lags);

struct CompositionReport {
  double sup_gamma = 0.0;
  double max_residual = 0.0;  // normalised by sup_gamma
  std::vector<double> per_probe;
};

/// Chapman-Kolmogorov defect |Gamma(x,t;xi,tau) - sum_y Gamma(x,t;y,sigma)
/// Gamma(y,sigma;xi,tau) dV| at probe targets x, via the adjoint identity for
/// the first factor.
CompositionReport composition_residual(const CoefficientField& field,
                                       const Grid& grid,
                                       const LeviQuadrature& quad, int N,
                                       const Vec& source_xi, double tau,
                                       double sigma, double t,
                                       const std::vector<Vec>& probes,
                                       Exec exec = Exec::parallel);

struct AdjointReport {
  double max_rel_mismatch = 0.0;
  std::vector<double> forward_vals, adjoint_vals;
};

/// Samples eq-adjoint: Gamma(zeta,tau;x,t) vs Gamma*(x,t;zeta,tau) on
/// probe-source pairs (P forward runs x Q adjoint runs).
AdjointReport adjoint_mismatch(const CoefficientField& field, const Grid& grid,
                               const LeviQuadrature& quad, int N,
                               const std::vector<Vec>& fwd_sources,
                               const std::vector<Vec>& adj_bases, double lag,
                               Exec exec = Exec::parallel);

/// Adjoint kernel as a GridKernel: Gamma*(y, t_ref - lag; base, t_ref) for y
/// on the grid, built by the forward Levi iteration on the adjoint field.
GridKernel adjoint_gamma(const CoefficientField& field, const Grid& grid,
                         const LeviQuadrature& quad, int N, const Vec& base,
                         double t_ref, const std::vector<double>& lags,
                         Exec exec = Exec::parallel);

struct ReflectionSplit {
  std::vector<double> z1, zbar1, r1;  // grid values at the requested lag
  double antisymmetry_defect = 0.0;   // sup|Zbar(Rx)+Zbar(x)| / sup|Zbar|
};
ReflectionSplit reflection_split_Z1(LeviEngine& eng, double t);

struct LambdaSensitivity {
  double sup_derivative = 0.0;  // sup |Gamma^{l+d} - Gamma^{l-d}| / (2 d)
  double sup_gamma = 0.0;       // sup |Gamma^{l}|
  double ratio = 0.0;
};
LambdaSensitivity lambda_sensitivity(
    const std::function<CoefficientField(double)>& family, double lambda0,
    double delta, const Grid& grid, const LeviQuadrature& quad, int N,
    const Vec& source, double lag, Exec exec = Exec::parallel);

/// K(x,t;zeta,s) = kappa(t-s) sum_k phi(x-zeta-k) Gamma(x-k,t;zeta,s).
/// The nu=0 part uses exact per-image Gaussians; layer parts are evaluated at
/// the wrapped displacement (their images are sub-leading), recorded in the
/// policy tag.
GridKernel truncate_periodic_kernel(LeviEngine& eng, int N,
                                    const std::vector<double>& lags,
                                    const std::function<double(double)>& kappa,
                                    const std::function<double(const Vec&, int)>& phi);

}  // namespace px
