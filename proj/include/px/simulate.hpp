#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "px/coefficients.hpp"
#include "px/common.hpp"
#include "px/noise.hpp"
#include "px/renorm.hpp"

namespace px {

enum class Equation { gpam, phi4_2, kpz };
std::string to_string(Equation eq);

/// Named smooth scalar maps for the g-PAM nonlinearities.
struct FunctionSpec {
  std::string name = "zero";  // zero | one | linear | tanh | sin
  double scale = 0.0;
  double operator()(double u) const;
  double deriv(double u) const;
};

enum class CtMode { on, off, custom };

struct EquationConfig {
  Equation equation = Equation::phi4_2;
  CoefficientField field;
  Grid grid;
  double dt = 2.5e-3;
  double T = 0.25;
  double eps = 0.1;
  MollScheme scheme = MollScheme::heat_kernel;
  CtMode ct_mode = CtMode::on;
  double custom_ct = 0.0;
  std::uint64_t seed = 1, stream = 0;
  double blowup_guard = 1e6;
  std::vector<double> u0;  // empty -> default smooth initial condition
  FunctionSpec f_diag{"zero", 0.0};   // f_ij = f_diag(u) delta_ij
  FunctionSpec g_fun{"one", 1.0};     // g
  bool kpz_log_term = false;
  double noise_margin_eps = 0.0;  // reserve noise slices for this eps (>= eps)
  int steps() const { return static_cast<int>(std::round(T / dt)); }
};

struct Trajectory {
  std::vector<double> times;                 // saved times
  std::vector<std::vector<double>> states;   // saved grid functions
  std::vector<double> sup_norm;              // per step
  std::vector<double> energy;                // per step, 0.5 |u|_2^2
  bool blew_up = false;
  double blowup_time = -1.0;
  std::vector<double> final_state;
};

/// One semi-implicit step: diagonal second-order part, drift and zeroth
/// order implicit (backward Euler, 2d+1-point stencil, sparse solve); mixed
/// derivatives, nonlinearity, noise and counterterms explicit at the old
/// level.
class SemiImplicitStepper {
 public:
  SemiImplicitStepper(const EquationConfig& cfg, Exec exec = Exec::parallel);
  ~SemiImplicitStepper();

  /// Maximum-principle / mesh-ratio condition of the implicit stencil.
  void check_stencil() const;

  std::vector<double> step(const std::vector<double>& u, double t,
                           const std::vector<double>& noise_slice) const;

  const std::vector<double>& counterterm_noise() const { return ct_noise_; }
  const std::vector<double>& counterterm_grad(int i) const {
    return ct_grad_[i];
  }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Integrates to the horizon (or blow-up); pure function of config + seed.
Trajectory solve(const EquationConfig& cfg, Exec exec = Exec::parallel,
                 int save_every = 0);

struct CauchyTable {
  std::vector<double> eps;
  std::vector<double> diffs;  // sup over [T/2, T] of |u_k - u_{k+1}|
  bool tail_decreasing = false;
};
/// Coupled-noise Cauchy differences along the eps ladder (same seed).
CauchyTable epsilon_sweep(EquationConfig cfg, const std::vector<double>& ladder,
                          Exec exec = Exec::parallel);

struct CompareTable {
  std::vector<double> eps;
  std::vector<double> dist;
  bool decreasing = false;
};
/// Cross-scheme trajectory distance at matched eps, coupled noise, each
/// scheme with its own counterterm.
CompareTable mollifier_comparison(EquationConfig cfg, MollScheme a,
                                  MollScheme b,
                                  const std::vector<double>& ladder,
                                  Exec exec = Exec::parallel);

std::vector<double> default_initial_condition(const Grid& grid);

}  // namespace px
