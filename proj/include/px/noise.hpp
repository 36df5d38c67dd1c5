#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "px/coefficients.hpp"
#include "px/common.hpp"

namespace px {

// ---------------------------------------------------------------------------
// Smooth cut-offs and profiles.

struct Bumps {
  /// kappa: 0 off [0,1], identically 1 on (0, 1/2], smooth decay on [1/2, 1].
  std::function<double(double)> kappa;
  /// 1-D factor of the periodic partition of unity (identically 1 on
  /// |u| <= 0.45, support |u| < 0.55), phi(x) = prod_i p(x_i).
  std::function<double(double)> phi1;
  double phi_partition(const Vec& u, int d) const {
    double w = 1.0;
    for (int i = 0; i < d; ++i) w *= phi1(u[i]);
    return w;
  }
  /// Radial mollifier profile rho(r), r = |x|^2, support [0,1); normalised so
  /// that int rho(|x|^2) dx = 1 in dimension d (rho_scale[d] applied).
  std::function<double(double)> rho_raw;  // unnormalised exp(-1/(1-r))
  std::array<double, max_dim + 1> rho_scale{};  // per-dimension normalisation
  double rho(double r, int d) const { return rho_scale[d] * rho_raw(r); }
  /// Even time bump with unit integral, support (-1, 1).
  std::function<double(double)> phi_t;
  double phi_t_support = 1.0;
};

Bumps bump_functions();

// ---------------------------------------------------------------------------
// Counter-based RNG (Threefry2x64, 20 rounds): pure function of
// (seed, stream, counter), so parallel sampling is order independent and
// coupled experiments can reuse one underlying noise across eps values.

struct U64Pair {
  std::uint64_t a = 0, b = 0;
};
U64Pair threefry2x64(std::uint64_t key0, std::uint64_t key1,
                     std::uint64_t ctr0, std::uint64_t ctr1);

/// One standard normal per (seed, stream, counter).
double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter);
/// Uniform in [0,1).
double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter);

// ---------------------------------------------------------------------------

struct NoiseField {
  enum class Kind { spatial, space_time };
  Kind kind = Kind::spatial;
  Grid grid;
  int m = 1;         // time slices (space-time noise), ignored for spatial
  double dt = 0.0;   // slice spacing
  double t0 = 0.0;   // time of slice 0
  std::uint64_t seed = 0, stream = 0;
  std::vector<double> values;   // [k*cells + cell]
  std::vector<float> values32;  // d = 3 space-time storage
  bool single_precision = false;

  double at(std::size_t cell, int k = 0) const {
    std::size_t i = static_cast<std::size_t>(k) * grid.cells() + cell;
    return single_precision ? static_cast<double>(values32[i]) : values[i];
  }
  std::size_t dof() const {
    return grid.cells() * static_cast<std::size_t>(kind == Kind::spatial ? 1 : m);
  }
};

NoiseField sample_white_noise(NoiseField::Kind kind, const Grid& grid,
                              std::uint64_t seed, std::uint64_t stream = 0,
                              int m = 1, double dt = 0.0, double t0 = 0.0,
                              Exec exec = Exec::parallel);

/// <xi, f> with f given on the noise cells (slice k for space-time noise).
double pair_with(const NoiseField& xi, const std::vector<double>& f, int k = 0);

// ---------------------------------------------------------------------------
// Mollification schemes. All produce smooth grid functions and are pure
// functions of (noise, scheme, eps, field).

enum class MollScheme { heat_kernel, covariant, flat };

struct Mollifier {
  MollScheme scheme = MollScheme::heat_kernel;
  double eps = 0.1;
  CoefficientField field;
  Grid grid;
  Bumps bumps;
  double trunc_tol = 1e-10;
  Exec exec = Exec::parallel;

  // flat scheme: two-point profile rho_eps(z, z') with compact support
  std::function<double(const Vec&, double, const Vec&, double)> flat_rho;
  double flat_space_radius = 0.0;  // support radii for windowing
  double flat_time_radius = 0.0;

  /// Spatial noise (or one fixed slice): smooth field on the grid at time t.
  std::vector<double> spatial(const std::vector<double>& xi, double t) const;

  /// Space-time noise: smooth slice at time t (time convolution with
  /// phi^eps( . /eps^2)/eps^2, then the spatial scheme).
  std::vector<double> spacetime_slice(const NoiseField& xi, double t) const;

  void validate(bool space_time, double dt_grid) const;
};

}  // namespace px
