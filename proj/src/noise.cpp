#include "px/noise.hpp"

#include <cmath>

#include "px/kernels.hpp"
#include "px/quadrature.hpp"

namespace px {

namespace {

// exp-based smoothstep: 0 at u<=0, 1 at u>=1, S(u) + S(1-u) = 1.
double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double f = std::exp(-1.0 / u);
  double g = std::exp(-1.0 / (1.0 - u));
  return f / (f + g);
}

}  // namespace

Bumps bump_functions() {
  Bumps b;
  b.kappa = [](double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    if (t <= 0.5) return 1.0;
    return 1.0 - smoothstep((t - 0.5) * 2.0);
  };
  b.phi1 = [](double u) {
    double a = std::abs(u);
    if (a <= 0.45) return 1.0;
    if (a >= 0.55) return 0.0;
    return 1.0 - smoothstep((a - 0.45) * 10.0);
  };
  b.rho_raw = [](double r) {
    if (r <= 0.0) return std::exp(-1.0);
    if (r >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r));
  };
  // normalisation per dimension: int_{R^d} rho(|x|^2) dx
  //   d=1: 2 int_0^1 rho(r^2) dr ; d=2: pi int_0^1 rho(u) du (u=r^2);
  //   d=3: 4 pi int_0^1 r^2 rho(r^2) dr
  auto raw = b.rho_raw;
  double i1 = adaptive_simpson([&](double r) { return raw(r * r); }, 0.0, 1.0,
                               1e-13);
  double i2 = adaptive_simpson(raw, 0.0, 1.0, 1e-13);
  double i3 = adaptive_simpson([&](double r) { return r * r * raw(r * r); },
                               0.0, 1.0, 1e-13);
  b.rho_scale[1] = 1.0 / (2.0 * i1);
  b.rho_scale[2] = 1.0 / (M_PI * i2);
  b.rho_scale[3] = 1.0 / (4.0 * M_PI * i3);
  // even bump, unit mass
  auto bump = [](double s) {
    double u = 1.0 - s * s;
    return u > 0.0 ? std::exp(-1.0 / u) : 0.0;
  };
  double ib = adaptive_simpson(bump, -1.0, 1.0, 1e-13);
  b.phi_t = [bump, ib](double s) { return bump(s) / ib; };
  b.phi_t_support = 1.0;
  return b;
}

// ---------------------------------------------------------------------------

U64Pair threefry2x64(std::uint64_t k0, std::uint64_t k1, std::uint64_t c0,
                     std::uint64_t c1) {
  static constexpr int R[8] = {16, 42, 12, 31, 16, 32, 24, 21};
  const std::uint64_t parity = 0x1BD11BDAA9FC1A22ull ^ k0 ^ k1;
  std::uint64_t ks[3] = {k0, k1, parity};
  std::uint64_t x0 = c0 + ks[0], x1 = c1 + ks[1];
  auto rotl = [](std::uint64_t v, int r) {
    return (v << r) | (v >> (64 - r));
  };
  for (int round = 0; round < 20; ++round) {
    x0 += x1;
    x1 = rotl(x1, R[round % 8]);
    x1 ^= x0;
    if ((round + 1) % 4 == 0) {
      int s = (round + 1) / 4;
      x0 += ks[s % 3];
      x1 += ks[(s + 1) % 3] + static_cast<std::uint64_t>(s);
    }
  }
  return {x0, x1};
}

double counter_normal(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  U64Pair r = threefry2x64(seed, stream, counter, 0x9E3779B97F4A7C15ull);
  double u1 = (static_cast<double>(r.a >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
  double u2 = static_cast<double>(r.b >> 11) * 0x1.0p-53;          // [0,1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter) {
  U64Pair r = threefry2x64(seed, stream, counter, 0xD1B54A32D192ED03ull);
  return static_cast<double>(r.a >> 11) * 0x1.0p-53;
}

NoiseField sample_white_noise(NoiseField::Kind kind, const Grid& grid,
                              std::uint64_t seed, std::uint64_t stream, int m,
                              double dt, double t0, Exec exec) {
  if (grid.n < 2) throw Error("sample_white_noise: grid too small");
  NoiseField f;
  f.kind = kind;
  f.grid = grid;
  f.m = kind == NoiseField::Kind::spatial ? 1 : m;
  f.dt = dt;
  f.t0 = t0;
  f.seed = seed;
  f.stream = stream;
  double cellvol = grid.cell_volume();
  double scale = kind == NoiseField::Kind::spatial
                     ? 1.0 / std::sqrt(cellvol)
                     : 1.0 / std::sqrt(dt * cellvol);
  std::size_t total = grid.cells() * static_cast<std::size_t>(f.m);
  f.single_precision = (grid.d == 3 && kind == NoiseField::Kind::space_time);
  if (f.single_precision)
    f.values32.resize(total);
  else
    f.values.resize(total);
  for_each(total, exec, [&](std::size_t i) {
    double v = scale * counter_normal(seed, stream, i);
    if (f.single_precision)
      f.values32[i] = static_cast<float>(v);
    else
      f.values[i] = v;
  });
  return f;
}

double pair_with(const NoiseField& xi, const std::vector<double>& f, int k) {
  std::vector<double> prod(xi.grid.cells());
  double vol = xi.grid.cell_volume() *
               (xi.kind == NoiseField::Kind::space_time ? xi.dt : 1.0);
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = f[i] * xi.at(i, k);
  return pairwise_sum(prod) * vol;
}

// ---------------------------------------------------------------------------

void Mollifier::validate(bool space_time, double dt_grid) const {
  if (scheme == MollScheme::covariant && eps < 2.0 * grid.dx())
    throw UnresolvableEpsilon("covariant mollifier needs eps >= 2 dx");
  if (scheme == MollScheme::heat_kernel && space_time &&
      eps * eps < dt_grid)
    throw UnresolvableEpsilon("heat mollifier needs eps^2 >= dt");
}

std::vector<double> Mollifier::spatial(const std::vector<double>& xi,
                                       double t) const {
  std::size_t cells = grid.cells();
  std::vector<double> out(cells, 0.0);
  int d = grid.d, n = grid.n;
  double dvol = grid.cell_volume();

  if (scheme == MollScheme::heat_kernel) {
    // sum_z Z0^{(z)}(x, t; z, t - eps^2) xi(z) dV, theta-periodised,
    // gathered per target in fixed source order
    double lag = eps * eps;
    EllipticityRange er = check_ellipticity(field, std::min(n, 64), 1, 1.0);
    int W = std::min(
        n / 2, static_cast<int>(std::ceil(
                   std::sqrt(4.0 * er.lambda1 * lag * std::log(1.0 / trunc_tol)) *
                   n)) +
                   1);
    bool ring = 2 * W + 1 >= n;
    // per-source theta tables (value only)
    std::vector<double> tab[max_dim];
    std::vector<double> pref(cells);
    int stride = 2 * W + 1;
    double key_t = field.time_dependent ? t - lag : 0.0;
    for (int i = 0; i < d; ++i) tab[i].resize(cells * stride);
    double lag_pow = std::pow(lag, -0.5 * d);
    for_each(cells, exec, [&](std::size_t src) {
      FrozenData fz = evaluate_frozen(field, grid.point(src), key_t);
      pref[src] = fz.C * lag_pow;
      for (int i = 0; i < d; ++i) {
        double beta = fz.A_inv(i, i) / (4.0 * lag);
        for (int g = -W; g <= W; ++g)
          tab[i][src * stride + g + W] =
              theta_sum_1d(g * grid.dx(), beta, trunc_tol * 1e-2).val;
      }
    });
    for_each(cells, exec, [&](std::size_t ti) {
      auto ic = grid.coords(ti);
      double acc = 0.0;
      std::array<int, max_dim> lo{}, hi{};
      for (int i = 0; i < d; ++i) {
        lo[i] = ring ? -(n / 2) : ic[i] - W;
        hi[i] = ring ? n - n / 2 - 1 : ic[i] + W;
      }
      std::array<int, max_dim> it{};
      for (int i = 0; i < d; ++i) it[i] = lo[i];
      std::array<int, max_dim> sy{};
      while (true) {
        bool inside = true;
        std::array<int, max_dim> gd{};
        for (int i = 0; i < d; ++i) {
          int g = ic[i] - it[i];
          g = ((g % n) + n) % n;
          if (g > n / 2) g -= n;
          if (std::abs(g) > W) {
            inside = false;
            break;
          }
          gd[i] = g;
        }
        if (inside) {
          for (int i = 0; i < d; ++i) sy[i] = ((it[i] % n) + n) % n;
          std::size_t src = grid.index(sy);
          double v = xi[src];
          if (v != 0.0) {
            double ker = pref[src];
            for (int i = 0; i < d; ++i) ker *= tab[i][src * stride + gd[i] + W];
            acc += ker * v;
          }
        }
        int c = 0;
        while (c < d && ++it[c] > hi[c]) it[c++] = lo[c];
        if (c == d) break;
      }
      out[ti] = acc * dvol;
    });
    return out;
  }

  if (scheme == MollScheme::covariant) {
    // kernel frozen at the target: rho^{(z,eps)}(x - z') with z = (x,t)
    EllipticityRange er = check_ellipticity(field, std::min(n, 64), 1, 1.0);
    int W = std::min(n / 2, static_cast<int>(std::ceil(
                                eps * std::sqrt(er.lambda1) * n)) +
                                1);
    for_each(cells, exec, [&](std::size_t ti) {
      Vec x = grid.point(ti);
      FrozenData fz = evaluate_frozen(field, x, t);
      double pref = std::pow(eps, -d) / std::sqrt(fz.detA);
      auto ic = grid.coords(ti);
      double acc = 0.0;
      std::array<int, max_dim> it{};
      for (int i = 0; i < d; ++i) it[i] = ic[i] - W;
      std::array<int, max_dim> sy{};
      while (true) {
        Vec u{};
        for (int i = 0; i < d; ++i) {
          u[i] = (ic[i] - it[i]) * grid.dx();
          sy[i] = ((it[i] % n) + n) % n;
        }
        double r = quad_form(fz.A_inv, u) / (eps * eps);
        if (r < 1.0) {
          double v = xi[grid.index(sy)];
          if (v != 0.0) acc += pref * bumps.rho(r, d) * v;
        }
        int c = 0;
        while (c < d && ++it[c] > ic[c] + W) it[c++] = ic[c] - W;
        if (c == d) break;
      }
      out[ti] = acc * dvol;
    });
    return out;
  }

  // flat: out(z) = sum_{z'} rho_eps(z, z') xi(z') dV, spatial slice variant
  int W = std::min(n / 2,
                   static_cast<int>(std::ceil(flat_space_radius * n)) + 1);
  for_each(cells, exec, [&](std::size_t ti) {
    Vec x = grid.point(ti);
    auto ic = grid.coords(ti);
    double acc = 0.0;
    std::array<int, max_dim> it{};
    for (int i = 0; i < d; ++i) it[i] = ic[i] - W;
    std::array<int, max_dim> sy{};
    while (true) {
      Vec zp{};
      for (int i = 0; i < d; ++i) {
        sy[i] = ((it[i] % n) + n) % n;
        zp[i] = x[i] - (ic[i] - it[i]) * grid.dx();
      }
      double w = flat_rho(x, t, zp, t);
      if (w != 0.0) acc += w * xi[grid.index(sy)];
      int c = 0;
      while (c < d && ++it[c] > ic[c] + W) it[c++] = ic[c] - W;
      if (c == d) break;
    }
    out[ti] = acc * dvol;
  });
  return out;
}

std::vector<double> Mollifier::spacetime_slice(const NoiseField& xi,
                                               double t) const {
  if (xi.kind != NoiseField::Kind::space_time)
    throw Error("spacetime_slice needs space-time noise");
  validate(true, xi.dt);
  std::size_t cells = grid.cells();
  double eps2 = eps * eps;
  // time convolution: for each cell, u(z) = sum_k phi^eps(t - tau_k) xi(z,k) dt
  std::vector<double> slice(cells, 0.0);
  int k_lo = static_cast<int>(
      std::floor((t - bumps.phi_t_support * eps2 - xi.t0) / xi.dt));
  int k_hi = static_cast<int>(
      std::ceil((t + bumps.phi_t_support * eps2 - xi.t0) / xi.dt));
  k_lo = std::max(k_lo, 0);
  k_hi = std::min(k_hi, xi.m - 1);
  for_each(cells, exec, [&](std::size_t i) {
    double acc = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
      double tau = xi.t0 + k * xi.dt;
      double w = bumps.phi_t((t - tau) / eps2) / eps2;
      if (w != 0.0) acc += w * xi.at(i, k);
    }
    slice[i] = acc * xi.dt;
  });
  if (scheme == MollScheme::flat && flat_time_radius > 0.0) {
    // genuinely two-point in time: fall back to the full double sum
    std::vector<double> out(cells, 0.0);
    int d = grid.d, n = grid.n;
    int W = std::min(n / 2,
                     static_cast<int>(std::ceil(flat_space_radius * n)) + 1);
    int kt_lo = std::max(
        0, static_cast<int>(std::floor((t - flat_time_radius - xi.t0) / xi.dt)));
    int kt_hi = std::min(
        xi.m - 1,
        static_cast<int>(std::ceil((t + flat_time_radius - xi.t0) / xi.dt)));
    double dvol = grid.cell_volume() * xi.dt;
    for_each(cells, exec, [&](std::size_t ti) {
      Vec x = grid.point(ti);
      auto ic = grid.coords(ti);
      double acc = 0.0;
      for (int k = kt_lo; k <= kt_hi; ++k) {
        double tau = xi.t0 + k * xi.dt;
        std::array<int, max_dim> it{};
        for (int i = 0; i < d; ++i) it[i] = ic[i] - W;
        std::array<int, max_dim> sy{};
        while (true) {
          Vec zp{};
          for (int i = 0; i < d; ++i) {
            sy[i] = ((it[i] % n) + n) % n;
            zp[i] = x[i] - (ic[i] - it[i]) * grid.dx();
          }
          double w = flat_rho(x, t, zp, tau);
          if (w != 0.0) acc += w * xi.at(grid.index(sy), k);
          int c = 0;
          while (c < d && ++it[c] > ic[c] + W) it[c++] = ic[c] - W;
          if (c == d) break;
        }
      }
      out[ti] = acc * dvol;
    });
    return out;
  }
  return spatial(slice, t);
}

}  // namespace px
