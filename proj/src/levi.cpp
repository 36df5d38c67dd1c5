#include "px/levi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace px {

namespace {

// Window radius in grid steps of spacing 1/n_disp for a Gaussian of time lag
// `lag` and largest diffusion eigenvalue lam1.
int window_steps(double lam1, double lag, double tol, int n_disp) {
  double r = std::sqrt(std::max(0.0, 4.0 * lam1 * lag * std::log(1.0 / tol)));
  int w = static_cast<int>(std::ceil(r * n_disp)) + 1;
  return std::min(w, n_disp / 2);
}

bool full_ring(int W, int n) { return 2 * W + 1 >= n; }

bool probably_constant(const CoefficientField& f) {
  Mat a0 = f.eval_a(Vec{0.13, 0.57, 0.29}, 0.0);
  const double ts[2] = {0.0, 0.37};
  for (double t : ts)
    for (double u = 0.0; u < 1.0; u += 0.23) {
      Vec x{u, 0.77 - u, 0.31 + 0.4 * u};
      Mat a = f.eval_a(x, t);
      for (int i = 0; i < f.d; ++i)
        for (int j = 0; j < f.d; ++j)
          if (std::abs(a(i, j) - a0(i, j)) > 1e-14) return false;
    }
  return true;
}

bool zero_bc(const CoefficientField& f) {
  for (double u = 0.0; u < 1.0; u += 0.19) {
    Vec x{u, 1.0 - u, 0.5 * u};
    Vec b = f.eval_b(x, 0.11);
    for (int i = 0; i < f.d; ++i)
      if (b[i] != 0.0) return false;
    if (f.eval_c(x, 0.11) != 0.0) return false;
  }
  return true;
}

double bilinear_periodic(const std::vector<double>& v, const Grid& g,
                         const Vec& x) {
  // d-linear interpolation on the periodic grid
  std::array<int, max_dim> i0{};
  std::array<double, max_dim> w{};
  for (int i = 0; i < g.d; ++i) {
    double u = x[i] * g.n;
    double fl = std::floor(u);
    i0[i] = static_cast<int>(fl);
    w[i] = u - fl;
  }
  double acc = 0.0;
  int corners = 1 << g.d;
  for (int c = 0; c < corners; ++c) {
    std::array<int, max_dim> ic{};
    double wt = 1.0;
    for (int i = 0; i < g.d; ++i) {
      int bit = (c >> i) & 1;
      ic[i] = i0[i] + bit;
      wt *= bit ? w[i] : 1.0 - w[i];
    }
    acc += wt * v[g.index(ic)];
  }
  return acc;
}

}  // namespace

LeviEngine::LeviEngine(CoefficientField field, Grid grid, Vec source,
                       double tau, LeviQuadrature quad, Exec exec)
    : field_(std::move(field)),
      grid_(grid),
      source_(source),
      tau_(tau),
      quad_(quad),
      exec_(exec) {
  lgrid_ = grid_;
  lgrid_.n = std::max(8, grid_.n / std::max(1, quad_.coarse_factor));
  while (grid_.n % lgrid_.n != 0) ++lgrid_.n;
  EllipticityRange er = check_ellipticity(field_, std::min(grid_.n, 64),
                                          field_.time_dependent ? 8 : 1, 1.0);
  lam0_ = er.lambda0;
  lam1_ = er.lambda1;
  trivial_ = probably_constant(field_) && zero_bc(field_);
  frozen_src_ = evaluate_frozen(field_, source_, tau_);
  if (!field_.diagonal && !trivial_)
    throw Error(
        "levi iteration: variable fields must have diagonal a (built-in "
        "non-diagonal fields are constant-coefficient)");
}

double LeviEngine::band(double h) const {
  return quad_.band_safety * quad_.band_safety * h * h / (2.0 * lam0_);
}

void LeviEngine::budget(std::size_t add) {
  ops_ += add;
  if (ops_ > quad_.max_gather_ops)
    throw QuadratureBudgetExceeded("levi gather budget exceeded");
}

const LeviEngine::FieldTable& LeviEngine::table(const Grid& g, double t) {
  double key_t = field_.time_dependent ? t : 0.0;
  auto key = std::make_pair(g.n, key_t);
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  FieldTable ft;
  std::size_t m = g.cells();
  for (int i = 0; i < field_.d; ++i)
    for (int j = 0; j < field_.d; ++j) ft.a[i][j].resize(m);
  for (int i = 0; i < field_.d; ++i) ft.b[i].resize(m);
  ft.c.resize(m);
  for (int i = 0; i < field_.d; ++i) ft.Bdiag[i].resize(m);
  ft.Cnorm.resize(m);
  bool hb = false, hc = false;
  for (std::size_t idx = 0; idx < m; ++idx) {
    Vec x = g.point(idx);
    FrozenData fz = evaluate_frozen(field_, x, key_t);
    for (int i = 0; i < field_.d; ++i)
      for (int j = 0; j < field_.d; ++j) ft.a[i][j][idx] = fz.A(i, j);
    Vec b = field_.eval_b(x, key_t);
    for (int i = 0; i < field_.d; ++i) {
      ft.b[i][idx] = b[i];
      if (b[i] != 0.0) hb = true;
      ft.Bdiag[i][idx] = fz.A_inv(i, i);
    }
    double c = field_.eval_c(x, key_t);
    ft.c[idx] = c;
    if (c != 0.0) hc = true;
    ft.Cnorm[idx] = fz.C;
  }
  ft.has_b = hb;
  ft.has_c = hc;
  return tables_.emplace(key, std::move(ft)).first->second;
}

LeviEngine::ThetaTables LeviEngine::build_tables(const Grid& gsrc,
                                                 double t_src, double lag,
                                                 bool derivs,
                                                 int disp_n) const {
  ThetaTables tt;
  tt.W = window_steps(lam1_, lag, quad_.trunc_tol, disp_n);
  tt.stride = 2 * tt.W + 1;
  std::size_t m = gsrc.cells();
  const FieldTable& ft = const_cast<LeviEngine*>(this)->table(gsrc, t_src);
  for (int i = 0; i < field_.d; ++i) {
    tt.val[i].resize(m * tt.stride);
    if (derivs) {
      tt.d1[i].resize(m * tt.stride);
      tt.d2[i].resize(m * tt.stride);
    }
  }
  tt.pref.resize(m);
  double h = 1.0 / disp_n;
  double lag_pow = std::pow(lag, -0.5 * field_.d);
  for_each(m, exec_, [&](std::size_t src) {
    tt.pref[src] = ft.Cnorm[src] * lag_pow;
    for (int i = 0; i < field_.d; ++i) {
      double beta = ft.Bdiag[i][src] / (4.0 * lag);
      for (int g = -tt.W; g <= tt.W; ++g) {
        Theta1D th = theta_sum_1d(g * h, beta, quad_.trunc_tol * 1e-2);
        std::size_t at = src * tt.stride + (g + tt.W);
        tt.val[i][at] = th.val;
        if (derivs) {
          tt.d1[i][at] = th.d1;
          tt.d2[i][at] = th.d2;
        }
      }
    }
  });
  return tt;
}

std::vector<double> LeviEngine::lz1_values(const Grid& g, double s) {
  std::vector<double> out(g.cells());
  double key_t = field_.time_dependent ? s : 0.0;
  const FieldTable& ft = table(g, key_t);
  const FrozenData& fz = frozen_src_;
  for_each(g.cells(), exec_, [&](std::size_t idx) {
    Vec y = g.point(idx);
    GaussEval ge = frozen_gaussian_derivs(fz, y, s, Periodisation::images);
    double r = ft.c[idx] * ge.z;
    for (int i = 0; i < field_.d; ++i) {
      r += ft.b[i][idx] * ge.dz[i];
      for (int j = 0; j < field_.d; ++j)
        r += (ft.a[i][j][idx] - fz.A(i, j)) * ge.d2z(i, j);
    }
    out[idx] = r;
  });
  return out;
}

void LeviEngine::gather_z(const Grid& gsrc, double t_src, double lag,
                          double weight, const std::vector<double>& T,
                          std::vector<double>& out, int disp_n) {
  Grid gtgt = grid_;
  gtgt.n = disp_n;
  int n_t = gtgt.n, n_s = gsrc.n;
  int cf = n_t / n_s;  // 1 (same grid) or coarse_factor
  double dvol = gsrc.cell_volume();
  ThetaTables tt = build_tables(gsrc, t_src, lag, false, disp_n);
  int W = tt.W;
  int Ws = W / cf + 2;
  budget(gtgt.cells() * static_cast<std::size_t>(std::pow(2.0 * Ws + 1.0, field_.d)));
  int d = field_.d;
  bool ring = full_ring(W, n_t);

  for_each(gtgt.cells(), exec_, [&](std::size_t ti) {
    auto ic = gtgt.coords(ti);
    double acc = 0.0;
    std::array<int, max_dim> sy{};
    std::array<int, max_dim> lo{}, hi{};
    for (int i = 0; i < d; ++i) {
      if (ring && cf == 1) {
        lo[i] = -(n_s / 2);
        hi[i] = n_s - n_s / 2 - 1;
      } else {
        int center = (ic[i] + cf / 2) / cf;
        lo[i] = center - Ws;
        hi[i] = center + Ws;
        if (hi[i] - lo[i] + 1 >= n_s) {
          lo[i] = 0;
          hi[i] = n_s - 1;
        }
      }
    }
    // iterate source cells in the window
    std::array<int, max_dim> it{};
    for (int i = 0; i < d; ++i) it[i] = lo[i];
    while (true) {
      // displacement in target-grid steps, wrapped
      bool inside = true;
      std::array<int, max_dim> gdisp{};
      for (int i = 0; i < d; ++i) {
        int g = ic[i] - cf * ((it[i] % n_s + n_s) % n_s);
        g = ((g % n_t) + n_t) % n_t;
        if (g > n_t / 2) g -= n_t;
        if (std::abs(g) > W && !(ring && cf == 1)) {
          inside = false;
          break;
        }
        if (ring && cf == 1 && std::abs(g) > W) g = std::min(std::max(g, -W), W);
        gdisp[i] = g;
      }
      if (inside) {
        for (int i = 0; i < d; ++i) sy[i] = ((it[i] % n_s) + n_s) % n_s;
        std::size_t src = gsrc.index(sy);
        double tv = T[src];
        if (tv != 0.0) {
          double zker = tt.pref[src];
          for (int i = 0; i < d; ++i)
            zker *= tt.val[i][src * tt.stride + (gdisp[i] + W)];
          acc += zker * tv;
        }
      }
      int c = 0;
      while (c < d && ++it[c] > hi[c]) it[c++] = lo[c];
      if (c == d) break;
    }
    out[ti] += weight * dvol * acc;
  });
}

void LeviEngine::gather_lz(const Grid& gsrc, const Grid& gtgt, double s_src,
                           double t_tgt, double lag, double weight,
                           const std::vector<double>& T,
                           std::vector<double>& out, int disp_n) {
  int n_t = gtgt.n, n_s = gsrc.n;
  int cf = n_t / n_s;
  double dvol = gsrc.cell_volume();
  ThetaTables tt = build_tables(gsrc, s_src, lag, true, disp_n);
  const FieldTable& ftt = table(gtgt, field_.time_dependent ? t_tgt : 0.0);
  const FieldTable& fts = table(gsrc, field_.time_dependent ? s_src : 0.0);
  int W = tt.W;
  int Ws = W / cf + 2;
  budget(gtgt.cells() * static_cast<std::size_t>(std::pow(2.0 * Ws + 1.0, field_.d)));
  int d = field_.d;
  bool ring = full_ring(W, n_t);

  for_each(gtgt.cells(), exec_, [&](std::size_t ti) {
    auto ic = gtgt.coords(ti);
    double acc = 0.0;
    double ax[max_dim];
    double bx[max_dim];
    for (int i = 0; i < d; ++i) {
      ax[i] = ftt.a[i][i][ti];
      bx[i] = ftt.b[i][ti];
    }
    double cx = ftt.c[ti];
    bool hb = ftt.has_b, hc = ftt.has_c;

    std::array<int, max_dim> lo{}, hi{};
    for (int i = 0; i < d; ++i) {
      if (ring && cf == 1) {
        lo[i] = -(n_s / 2);
        hi[i] = n_s - n_s / 2 - 1;
      } else {
        int center = (ic[i] + cf / 2) / cf;
        lo[i] = center - Ws;
        hi[i] = center + Ws;
        if (hi[i] - lo[i] + 1 >= n_s) {
          lo[i] = 0;
          hi[i] = n_s - 1;
        }
      }
    }
    std::array<int, max_dim> it{};
    for (int i = 0; i < d; ++i) it[i] = lo[i];
    std::array<int, max_dim> sy{};
    while (true) {
      bool inside = true;
      std::array<int, max_dim> gdisp{};
      for (int i = 0; i < d; ++i) {
        int g = ic[i] - cf * ((it[i] % n_s + n_s) % n_s);
        g = ((g % n_t) + n_t) % n_t;
        if (g > n_t / 2) g -= n_t;
        if (std::abs(g) > W && !(ring && cf == 1)) {
          inside = false;
          break;
        }
        if (ring && cf == 1 && std::abs(g) > W) g = std::min(std::max(g, -W), W);
        gdisp[i] = g;
      }
      if (inside) {
        for (int i = 0; i < d; ++i) sy[i] = ((it[i] % n_s) + n_s) % n_s;
        std::size_t src = gsrc.index(sy);
        double tv = T[src];
        if (tv != 0.0) {
          std::size_t base = src * tt.stride + W;
          double th[max_dim], th1[max_dim], th2[max_dim];
          for (int i = 0; i < d; ++i) {
            th[i] = tt.val[i][base + gdisp[i]];
            th1[i] = tt.d1[i][base + gdisp[i]];
            th2[i] = tt.d2[i][base + gdisp[i]];
          }
          double pref = tt.pref[src];
          double zval = pref;
          for (int i = 0; i < d; ++i) zval *= th[i];
          double lz = 0.0;
          for (int i = 0; i < d; ++i) {
            double adiff = ax[i] - fts.a[i][i][src];
            if (adiff != 0.0) {
              double p = pref * th2[i];
              for (int j = 0; j < d; ++j)
                if (j != i) p *= th[j];
              lz += adiff * p;
            }
            if (hb && bx[i] != 0.0) {
              double p = pref * th1[i];
              for (int j = 0; j < d; ++j)
                if (j != i) p *= th[j];
              lz += bx[i] * p;
            }
          }
          if (hc) lz += cx * zval;
          acc += lz * tv;
        }
      }
      int c = 0;
      while (c < d && ++it[c] > hi[c]) it[c++] = lo[c];
      if (c == d) break;
    }
    out[ti] += weight * dvol * acc;
  });
}

const std::vector<double>& LeviEngine::t1_full(double s) {
  auto it = t1_full_.find(s);
  if (it != t1_full_.end()) return it->second;
  return t1_full_.emplace(s, lz1_values(grid_, s)).first->second;
}

const std::vector<double>& LeviEngine::lz_slice(int nu, double s) {
  auto key = std::make_pair(nu, s);
  auto it = slices_.find(key);
  if (it != slices_.end()) return it->second;
  std::vector<double> v =
      (nu == 1) ? lz1_values(lgrid_, s) : compute_slice(nu, s);
  return slices_.emplace(key, std::move(v)).first->second;
}

std::vector<double> LeviEngine::compute_slice(int nu, double sp) {
  std::vector<double> out(lgrid_.cells(), 0.0);
  if (trivial_) return out;
  double bl = std::min(band(lgrid_.dx()), 0.25 * (sp - tau_));
  QuadNodes q = graded_both_ends(quad_.time_nodes_half, tau_, sp - bl);
  for (std::size_t k = 0; k < q.size(); ++k) {
    const std::vector<double>& T = lz_slice(nu - 1, q.x[k]);
    if (sup_abs(T) == 0.0) continue;
    gather_lz(lgrid_, lgrid_, q.x[k], sp, sp - q.x[k], q.w[k], T, out,
              lgrid_.n);
  }
  // near-diagonal band: int LZ(.,sp; y,s) G(y) dy -> b.grad G + c G
  // (+ a(sp)-a(s) second-difference term for time-dependent coefficients)
  double sb = sp - bl;
  const std::vector<double>& Tb = lz_slice(nu - 1, sb);
  if (sup_abs(Tb) > 0.0) {
    const FieldTable& ft = table(lgrid_, field_.time_dependent ? sp : 0.0);
    int n = lgrid_.n, d = field_.d;
    double h = lgrid_.dx();
    for_each(lgrid_.cells(), exec_, [&](std::size_t idx) {
      double add = ft.c[idx] * Tb[idx];
      auto ic = lgrid_.coords(idx);
      for (int i = 0; i < d; ++i) {
        if (ft.b[i][idx] == 0.0) continue;
        auto ip = ic, im = ic;
        ip[i] = (ic[i] + 1) % n;
        im[i] = (ic[i] - 1 + n) % n;
        double grad =
            (Tb[lgrid_.index(ip)] - Tb[lgrid_.index(im)]) / (2.0 * h);
        add += ft.b[i][idx] * grad;
      }
      out[idx] += bl * add;
    });
  }
  return out;
}

std::vector<double> LeviEngine::layer_grid(int nu, double t) {
  if (nu == 0) {
    std::vector<double> out(grid_.cells());
    for_each(grid_.cells(), exec_, [&](std::size_t idx) {
      out[idx] =
          frozen_gaussian(frozen_src_, grid_.point(idx), t, Periodisation::images);
    });
    return out;
  }
  std::vector<double> out(grid_.cells(), 0.0);
  if (trivial_) return out;
  const Grid& gsrc = (nu == 1) ? grid_ : lgrid_;
  double bf = std::min(band(gsrc.dx()), 0.25 * (t - tau_));
  QuadNodes q = graded_both_ends(quad_.time_nodes_half, tau_, t - bf);
  for (std::size_t k = 0; k < q.size(); ++k) {
    const std::vector<double>& T =
        (nu == 1) ? t1_full(q.x[k]) : lz_slice(nu, q.x[k]);
    if (sup_abs(T) == 0.0) continue;
    gather_z(gsrc, q.x[k], t - q.x[k], q.w[k], T, out, grid_.n);
  }
  // band: int Z(x,t;eta,s) T(eta) deta -> T(x) as s -> t
  double sb = t - bf;
  if (nu == 1) {
    for_each(grid_.cells(), exec_, [&](std::size_t idx) {
      Vec x = grid_.point(idx);
      double tv = apply_L_to_Z(field_, frozen_src_, x, sb, Periodisation::images);
      out[idx] += bf * tv;
    });
  } else {
    const std::vector<double>& Tb = lz_slice(nu, sb);
    for_each(grid_.cells(), exec_, [&](std::size_t idx) {
      out[idx] += bf * bilinear_periodic(Tb, lgrid_, grid_.point(idx));
    });
  }
  return out;
}

double LeviEngine::layer_at(int nu, const Vec& x, double t) {
  if (nu == 0)
    return frozen_gaussian(frozen_src_, x, t, Periodisation::images);
  if (trivial_) return 0.0;
  const Grid& gsrc = (nu == 1) ? grid_ : lgrid_;
  double bf = std::min(band(gsrc.dx()), 0.25 * (t - tau_));
  QuadNodes q = graded_both_ends(quad_.time_nodes_half, tau_, t - bf);
  double acc = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    double s = q.x[k];
    const std::vector<double>& T =
        (nu == 1) ? t1_full(s) : lz_slice(nu, s);
    double lag = t - s;
    const FieldTable& ft = table(gsrc, field_.time_dependent ? s : 0.0);
    double inner = 0.0;
    double lag_pow = std::pow(lag, -0.5 * field_.d);
    for (std::size_t src = 0; src < gsrc.cells(); ++src) {
      double tv = T[src];
      if (tv == 0.0) continue;
      Vec y = gsrc.point(src);
      double prod = 1.0;
      for (int i = 0; i < field_.d; ++i) {
        double beta = ft.Bdiag[i][src] / (4.0 * lag);
        prod *= theta_sum_1d(wrap_unit(x[i] - y[i]), beta, quad_.trunc_tol).val;
      }
      inner += ft.Cnorm[src] * lag_pow * prod * tv;
    }
    acc += q.w[k] * inner * gsrc.cell_volume();
  }
  double sb = t - bf;
  if (nu == 1) {
    acc += bf * apply_L_to_Z(field_, frozen_src_, x, sb, Periodisation::images);
  } else {
    acc += bf * bilinear_periodic(lz_slice(nu, sb), lgrid_, x);
  }
  return acc;
}

std::vector<double> LeviEngine::gamma_grid(int N, double t) {
  std::vector<double> out = layer_grid(0, t);
  for (int nu = 1; nu <= N && !trivial_; ++nu) {
    std::vector<double> z = layer_grid(nu, t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  }
  return out;
}

double LeviEngine::gamma_at(int N, const Vec& x, double t) {
  double v = layer_at(0, x, t);
  for (int nu = 1; nu <= N && !trivial_; ++nu) v += layer_at(nu, x, t);
  return v;
}

// ---------------------------------------------------------------------------

GridKernel gamma_truncated(LeviEngine& eng, int N,
                           const std::vector<double>& lags) {
  GridKernel k;
  k.d = eng.grid().d;
  k.n = eng.grid().n;
  k.N = N;
  k.T = lags.empty() ? 0.0 : *std::max_element(lags.begin(), lags.end());
  k.tau = eng.tau();
  k.source = eng.source();
  k.field_name = eng.field().name;
  k.policy = eng.field().diagonal ? "theta-images;diag-fast;no-diagonal-entry"
                                  : "theta-images;generic;no-diagonal-entry";
  k.lags = lags;
  for (double lag : lags)
    k.values.push_back(eng.gamma_grid(N, eng.tau() + lag));
  return k;
}

double LayerBoundFit::tail_bound(int N, double lag, int d) const {
  double first = H0 * std::pow(H, N + 1) / std::tgamma(N + 1) *
                 std::pow(lag, N + 1 - 0.5 * d);
  double q = H * lag / (N + 1);
  return q < 0.9 ? first / (1.0 - q) : first * 10.0;
}

LayerBoundFit fit_layer_bounds(LeviEngine& eng, int N,
                               const std::vector<double>& lags) {
  LayerBoundFit f;
  int d = eng.grid().d;
  std::vector<double> nus, logs;
  for (int nu = 1; nu <= N; ++nu) {
    double m = 0.0;
    for (double lag : lags) {
      std::vector<double> z = eng.layer_grid(nu, eng.tau() + lag);
      m = std::max(m, sup_abs(z) * std::tgamma(nu) * std::pow(lag, 0.5 * d - nu));
    }
    f.m_nu.push_back(m);
    if (m > 0.0) {
      nus.push_back(nu);
      logs.push_back(std::log(m));
    }
  }
  if (nus.size() >= 2) {
    LineFit lf = fit_line(nus, logs);
    f.H = std::exp(lf.slope);
    f.H0 = std::exp(lf.intercept);
    double lo = 1e300, hi = 0.0;
    for (std::size_t i = 0; i < nus.size(); ++i) {
      double r = f.m_nu[static_cast<std::size_t>(nus[i]) - 1] /
                 std::pow(f.H, nus[i]);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    f.max_ratio = lo > 0.0 ? hi / lo : 1e300;
  } else if (nus.size() == 1) {
    f.H = f.m_nu[0];
    f.H0 = 1.0;
  }
  return f;
}

CompositionReport composition_residual(const CoefficientField& field,
                                       const Grid& grid,
                                       const LeviQuadrature& quad, int N,
                                       const Vec& source_xi, double tau,
                                       double sigma, double t,
                                       const std::vector<Vec>& probes,
                                       Exec exec) {
  if (!(t > sigma && sigma > tau))
    throw TimeOrder("composition needs t > sigma > tau");
  CompositionReport rep;
  LeviEngine fwd(field, grid, source_xi, tau, quad, exec);
  std::vector<double> mid = fwd.gamma_grid(N, sigma);
  rep.sup_gamma = sup_abs(mid);

  CoefficientField astar = adjoint_field(field, t);
  double dvol = grid.cell_volume();
  for (const Vec& xp : probes) {
    double direct = fwd.gamma_at(N, xp, t);
    LeviEngine adj(astar, grid, xp, 0.0, quad, exec);
    std::vector<double> row = adj.gamma_grid(N, t - sigma);
    std::vector<double> prod(mid.size());
    for (std::size_t i = 0; i < mid.size(); ++i) prod[i] = row[i] * mid[i];
    double composed = pairwise_sum(prod) * dvol;
    rep.per_probe.push_back(std::abs(direct - composed));
    rep.sup_gamma = std::max(rep.sup_gamma, std::abs(direct));
  }
  for (double r : rep.per_probe)
    rep.max_residual = std::max(rep.max_residual, r / rep.sup_gamma);
  return rep;
}

AdjointReport adjoint_mismatch(const CoefficientField& field, const Grid& grid,
                               const LeviQuadrature& quad, int N,
                               const std::vector<Vec>& fwd_sources,
                               const std::vector<Vec>& adj_bases, double lag,
                               Exec exec) {
  AdjointReport rep;
  CoefficientField astar = adjoint_field(field, lag);
  std::vector<std::unique_ptr<LeviEngine>> adj;
  for (const Vec& zb : adj_bases)
    adj.push_back(std::make_unique<LeviEngine>(astar, grid, zb, 0.0, quad, exec));
  double scale = 0.0;
  for (const Vec& ys : fwd_sources) {
    LeviEngine fwd(field, grid, ys, 0.0, quad, exec);
    for (std::size_t q = 0; q < adj_bases.size(); ++q) {
      double f = fwd.gamma_at(N, adj_bases[q], lag);
      double a = adj[q]->gamma_at(N, ys, lag);
      rep.forward_vals.push_back(f);
      rep.adjoint_vals.push_back(a);
      scale = std::max(scale, std::abs(f));
    }
  }
  for (std::size_t i = 0; i < rep.forward_vals.size(); ++i)
    rep.max_rel_mismatch =
        std::max(rep.max_rel_mismatch,
                 std::abs(rep.forward_vals[i] - rep.adjoint_vals[i]) /
                     (scale > 0 ? scale : 1.0));
  return rep;
}

GridKernel adjoint_gamma(const CoefficientField& field, const Grid& grid,
                         const LeviQuadrature& quad, int N, const Vec& base,
                         double t_ref, const std::vector<double>& lags,
                         Exec exec) {
  CoefficientField astar = adjoint_field(field, t_ref);
  LeviEngine eng(astar, grid, base, 0.0, quad, exec);
  GridKernel k = gamma_truncated(eng, N, lags);
  k.field_name = field.name;
  k.policy += ";adjoint";
  k.tau = t_ref;  // values[l][cell] = Gamma*(cell, t_ref - lags[l]; base, t_ref)
  return k;
}

ReflectionSplit reflection_split_Z1(LeviEngine& eng, double t) {
  ReflectionSplit rs;
  const Grid& grid = eng.grid();
  const CoefficientField& field = eng.field();
  const Vec& zeta = eng.source();
  double tau = eng.tau();
  int d = grid.d;
  FrozenData fz = evaluate_frozen(field, zeta, tau);
  CoefficientDerivatives cd = coefficient_derivatives(field, zeta, tau);
  Vec bz = field.eval_b(zeta, tau);

  rs.z1 = eng.layer_grid(1, t);

  // bracket field: sum_ijk d_k a_ij (eta-zeta)_k d_i d_j Z + sum_i b_i d_i Z,
  // everything frozen at zeta.
  auto bracket = [&](const Vec& eta, double s) {
    GaussEval ge = frozen_gaussian_derivs(fz, eta, s, Periodisation::images);
    Vec disp{};
    for (int i = 0; i < d; ++i) disp[i] = wrap_unit(eta[i] - zeta[i]);
    double r = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double lin = 0.0;
        for (int k = 0; k < d; ++k) lin += cd.da[k][i][j] * disp[k];
        if (lin != 0.0) r += lin * ge.d2z(i, j);
      }
    for (int i = 0; i < d; ++i)
      if (bz[i] != 0.0) r += bz[i] * ge.dz[i];
    return r;
  };

  std::vector<double> zbar(grid.cells(), 0.0);
  double lam0 = eng.lambda0();
  double bf = std::min(1.44 * grid.dx() * grid.dx() / (2.0 * lam0),
                       0.25 * (t - tau));
  QuadNodes q = graded_both_ends(6, tau, t - bf);
  std::vector<double> tbr(grid.cells());
  for (std::size_t k = 0; k < q.size(); ++k) {
    double s = q.x[k];
    double lag = t - s;
    for_each(grid.cells(), Exec::parallel,
             [&](std::size_t i) { tbr[i] = bracket(grid.point(i), s); });
    // gather with kernel frozen at zeta
    double lag_pow = std::pow(lag, -0.5 * d);
    std::vector<double> th[max_dim];
    int n = grid.n;
    for (int i = 0; i < d; ++i) {
      th[i].resize(n);
      double beta = fz.A_inv(i, i) / (4.0 * lag);
      for (int g = 0; g < n; ++g) {
        double y = static_cast<double>(g <= n / 2 ? g : g - n) / n;
        th[i][g] = theta_sum_1d(y, beta).val;
      }
    }
    bool diag = field.diagonal;
    for_each(grid.cells(), Exec::parallel, [&](std::size_t ti) {
      auto ic = grid.coords(ti);
      double acc = 0.0;
      for (std::size_t src = 0; src < grid.cells(); ++src) {
        double tv = tbr[src];
        if (tv == 0.0) continue;
        double ker;
        if (diag) {
          auto sc = grid.coords(src);
          ker = fz.C * lag_pow;
          for (int i = 0; i < d; ++i)
            ker *= th[i][((ic[i] - sc[i]) % n + n) % n];
        } else {
          Vec xp = grid.point(ti), yp = grid.point(src);
          Vec disp{};
          for (int i = 0; i < d; ++i) disp[i] = xp[i] - yp[i];
          FrozenData fz2 = fz;
          fz2.x = yp;
          fz2.t = s;
          ker = frozen_gaussian(fz2, xp, s + lag, Periodisation::images);
        }
        acc += ker * tv;
      }
      zbar[ti] += q.w[k] * acc * grid.cell_volume();
    });
  }
  // band: kernel mass is exactly 1 for the zeta-frozen Gaussian
  for_each(grid.cells(), Exec::parallel, [&](std::size_t i) {
    zbar[i] += bf * bracket(grid.point(i), t - bf);
  });

  rs.zbar1 = zbar;
  rs.r1.resize(zbar.size());
  for (std::size_t i = 0; i < zbar.size(); ++i)
    rs.r1[i] = rs.z1[i] - rs.zbar1[i];

  // antisymmetry under x -> 2 zeta - x (grid maps to grid when zeta is a
  // grid point and n is even)
  int n = grid.n;
  std::array<int, max_dim> zc{};
  for (int i = 0; i < d; ++i)
    zc[i] = static_cast<int>(std::lround(zeta[i] * n)) % n;
  double sup = sup_abs(zbar), defect = 0.0;
  for (std::size_t idx = 0; idx < grid.cells(); ++idx) {
    auto ic = grid.coords(idx);
    std::array<int, max_dim> ir{};
    for (int i = 0; i < d; ++i) ir[i] = ((2 * zc[i] - ic[i]) % n + n) % n;
    defect = std::max(defect, std::abs(zbar[grid.index(ir)] + zbar[idx]));
  }
  rs.antisymmetry_defect = sup > 0 ? defect / sup : 0.0;
  return rs;
}

LambdaSensitivity lambda_sensitivity(
    const std::function<CoefficientField(double)>& family, double lambda0,
    double delta, const Grid& grid, const LeviQuadrature& quad, int N,
    const Vec& source, double lag, Exec exec) {
  LambdaSensitivity out;
  LeviEngine e0(family(lambda0), grid, source, 0.0, quad, exec);
  std::vector<double> g0 = e0.gamma_grid(N, lag);
  out.sup_gamma = sup_abs(g0);
  LeviEngine ep(family(lambda0 + delta), grid, source, 0.0, quad, exec);
  LeviEngine em(family(lambda0 - delta), grid, source, 0.0, quad, exec);
  std::vector<double> gp = ep.gamma_grid(N, lag);
  std::vector<double> gm = em.gamma_grid(N, lag);
  double m = 0.0;
  for (std::size_t i = 0; i < gp.size(); ++i)
    m = std::max(m, std::abs(gp[i] - gm[i]) / (2.0 * delta));
  out.sup_derivative = m;
  out.ratio = out.sup_gamma > 0 ? m / out.sup_gamma : 0.0;
  return out;
}

GridKernel truncate_periodic_kernel(
    LeviEngine& eng, int N, const std::vector<double>& lags,
    const std::function<double(double)>& kappa,
    const std::function<double(const Vec&, int)>& phi) {
  const Grid& grid = eng.grid();
  int d = grid.d;
  FrozenData fz = evaluate_frozen(eng.field(), eng.source(), eng.tau());
  GridKernel k = gamma_truncated(eng, N, lags);
  k.policy += ";kappa-phi-truncated;layer-images-wrapped";
  for (std::size_t li = 0; li < lags.size(); ++li) {
    double lag = lags[li];
    double kap = kappa(lag);
    std::vector<double>& vals = k.values[li];
    for_each(grid.cells(), Exec::parallel, [&](std::size_t idx) {
      if (kap == 0.0) {
        vals[idx] = 0.0;
        return;
      }
      Vec x = grid.point(idx);
      Vec u{};
      for (int i = 0; i < d; ++i) u[i] = wrap_unit(x[i] - eng.source()[i]);
      double z0_torus =
          frozen_gaussian(fz, x, eng.tau() + lag, Periodisation::images);
      double layers = vals[idx] - z0_torus;
      // phi-weighted image sum of the nu=0 part
      double z0phi = 0.0;
      std::array<int, max_dim> im{};
      for (int i = 0; i < d; ++i) im[i] = -1;
      while (true) {
        Vec v = u;
        for (int i = 0; i < d; ++i) v[i] += im[i];
        double w = phi(v, d);
        if (w != 0.0) {
          double q = quad_form(fz.A_inv, v);
          z0phi += w * fz.C * std::pow(lag, -0.5 * d) * std::exp(-q / (4.0 * lag));
        }
        int c = 0;
        while (c < d && ++im[c] > 1) im[c++] = -1;
        if (c == d) break;
      }
      vals[idx] = kap * (z0phi + layers);
    });
  }
  return k;
}

}  // namespace px
