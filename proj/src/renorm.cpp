#include "px/renorm.hpp"

#include <cmath>

#include "px/gauss1.hpp"
#include "px/kernels.hpp"
#include "px/quadrature.hpp"

namespace px {

std::string to_string(EquationTag tag) {
  switch (tag) {
    case EquationTag::gpam_noise: return "gpam-noise";
    case EquationTag::gpam_gradient: return "gpam-gradient";
    case EquationTag::phi4_2: return "phi4-2";
    case EquationTag::phi43_cherry: return "phi43-cherry";
    case EquationTag::phi43_sunset: return "phi43-sunset";
    case EquationTag::kpz_cherry: return "kpz-cherry";
    case EquationTag::kpz_log_pair: return "kpz-log-pair";
  }
  return "?";
}

std::string to_string(CtScheme scheme) {
  switch (scheme) {
    case CtScheme::heat_kernel: return "heat-kernel";
    case CtScheme::covariant: return "covariant";
    case CtScheme::flat: return "flat";
  }
  return "?";
}

std::string to_string(GraphShape shape) {
  switch (shape) {
    case GraphShape::gpam_cherry: return "gpam-cherry";
    case GraphShape::cherry: return "cherry";
    case GraphShape::sunset: return "sunset";
    case GraphShape::eleven: return "eleven";
    case GraphShape::chain5: return "chain5";
    case GraphShape::ladder6: return "ladder6";
  }
  return "?";
}

// ---------------------------------------------------------------------------

CountertermQuad::CountertermQuad(Bumps bumps) : bumps_(std::move(bumps)) {
  // psi = phi_t * phi_t on [-2,2], tabulated
  int np = 2048;
  psi_h_ = 4.0 / np;
  psi_tab_.resize(np + 1);
  QuadNodes g = gauss_legendre(48, -1.0, 1.0);
  for (int i = 0; i <= np; ++i) {
    double u = -2.0 + i * psi_h_;
    double acc = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
      acc += g.w[k] * bumps_.phi_t(u + g.x[k]) * bumps_.phi_t(g.x[k]);
    psi_tab_[i] = acc;
  }
  // radial Fourier transforms of the covariant profile, u in [0, rho_hat_max]
  rho_hat_max_ = 80.0;
  int nk = 4000;
  rho_hat_h_ = rho_hat_max_ / nk;
  QuadNodes r = gauss_legendre(64, 0.0, 1.0);
  for (int d = 1; d <= max_dim; ++d) {
    rho_hat_tab_[d].resize(nk + 1);
    for (int i = 0; i <= nk; ++i) {
      double k = i * rho_hat_h_;
      double acc = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j) {
        double rr = r.x[j];
        double prof = bumps_.rho(rr * rr, d);
        double w;
        if (d == 1)
          w = 2.0 * std::cos(k * rr);
        else if (d == 2)
          w = 2.0 * M_PI * rr * std::cyl_bessel_j(0.0, k * rr);
        else
          w = 4.0 * M_PI * rr * rr *
              (k * rr < 1e-8 ? 1.0 : std::sin(k * rr) / (k * rr));
        acc += r.w[j] * w * prof;
      }
      rho_hat_tab_[d][i] = acc;
    }
  }
}

double CountertermQuad::psi(double u) const {
  double a = std::abs(u);
  if (a >= 2.0) return 0.0;
  double x = (u + 2.0) / psi_h_;
  std::size_t i = std::min(psi_tab_.size() - 2, static_cast<std::size_t>(x));
  double f = x - i;
  return psi_tab_[i] * (1.0 - f) + psi_tab_[i + 1] * f;
}

double CountertermQuad::rho_hat(double k, int d) const {
  if (k >= rho_hat_max_) return 0.0;
  double x = k / rho_hat_h_;
  std::size_t i =
      std::min(rho_hat_tab_[d].size() - 2, static_cast<std::size_t>(x));
  double f = x - i;
  return rho_hat_tab_[d][i] * (1.0 - f) + rho_hat_tab_[d][i + 1] * f;
}

double CountertermQuad::kappa_int(double p, double shift) const {
  QuadNodes q = graded_geometric(0.0, 1.0, 40, 4, 0.6);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    acc += q.w[i] * std::pow(q.x[i] + shift, -p) * bumps_.kappa(q.x[i]);
  return acc;
}

double CountertermQuad::kappa2_int(double p, double shift) const {
  QuadNodes q = graded_geometric(0.0, 1.0, 30, 4, 0.6);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      acc += q.w[i] * q.w[j] * std::pow(q.x[i] + q.x[j] + shift, -p) *
             bumps_.kappa(q.x[i]) * bumps_.kappa(q.x[j]);
  return acc;
}

double CountertermQuad::F(double p, double eps) const {
  double e2 = eps * eps;
  QuadNodes qt = graded_geometric(0.0, 1.0, 46, 4, 0.62);
  QuadNodes qu = gauss_legendre(10, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < qt.size(); ++i) {
    double tau = qt.x[i];
    double k1 = bumps_.kappa(tau);
    if (k1 == 0.0) continue;
    double inner = 0.0;
    for (std::size_t j = 0; j < qu.size(); ++j) {
      double u = qu.x[j];
      double tau2 = tau - e2 * u;
      double k2 = bumps_.kappa(tau2);
      if (k2 == 0.0) continue;
      inner += qu.w[j] * psi(u) * k2 *
               std::pow(2.0 * e2 + tau + tau2, -p);
    }
    acc += qt.w[i] * k1 * inner;
  }
  return acc;
}

double CountertermQuad::alpha_phi(double p) const {
  // 1/2 int_0^W (2+w)^{-p} Psi(min(w,2)) dw + analytic tail, Psi = cum. psi
  auto Psi = [&](double w) {
    double lim = std::min(w, 2.0);
    QuadNodes g = gauss_legendre(24, -lim, lim);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g.w[i] * psi(g.x[i]);
    return s;
  };
  double W = 600.0;
  QuadNodes q = graded_geometric(0.0, W, 40, 6, 0.55);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    acc += q.w[i] * std::pow(2.0 + q.x[i], -p) * Psi(q.x[i]);
  acc *= 0.5;
  if (p > 1.0) acc += 0.5 * std::pow(2.0 + W, 1.0 - p) / (p - 1.0);
  return acc;
}

double CountertermQuad::sunset_S(double eps, int d) const {
  double e2 = eps * eps;
  QuadNodes qr = graded_geometric(0.0, 1.0, 34, 3, 0.58);
  QuadNodes qt = graded_geometric(0.0, 1.0, 22, 3, 0.55);
  QuadNodes qu = gauss_legendre(6, -2.0, 2.0);
  double p = 0.5 * d;
  std::vector<double> psu(qu.size());
  for (std::size_t a = 0; a < qu.size(); ++a) psu[a] = psi(qu.x[a]);

  double acc = 0.0;
  for (std::size_t ir = 0; ir < qr.size(); ++ir) {
    double r = qr.x[ir];
    double kr = bumps_.kappa(r);
    if (kr == 0.0) continue;
    // inner pair factors share structure: build the list of (s_i, weight_i)
    // for one cherry at this r, then combine the two cherries
    struct Node {
      double s, w;
    };
    std::vector<Node> nodes;
    nodes.reserve(qt.size() * qu.size());
    for (std::size_t it = 0; it < qt.size(); ++it) {
      double tp = qt.x[it];
      double ktp = bumps_.kappa(tp);
      if (ktp == 0.0) continue;
      for (std::size_t a = 0; a < qu.size(); ++a) {
        double tau = r + tp - e2 * qu.x[a];
        double kt = bumps_.kappa(tau);
        if (kt == 0.0) continue;
        double s = tau + tp + 2.0 * e2;
        nodes.push_back({s, qt.w[it] * qu.w[a] * psu[a] * ktp * kt});
      }
    }
    double inner = 0.0;
    for (const Node& n1 : nodes)
      for (const Node& n2 : nodes)
        inner += n1.w * n2.w *
                 std::pow(n1.s * n2.s + r * (n1.s + n2.s), -p);
    acc += qr.w[ir] * kr * inner;
  }
  return acc;
}

double CountertermQuad::radial_I(double p, double beta, double eps,
                                 int d) const {
  // int_0^inf k^p e^{-beta k^2} rho_hat(eps k)^2 dk, substitution u = eps k
  double U = rho_hat_max_;
  QuadNodes q = graded_geometric(0.0, U, 26, 5, 0.5);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double u = q.x[i];
    double rh = rho_hat(u, d);
    acc += q.w[i] * std::pow(u, p) *
           std::exp(-beta * u * u / (eps * eps)) * rh * rh;
  }
  return acc * std::pow(eps, -p - 1.0);
}

double CountertermQuad::cherry_cov(double eps, int d, bool spatial_noise,
                                   int deriv_pow) const {
  double e2 = eps * eps;
  double pk = d - 1 + deriv_pow;
  if (spatial_noise && deriv_pow == 0) {
    QuadNodes qt = graded_geometric(0.0, 1.0, 40, 4, 0.6);
    double acc = 0.0;
    for (std::size_t i = 0; i < qt.size(); ++i)
      acc += qt.w[i] * bumps_.kappa(qt.x[i]) * radial_I(pk, qt.x[i], eps, d);
    return acc;
  }
  if (spatial_noise) {
    QuadNodes qt = graded_geometric(0.0, 1.0, 30, 4, 0.6);
    double acc = 0.0;
    for (std::size_t i = 0; i < qt.size(); ++i)
      for (std::size_t j = 0; j < qt.size(); ++j)
        acc += qt.w[i] * qt.w[j] * bumps_.kappa(qt.x[i]) *
               bumps_.kappa(qt.x[j]) *
               radial_I(pk, qt.x[i] + qt.x[j], eps, d);
    return acc;
  }
  // space-time: psi-smeared
  QuadNodes qt = graded_geometric(0.0, 1.0, 40, 4, 0.62);
  QuadNodes qu = gauss_legendre(8, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < qt.size(); ++i) {
    double tau = qt.x[i];
    double k1 = bumps_.kappa(tau);
    if (k1 == 0.0) continue;
    for (std::size_t j = 0; j < qu.size(); ++j) {
      double tau2 = tau - e2 * qu.x[j];
      double k2 = bumps_.kappa(tau2);
      if (k2 == 0.0) continue;
      acc += qt.w[i] * qu.w[j] * psi(qu.x[j]) * k1 * k2 *
             radial_I(pk, tau + tau2, eps, d);
    }
  }
  return acc;
}

double CountertermQuad::cherry_cov_alpha(int d, int deriv_pow) const {
  // int int_{p,q>=0} psi(p-q) J(p+q) dp dq, J(g) = int u^pk e^{-g u^2} rho_hat^2
  double pk = d - 1 + deriv_pow;
  auto J = [&](double g) {
    QuadNodes q = gauss_legendre(48, 0.0, rho_hat_max_);
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double u = q.x[i];
      double rh = rho_hat(u, d);
      acc += q.w[i] * std::pow(u, pk) * std::exp(-g * u * u) * rh * rh;
    }
    return acc;
  };
  auto Psi = [&](double w) {
    double lim = std::min(w, 2.0);
    QuadNodes g = gauss_legendre(24, -lim, lim);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g.w[i] * psi(g.x[i]);
    return s;
  };
  double W = 500.0;
  QuadNodes q = graded_geometric(1e-9, W, 44, 5, 0.55);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    acc += q.w[i] * J(q.x[i]) * Psi(q.x[i]);
  acc *= 0.5;
  // tail: J(g) ~ Gamma((pk+1)/2)/2 g^{-(pk+1)/2}
  double ex = 0.5 * (pk + 1.0);
  acc += 0.5 * std::tgamma(ex) / 2.0 * std::pow(W, 1.0 - ex) / (ex - 1.0);
  return acc;
}

// ---------------------------------------------------------------------------

CountertermValue counterterm_gpam_noise(double eps, const FrozenData& frozen,
                                        const CountertermQuad& q,
                                        CtScheme scheme) {
  if (!(eps > 0.0 && eps < 0.5)) throw Error("eps must lie in (0, 1/2)");
  int d = frozen.d;
  CountertermValue v;
  if (scheme == CtScheme::heat_kernel) {
    v.total = frozen.C * q.kappa_int(0.5 * d, 2.0 * eps * eps);
  } else if (scheme == CtScheme::covariant) {
    double pref = std::pow(4.0 * M_PI, 0.5 * d) * std::pow(2.0 * M_PI, -d) *
                  (d == 1 ? 2.0 : d == 2 ? 2.0 * M_PI : 4.0 * M_PI);
    v.total = frozen.C * pref * q.cherry_cov(eps, d, true, 0);
  } else {
    throw UnsupportedGraph("flat counterterms go through flat_graph_counterterm");
  }
  v.divergent = 2.0 * frozen.C * std::abs(std::log(eps));
  v.beta_eps = v.total - v.divergent;
  return v;
}

CountertermValue counterterm_gpam_gradient(double eps,
                                           const FrozenData& frozen,
                                           const CountertermQuad& q, int i,
                                           int j, CtScheme scheme) {
  if (!(eps > 0.0 && eps < 0.5)) throw Error("eps must lie in (0, 1/2)");
  int d = frozen.d;
  double aij = frozen.A_inv(i, j);
  CountertermValue v;
  if (scheme == CtScheme::heat_kernel) {
    v.total = aij * frozen.C * 0.5 * q.kappa2_int(0.5 * d + 1.0, 2.0 * eps * eps);
  } else if (scheme == CtScheme::covariant) {
    double pref = std::pow(4.0 * M_PI, 0.5 * d) * std::pow(2.0 * M_PI, -d) *
                  (d == 1 ? 2.0 : d == 2 ? 2.0 * M_PI : 4.0 * M_PI) / d;
    v.total = aij * frozen.C * pref * q.cherry_cov(eps, d, true, 2);
  } else {
    throw UnsupportedGraph("flat counterterms go through flat_graph_counterterm");
  }
  v.divergent = aij * frozen.C * std::abs(std::log(eps));
  v.beta_eps = v.total - v.divergent;
  return v;
}

CountertermValue counterterm_phi4(double eps, const FrozenData& frozen,
                                  const CountertermQuad& q, int d,
                                  CtScheme scheme) {
  if (!(eps > 0.0 && eps < 0.5)) throw Error("eps must lie in (0, 1/2)");
  if (d != 2 && d != 3) throw Error("phi4 counterterm needs d in {2,3}");
  CountertermValue v;
  if (scheme == CtScheme::heat_kernel) {
    v.total = frozen.C * q.F(0.5 * d, eps);
  } else if (scheme == CtScheme::covariant) {
    double pref = std::pow(4.0 * M_PI, 0.5 * d) * std::pow(2.0 * M_PI, -d) *
                  (d == 2 ? 2.0 * M_PI : 4.0 * M_PI);
    v.total = frozen.C * pref * q.cherry_cov(eps, d, false, 0);
  } else {
    throw UnsupportedGraph("flat counterterms go through flat_graph_counterterm");
  }
  if (d == 2) {
    v.divergent = frozen.C * std::abs(std::log(eps));
  } else if (scheme == CtScheme::heat_kernel) {
    v.divergent = frozen.C * q.alpha_phi(1.5) / eps;
  } else {
    double pref = std::pow(4.0 * M_PI, 1.5) * std::pow(2.0 * M_PI, -3) * 4.0 * M_PI;
    v.divergent = frozen.C * pref * q.cherry_cov_alpha(3, 0) / eps;
  }
  v.beta_eps = v.total - v.divergent;
  return v;
}

CountertermValue counterterm_phi43_sunset(double eps, const FrozenData& frozen,
                                          const CountertermQuad& q,
                                          double alpha_fitted) {
  if (!(eps > 0.0 && eps < 0.5)) throw Error("eps must lie in (0, 1/2)");
  CountertermValue v;
  double C2 = frozen.C * frozen.C;
  v.total = C2 * q.sunset_S(eps, 3);
  v.divergent = alpha_fitted * C2 * std::abs(std::log(eps));
  v.beta_eps = v.total - v.divergent;
  return v;
}

CountertermValue counterterm_kpz(double eps, const FrozenData& frozen,
                                 const CountertermQuad& q, CtScheme scheme) {
  if (!(eps > 0.0 && eps < 0.5)) throw Error("eps must lie in (0, 1/2)");
  if (frozen.d != 1) throw Error("kpz counterterm is d=1");
  double a = frozen.A(0, 0);
  double am32 = std::pow(a, -1.5);
  CountertermValue v;
  if (scheme == CtScheme::heat_kernel) {
    v.total = am32 * std::pow(4.0 * M_PI, -0.5) * 0.5 * q.F(1.5, eps);
    v.divergent = am32 * std::pow(4.0 * M_PI, -0.5) * 0.5 * q.alpha_phi(1.5) / eps;
  } else if (scheme == CtScheme::covariant) {
    // a^{-1} C * (2 pi)^{-1} * 2 * int int kappa kappa psi_eps I_2
    v.total = am32 * std::pow(4.0 * M_PI, -0.5) * (4.0 * M_PI) /
              (2.0 * M_PI) * q.cherry_cov(eps, 1, false, 2);
    v.divergent = am32 * std::pow(4.0 * M_PI, -0.5) * (4.0 * M_PI) /
                  (2.0 * M_PI) * q.cherry_cov_alpha(1, 2) / eps;
  } else {
    throw UnsupportedGraph("flat counterterms go through flat_graph_counterterm");
  }
  v.beta_eps = v.total - v.divergent;
  return v;
}

DivergenceFit fit_divergence(EquationTag tag, const FrozenData& frozen,
                             const CountertermQuad& q,
                             const std::vector<double>& ladder,
                             CtScheme scheme) {
  DivergenceFit out;
  bool inv_eps =
      (tag == EquationTag::phi43_cherry || tag == EquationTag::kpz_cherry);
  for (double e : ladder) {
    double val = 0.0;
    switch (tag) {
      case EquationTag::gpam_noise:
        val = counterterm_gpam_noise(e, frozen, q, scheme).total;
        break;
      case EquationTag::gpam_gradient:
        val = counterterm_gpam_gradient(e, frozen, q, 0, 0, scheme).total;
        break;
      case EquationTag::phi4_2:
        val = counterterm_phi4(e, frozen, q, 2, scheme).total;
        break;
      case EquationTag::phi43_cherry:
        val = counterterm_phi4(e, frozen, q, 3, scheme).total;
        break;
      case EquationTag::phi43_sunset:
        val = counterterm_phi43_sunset(e, frozen, q).total;
        break;
      case EquationTag::kpz_cherry:
        val = counterterm_kpz(e, frozen, q, scheme).total;
        break;
      case EquationTag::kpz_log_pair:
        throw Error("use kpz_log_pair() for the combined log diagrams");
    }
    out.eps.push_back(e);
    out.xs.push_back(inv_eps ? 1.0 / e : std::abs(std::log(e)));
    out.values.push_back(val);
  }
  out.fit = fit_line(out.xs, out.values);
  return out;
}

// ---------------------------------------------------------------------------
// Graph evaluators.

namespace {

// eleven diagram, heat scheme: C * E3, with
// E3 = int int kappa(a) kappa(c) int psi(u) kappa(a + c - e2 u)
//      (2a + 2c - e2 u + 2 e2)^{-d/2} du da dc
double eleven_heat(const CountertermQuad& q, double eps, int d) {
  double e2 = eps * eps;
  QuadNodes qa = graded_geometric(0.0, 1.0, 26, 3, 0.58);
  QuadNodes qu = gauss_legendre(8, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < qa.size(); ++i) {
    double a = qa.x[i];
    double ka = q.kappa(a);
    if (ka == 0.0) continue;
    for (std::size_t j = 0; j < qa.size(); ++j) {
      double c = qa.x[j];
      double kc = q.kappa(c);
      if (kc == 0.0) continue;
      double inner = 0.0;
      for (std::size_t k = 0; k < qu.size(); ++k) {
        double u = qu.x[k];
        double b = a + c - e2 * u;
        double kb = q.kappa(b);
        if (kb == 0.0) continue;
        inner += qu.w[k] * q.psi(u) * kb *
                 std::pow(a + c + b + 2.0 * e2, -0.5 * d);
      }
      acc += qa.w[i] * qa.w[j] * ka * kc * inner;
    }
  }
  return acc;
}

Gauss1 flip(const Gauss1& g) {
  Gauss1 r = g;
  for (std::size_t n = 1; n < r.c.size(); n += 2) r.c[n] = -r.c[n];
  return r;
}

// 5-kernel-edge diagrams in d=1 via the Gaussian chain calculus; grad=false
// gives the plain variant (cross-checks the closed sunset reduction).
double sunset5_d1(const CountertermQuad& q, double eps, bool grad) {
  double e2 = eps * eps;
  int o = grad ? 1 : 0;
  QuadNodes qT = graded_geometric(0.0, 1.0, 22, 3, 0.55);
  QuadNodes qA = graded_geometric(0.0, 1.0, 18, 3, 0.55);
  QuadNodes qu = gauss_legendre(6, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t iT = 0; iT < qT.size(); ++iT) {
    double tT = qT.x[iT];
    double kT = q.kappa(tT);
    if (kT == 0.0) continue;
    // arm factor list: (width, weight), arm = tl side or tr side
    struct Node {
      double w1, w2, wt;  // kernel gaps tau_l, tau_tl and weight
    };
    std::vector<Node> arm;
    for (std::size_t ia = 0; ia < qA.size(); ++ia) {
      double ttl = qA.x[ia];
      double kt = q.kappa(ttl);
      if (kt == 0.0) continue;
      for (std::size_t iu = 0; iu < qu.size(); ++iu) {
        double tl = tT + ttl + e2 * qu.x[iu];
        double kl = q.kappa(tl);
        if (kl == 0.0) continue;
        arm.push_back({tl, ttl, qA.w[ia] * qu.w[iu] * q.psi(qu.x[iu]) * kt * kl});
      }
    }
    double inner = 0.0;
    for (const Node& n1 : arm) {
      Gauss1 B1 = Gauss1::kernel(n1.w1 + n1.w2 + 2.0 * e2, 2 * o);
      for (const Node& n2 : arm) {
        Gauss1 B2 = Gauss1::kernel(n2.w1 + n2.w2 + 2.0 * e2, 2 * o);
        Gauss1 m = B1.multiply(B2).multiply(Gauss1::kernel(tT, 0));
        inner += n1.wt * n2.wt * m.integral();
      }
    }
    acc += qT.w[iT] * kT * inner;
  }
  return acc;
}

// chain-rooted 5-edge diagram (d=1). Gaps: t1 (star->mid), t2 (mid->right),
// t3 (mid->top, plain trunk), t4 (top->tl), t5 (top->tr); pairings pin
// t1 + t3 + t4 ~ eps^2 and t2 - t3 - t5 ~ eps^2.
double chain5_d1(const CountertermQuad& q, double eps, bool grad) {
  double e2 = eps * eps;
  int o = grad ? 1 : 0;
  QuadNodes qp = gauss_legendre(5, 0.0, 2.0);  // scaled pinched gaps
  QuadNodes q5 = graded_geometric(0.0, 1.0, 22, 3, 0.55);
  QuadNodes qv = gauss_legendre(6, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t i1 = 0; i1 < qp.size(); ++i1) {
    double p1 = qp.x[i1];
    for (std::size_t i3 = 0; i3 < qp.size(); ++i3) {
      double p3 = qp.x[i3];
      for (std::size_t i4 = 0; i4 < qp.size(); ++i4) {
        double p4 = qp.x[i4];
        double u = p1 + p3 + p4;
        double pu = q.psi(u);
        if (pu == 0.0) continue;
        double t1 = e2 * p1, t3 = e2 * p3, t4 = e2 * p4;
        double k134 = q.kappa(t1) * q.kappa(t3) * q.kappa(t4);
        if (k134 == 0.0) continue;
        Gauss1 g1 = Gauss1::kernel(t4 + 2.0 * e2, o);  // (top,star) arm
        for (std::size_t i5 = 0; i5 < q5.size(); ++i5) {
          double t5 = q5.x[i5];
          double k5 = q.kappa(t5);
          if (k5 == 0.0) continue;
          for (std::size_t iv = 0; iv < qv.size(); ++iv) {
            double t2 = t3 + t5 - e2 * qv.x[iv];
            double k2 = q.kappa(t2);
            if (k2 == 0.0) continue;
            Gauss1 g2 = Gauss1::kernel(t5 + 2.0 * e2, o);  // (top,right) arm
            Gauss1 g3 = Gauss1::kernel(t2, o).convolve(flip(g2));
            Gauss1 g4 = Gauss1::kernel(t3, 0).multiply(g3);
            Gauss1 whole = Gauss1::kernel(t1, o).convolve(g4).convolve(g1);
            double w = qp.w[i1] * qp.w[i3] * qp.w[i4] * q5.w[i5] * qv.w[iv];
            acc += w * pu * q.psi(qv.x[iv]) * k134 * k5 * k2 *
                   whole.value_at_zero() * e2 * e2 * e2;
          }
        }
      }
    }
  }
  return acc;
}

// ladder diagram with two rungs (d=1), all kernel edges of order o.
double ladder6_d1(const CountertermQuad& q, double eps, bool grad) {
  double e2 = eps * eps;
  int o = grad ? 1 : 0;
  QuadNodes ql = graded_geometric(0.0, 1.0, 14, 3, 0.5);
  QuadNodes qd = gauss_legendre(5, -2.0, 2.0);  // scaled delta = (tr - tl)/e2
  QuadNodes qu = gauss_legendre(5, -2.0, 2.0);
  double acc = 0.0;
  for (std::size_t il = 0; il < ql.size(); ++il) {
    double tl = ql.x[il];
    double kl = q.kappa(tl);
    if (kl == 0.0) continue;
    for (std::size_t id = 0; id < qd.size(); ++id) {
      double delta = e2 * qd.x[id];
      double tr = tl + delta;
      double kr = q.kappa(tr);
      if (kr == 0.0) continue;
      for (std::size_t iml = 0; iml < ql.size(); ++iml) {
        double tml = ql.x[iml];
        double kml = q.kappa(tml);
        if (kml == 0.0) continue;
        for (std::size_t ittl = 0; ittl < ql.size(); ++ittl) {
          double ttl = ql.x[ittl];
          double kttl = q.kappa(ttl);
          if (kttl == 0.0) continue;
          for (std::size_t iu = 0; iu < qu.size(); ++iu) {
            // psi arg u: t_ml - t_mr = -delta + (tmr - tml) => tmr = tml + delta - e2 u ...
            double tmr = tml - delta + e2 * qu.x[iu];
            double kmr = q.kappa(tmr);
            if (kmr == 0.0) continue;
            for (std::size_t iv = 0; iv < qu.size(); ++iv) {
              double ttr = ttl - delta + e2 * qu.x[iv];
              double kttr = q.kappa(ttr);
              if (kttr == 0.0) continue;
              Gauss1 h1 = Gauss1::kernel(tml, o)
                              .convolve(Gauss1::kernel(2.0 * e2, 0))
                              .convolve(flip(Gauss1::kernel(tmr, o)));
              Gauss1 h2 = Gauss1::kernel(ttl, o)
                              .convolve(Gauss1::kernel(2.0 * e2, 0))
                              .convolve(flip(Gauss1::kernel(ttr, o)));
              Gauss1 h3 = h1.multiply(h2);
              Gauss1 whole = Gauss1::kernel(tl, o)
                                 .convolve(h3)
                                 .convolve(flip(Gauss1::kernel(tr, o)));
              double w = ql.w[il] * qd.w[id] * ql.w[iml] * ql.w[ittl] *
                         qu.w[iu] * qu.w[iv];
              acc += w * q.psi(qu.x[iu]) * q.psi(qu.x[iv]) * kl * kr * kml *
                     kttl * kmr * kttr * whole.value_at_zero() * e2 * e2 * e2;
            }
          }
        }
      }
    }
  }
  return acc;
}

}  // namespace

double graph_frozen_integral(const GraphSpec& g, double eps,
                             const FrozenData& frozen, CtScheme scheme,
                             const CountertermQuad& q) {
  if (scheme == CtScheme::flat)
    throw UnsupportedGraph("flat scheme goes through flat_graph_counterterm");
  bool cov = scheme == CtScheme::covariant;
  int d = g.d;
  double e2 = eps * eps;
  switch (g.shape) {
    case GraphShape::gpam_cherry: {
      if (g.gradient_edges)
        throw UnsupportedGraph("gpam-cherry has a single plain kernel edge");
      if (!cov) return frozen.C * q.kappa_int(0.5 * d, 2.0 * e2);
      double pref = std::pow(4.0 * M_PI, 0.5 * d) * std::pow(2.0 * M_PI, -d) *
                    (d == 1 ? 2.0 : d == 2 ? 2.0 * M_PI : 4.0 * M_PI);
      return frozen.C * pref * q.cherry_cov(eps, d, true, 0);
    }
    case GraphShape::cherry: {
      if (g.spatial_noise && g.gradient_edges)
        return counterterm_gpam_gradient(eps, frozen, q, g.di, g.dj,
                                         cov ? CtScheme::covariant
                                             : CtScheme::heat_kernel)
            .total;
      if (g.spatial_noise) {
        if (cov) throw UnsupportedGraph("covariant spatial plain cherry not wired");
        return frozen.C * q.kappa2_int(0.5 * d, 2.0 * e2);
      }
      if (g.gradient_edges) {
        double aij = frozen.A_inv(g.di, g.dj);
        if (!cov) return aij * frozen.C * 0.5 * q.F(0.5 * d + 1.0, eps);
        double pref = std::pow(4.0 * M_PI, 0.5 * d) * std::pow(2.0 * M_PI, -d) *
                      (d == 1 ? 2.0 : d == 2 ? 2.0 * M_PI : 4.0 * M_PI) / d;
        return aij * frozen.C * pref * q.cherry_cov(eps, d, false, 2);
      }
      return counterterm_phi4(eps, frozen, q, d,
                              cov ? CtScheme::covariant : CtScheme::heat_kernel)
          .total;
    }
    case GraphShape::eleven: {
      if (cov) throw UnsupportedGraph("covariant eleven not wired");
      if (g.gradient_edges) return 0.0;  // odd in the loop momentum
      return frozen.C * eleven_heat(q, eps, d);
    }
    case GraphShape::sunset: {
      if (cov) throw UnsupportedGraph("covariant multi-loop shapes not wired");
      if (g.gradient_edges) {
        if (d != 1) throw UnsupportedGraph("gradient sunset wired for d=1");
        double a = frozen.A(0, 0);
        return std::pow(a, -3.0) * sunset5_d1(q, eps, true);
      }
      return frozen.C * frozen.C * q.sunset_S(eps, d);
    }
    case GraphShape::chain5: {
      if (cov) throw UnsupportedGraph("covariant multi-loop shapes not wired");
      if (d != 1) throw UnsupportedGraph("chain5 wired for d=1");
      double a = frozen.A(0, 0);
      return std::pow(a, -3.0) * chain5_d1(q, eps, g.gradient_edges);
    }
    case GraphShape::ladder6: {
      if (cov) throw UnsupportedGraph("covariant multi-loop shapes not wired");
      if (d != 1) throw UnsupportedGraph("ladder6 wired for d=1");
      double a = frozen.A(0, 0);
      return std::pow(a, -4.0) * ladder6_d1(q, eps, g.gradient_edges);
    }
  }
  throw UnsupportedGraph("unknown graph shape");
}

SunsetFit fit_sunset_alpha(const CountertermQuad& q,
                           const std::vector<double>& ladder) {
  SunsetFit f;
  std::vector<double> xs, ys;
  for (double e : ladder) {
    xs.push_back(std::abs(std::log(e)));
    ys.push_back(q.sunset_S(e, 3));
  }
  f.fit = fit_line(xs, ys);
  f.alpha = f.fit.slope;
  return f;
}

// ---------------------------------------------------------------------------

namespace {

// space-time quadrature nodes for the noise-vertex integral around the base
// point: times graded into t_star, radius graded into 0.
struct NoiseVertexNodes {
  std::vector<double> t, wt;      // t3 values and weights
  std::vector<double> r, wr;      // radial values and weights (weight excl. r^{d-1})
  std::vector<double> ang;        // angles (d=2)
};

NoiseVertexNodes make_z3_nodes(int d, double eps, double lam1, double t_star,
                               double extra_t) {
  NoiseVertexNodes nv;
  double e2 = eps * eps;
  // band around t_star (where the mollifier time window lives), then graded
  QuadNodes band = gauss_legendre(8, -2.0 * e2, 2.0 * e2);
  for (std::size_t i = 0; i < band.size(); ++i) {
    nv.t.push_back(t_star - band.x[i]);
    nv.wt.push_back(band.w[i]);
  }
  QuadNodes far = graded_geometric(2.0 * e2, 1.0 + extra_t, 30, 3, 0.6);
  for (std::size_t i = 0; i < far.size(); ++i) {
    nv.t.push_back(t_star - far.x[i]);
    nv.wt.push_back(far.w[i]);
  }
  double rmax = std::sqrt(4.0 * lam1 * (1.0 + extra_t) * std::log(1e8)) +
                2.0 * eps;
  QuadNodes rad = graded_geometric(0.0, rmax, 30, 3, 0.6);
  nv.r = rad.x;
  nv.wr = rad.w;
  int nang = d == 2 ? 16 : (d == 3 ? 0 : 2);
  for (int a = 0; a < nang; ++a) nv.ang.push_back(2.0 * M_PI * a / nang);
  return nv;
}

}  // namespace

CovariantGap covariant_gap_cherry(const CoefficientField& field,
                                  const Vec& xstar, double tstar, double eps,
                                  const CountertermQuad& q, Exec exec) {
  int d = field.d;
  if (d > 2) throw UnsupportedGraph("covariant gap wired for d <= 2");
  FrozenData fstar = evaluate_frozen(field, xstar, tstar);
  EllipticityRange er = check_ellipticity(field, 64, 1, 1.0);
  double e2 = eps * eps;
  const Bumps& bumps = q.bumps();

  NoiseVertexNodes nv = make_z3_nodes(d, eps, er.lambda1, tstar, e2);
  double urad = eps * std::sqrt(er.lambda1) * 1.001;
  QuadNodes ur = gauss_legendre(8, 0.0, urad);
  int nuang = d == 2 ? 12 : 2;
  QuadNodes t1n = gauss_legendre(6, -1.0, 1.0);  // scaled phi窓 handled below
  double s_small = 0.25 * (urad / 8.0) * (urad / 8.0) / er.lambda1;

  // Phi(z3) for both profiles in one pass
  auto phi_pair = [&](const Vec& x3, double t3, double& out_true,
                      double& out_frozen) {
    double acc_t = 0.0, acc_f = 0.0;
    for (std::size_t it = 0; it < t1n.size(); ++it) {
      double t1 = t3 + e2 * t1n.x[it];
      double kap = bumps.kappa(tstar - t1);
      if (kap == 0.0) continue;
      double phieps = bumps.phi_t(t1n.x[it]);  // phi^eps(t1-t3) de2 folded below
      if (phieps == 0.0) continue;
      double s = tstar - t1;
      double ht = 0.0, hf = 0.0;
      Vec y{};
      for (int i = 0; i < d; ++i) y[i] = xstar[i] - x3[i];
      if (s < s_small) {
        FrozenData fz1 = evaluate_frozen(field, xstar, t1);
        double r_t = quad_form(fz1.A_inv, y) / e2;
        double r_f = quad_form(fstar.A_inv, y) / e2;
        double pref_t = std::pow(eps, -d) / std::sqrt(fz1.detA);
        double pref_f = std::pow(eps, -d) / std::sqrt(fstar.detA);
        ht = r_t < 1.0 ? pref_t * bumps.rho(r_t, d) : 0.0;
        hf = r_f < 1.0 ? pref_f * bumps.rho(r_f, d) : 0.0;
      } else {
        for (std::size_t iur = 0; iur < ur.size(); ++iur) {
          double rr = ur.x[iur];
          for (int ia = 0; ia < nuang; ++ia) {
            Vec u{};
            if (d == 2) {
              double th = 2.0 * M_PI * ia / nuang;
              u[0] = rr * std::cos(th);
              u[1] = rr * std::sin(th);
            } else {
              u[0] = ia == 0 ? rr : -rr;
            }
            double meas = ur.w[iur] *
                          (d == 2 ? rr * (2.0 * M_PI / nuang) : 0.5);
            Vec yu{};
            for (int i = 0; i < d; ++i) yu[i] = y[i] - u[i];
            double gk = fstar.C * std::pow(s, -0.5 * d) *
                        std::exp(-quad_form(fstar.A_inv, yu) / (4.0 * s));
            Vec x1{};
            for (int i = 0; i < d; ++i) x1[i] = x3[i] + u[i];
            FrozenData fz1 = evaluate_frozen(field, x1, t1);
            double r_t = quad_form(fz1.A_inv, u) / e2;
            if (r_t < 1.0)
              ht += meas * gk * std::pow(eps, -d) / std::sqrt(fz1.detA) *
                    bumps.rho(r_t, d);
            double r_f = quad_form(fstar.A_inv, u) / e2;
            if (r_f < 1.0)
              hf += meas * gk * std::pow(eps, -d) / std::sqrt(fstar.detA) *
                    bumps.rho(r_f, d);
          }
        }
      }
      // dt1 = e2 du, phi^eps = phi_t(u)/e2: factors cancel
      acc_t += t1n.w[it] * phieps * kap * ht;
      acc_f += t1n.w[it] * phieps * kap * hf;
    }
    out_true = acc_t;
    out_frozen = acc_f;
  };

  std::size_t nt = nv.t.size(), nr = nv.r.size();
  std::size_t nang = std::max<std::size_t>(1, nv.ang.size());
  std::vector<double> acc_true(nt * nr * nang, 0.0), acc_frozen(nt * nr * nang, 0.0);
  for_each(nt * nr * nang, exec, [&](std::size_t idx) {
    std::size_t it = idx / (nr * nang);
    std::size_t irr = (idx / nang) % nr;
    std::size_t ia = idx % nang;
    double t3 = nv.t[it];
    double rr = nv.r[irr];
    Vec x3 = xstar;
    double meas;
    if (d == 2) {
      x3[0] += rr * std::cos(nv.ang[ia]);
      x3[1] += rr * std::sin(nv.ang[ia]);
      meas = nv.wt[it] * nv.wr[irr] * rr * (2.0 * M_PI / nang);
    } else {
      x3[0] += (ia == 0 ? rr : -rr);
      meas = nv.wt[it] * nv.wr[irr] * (nang == 1 ? 2.0 : 1.0);
    }
    double pt, pf;
    phi_pair(x3, t3, pt, pf);
    acc_true[idx] = meas * pt * pt;
    acc_frozen[idx] = meas * pf * pf;
  });
  CovariantGap out;
  out.I_true = pairwise_sum(acc_true);
  out.I_frozen = pairwise_sum(acc_frozen);
  out.gap = std::abs(out.I_true - out.I_frozen);
  return out;
}

double flat_graph_counterterm(
    const GraphSpec& g, double eps, const Mat& A,
    const std::function<double(const Vec&, double, const Vec&, double)>&
        rho_eps,
    double space_radius, double time_radius, const CountertermQuad& q,
    Exec exec) {
  if (g.shape != GraphShape::cherry && g.shape != GraphShape::gpam_cherry)
    throw UnsupportedGraph("flat scheme wired for the one-loop cherries");
  if (g.gradient_edges)
    throw UnsupportedGraph("flat gradient edges not wired");
  int d = g.d;
  FrozenData frozen = frozen_from_matrix(A);
  double lam0, lam1;
  eigen_range_sym(A, lam0, lam1);
  const Bumps& bumps = q.bumps();
  const double tstar = 0.0;
  bool spatial = g.shape == GraphShape::gpam_cherry;

  // J(z3) = int dz1 C w_A(t*-t1; x*-x1) kappa(t*-t1) rho_eps(z1, z3), x* = 0
  QuadNodes t1n = gauss_legendre(6, -1.0, 1.0);
  QuadNodes x1n = gauss_legendre(8, -1.0, 1.0);
  auto J = [&](const Vec& x3, double t3) {
    double acc = 0.0;
    for (std::size_t it = 0; it < t1n.size(); ++it) {
      double t1 = t3 + time_radius * t1n.x[it];
      double wtime = time_radius * t1n.w[it];
      double s = tstar - t1;
      double kap = bumps.kappa(s);
      if (kap == 0.0) continue;
      double inner = 0.0;
      int nx = static_cast<int>(x1n.size());
      std::array<int, max_dim> cnt{};
      while (true) {
        Vec x1 = x3;
        double wsp = 1.0;
        for (int i = 0; i < d; ++i) {
          x1[i] += space_radius * x1n.x[cnt[i]];
          wsp *= space_radius * x1n.w[cnt[i]];
        }
        double w = rho_eps(x1, t1, x3, t3);
        if (w != 0.0) {
          double gk = frozen.C * std::pow(s, -0.5 * d) *
                      std::exp(-quad_form(frozen.A_inv, x1) / (4.0 * s));
          inner += wsp * gk * w;
        }
        int c = 0;
        while (c < d && ++cnt[c] >= nx) cnt[c++] = 0;
        if (c == d) break;
      }
      acc += wtime * kap * inner;
    }
    return acc;
  };

  if (spatial) {
    // g-PAM: I = int deta J_sp(eta) rho_eps(z*, eta),
    // J_sp(eta) = int dz1 C w kappa rho_eps(z1, eta)
    NoiseVertexNodes nv = make_z3_nodes(d, eps, lam1, tstar, 0.0);
    QuadNodes tke = graded_geometric(0.0, 1.0, 26, 3, 0.6);
    std::size_t nr = nv.r.size();
    std::size_t nang = std::max<std::size_t>(1, nv.ang.size());
    std::vector<double> acc(nr * nang, 0.0);
    for_each(nr * nang, exec, [&](std::size_t idx) {
      std::size_t irr = idx / nang, ia = idx % nang;
      double rr = nv.r[irr];
      Vec eta{};
      double meas;
      if (d == 2) {
        eta[0] = rr * std::cos(nv.ang[ia]);
        eta[1] = rr * std::sin(nv.ang[ia]);
        meas = nv.wr[irr] * rr * (2.0 * M_PI / nang);
      } else {
        eta[0] = (ia == 0 ? rr : -rr);
        meas = nv.wr[irr] * (nang == 1 ? 2.0 : 1.0);
      }
      double w0 = rho_eps(Vec{}, tstar, eta, 0.0);
      if (w0 == 0.0) {
        acc[idx] = 0.0;
        return;
      }
      double jsp = 0.0;
      for (std::size_t it = 0; it < tke.size(); ++it) {
        double s = tke.x[it];
        double kap = bumps.kappa(s);
        if (kap == 0.0) continue;
        double inner = 0.0;
        int nx = static_cast<int>(x1n.size());
        std::array<int, max_dim> cnt{};
        while (true) {
          Vec x1 = eta;
          double wsp = 1.0;
          for (int i = 0; i < d; ++i) {
            x1[i] += space_radius * x1n.x[cnt[i]];
            wsp *= space_radius * x1n.w[cnt[i]];
          }
          double w = rho_eps(x1, tstar - s, eta, 0.0);
          if (w != 0.0) {
            double gk = frozen.C * std::pow(s, -0.5 * d) *
                        std::exp(-quad_form(frozen.A_inv, x1) / (4.0 * s));
            inner += wsp * gk * w;
          }
          int c = 0;
          while (c < d && ++cnt[c] >= nx) cnt[c++] = 0;
          if (c == d) break;
        }
        jsp += tke.w[it] * kap * inner;
      }
      acc[idx] = meas * w0 * jsp;
    });
    return pairwise_sum(acc);
  }

  NoiseVertexNodes nv = make_z3_nodes(d, eps, lam1, tstar, time_radius);
  std::size_t nt = nv.t.size(), nr = nv.r.size();
  std::size_t nang = std::max<std::size_t>(1, nv.ang.size());
  std::vector<double> acc(nt * nr * nang, 0.0);
  for_each(nt * nr * nang, exec, [&](std::size_t idx) {
    std::size_t it = idx / (nr * nang);
    std::size_t irr = (idx / nang) % nr;
    std::size_t ia = idx % nang;
    double t3 = nv.t[it];
    double rr = nv.r[irr];
    Vec x3{};
    double meas;
    if (d == 2) {
      x3[0] = rr * std::cos(nv.ang[ia]);
      x3[1] = rr * std::sin(nv.ang[ia]);
      meas = nv.wt[it] * nv.wr[irr] * rr * (2.0 * M_PI / nang);
    } else {
      x3[0] = (ia == 0 ? rr : -rr);
      meas = nv.wt[it] * nv.wr[irr] * (nang == 1 ? 2.0 : 1.0);
    }
    double j = J(x3, t3);
    acc[idx] = meas * j * j;
  });
  return pairwise_sum(acc);
}

ProbeStat mc_variance_probe(EquationTag tag, double eps,
                            const CoefficientField& field, const Grid& grid,
                            const Vec& x_probe, double t_probe, int nsamples,
                            std::uint64_t seed, const CountertermQuad& q,
                            Exec exec) {
  if (nsamples < 100) throw Error("mc_variance_probe needs N >= 100");
  int d = grid.d;
  double e2 = eps * eps;
  const Bumps& bumps = q.bumps();
  std::size_t cells = grid.cells();
  double cv = grid.cell_volume();

  if (tag == EquationTag::gpam_noise) {
    std::vector<double> W1(cells), W2(cells);
    QuadNodes tk = graded_geometric(0.0, 1.0, 30, 4, 0.6);
    for_each(cells, exec, [&](std::size_t i) {
      Vec eta = grid.point(i);
      FrozenData fz = evaluate_frozen(field, eta, t_probe);
      Vec u{};
      for (int k = 0; k < d; ++k) u[k] = wrap_unit(x_probe[k] - eta[k]);
      double phicut = bumps.phi_partition(u, d);
      double quad_u = quad_form(fz.A_inv, u);
      W1[i] = fz.C * std::pow(e2, -0.5 * d) * std::exp(-quad_u / (4.0 * e2));
      double acc = 0.0;
      for (std::size_t j = 0; j < tk.size(); ++j) {
        double s = tk.x[j] + e2;
        acc += tk.w[j] * bumps.kappa(tk.x[j]) * fz.C *
               std::pow(s, -0.5 * d) * std::exp(-quad_u / (4.0 * s));
      }
      W2[i] = phicut * acc;
    });
    std::vector<double> est(nsamples);
    double sqcv = std::sqrt(cv);
    for_each(static_cast<std::size_t>(nsamples), exec, [&](std::size_t s) {
      double v1 = 0.0, v2 = 0.0;
      for (std::size_t i = 0; i < cells; ++i) {
        double z = counter_normal(seed, s, i) * sqcv;
        v1 += W1[i] * z;
        v2 += W2[i] * z;
      }
      est[s] = v1 * v2;
    });
    ProbeStat ps;
    ps.samples = nsamples;
    ps.estimate = pairwise_sum(est) / nsamples;
    double var = 0.0;
    for (double e : est) var += (e - ps.estimate) * (e - ps.estimate);
    ps.std_error = std::sqrt(var / nsamples / (nsamples - 1.0));
    return ps;
  }

  if (tag != EquationTag::phi4_2)
    throw Error("mc_variance_probe wired for gpam-noise and phi4-2");

  // space-time probe: W(eta, sigma_k)
  double dt = 0.5 * e2;
  int m = static_cast<int>(std::ceil((1.0 + 4.0 * e2) / dt)) + 1;
  double t0 = t_probe - 1.0 - 2.0 * e2;
  std::size_t dof = cells * static_cast<std::size_t>(m);
  std::vector<double> W(dof);
  QuadNodes tu = gauss_legendre(6, -1.0, 1.0);
  for_each(dof, exec, [&](std::size_t idx) {
    std::size_t i = idx % cells;
    int k = static_cast<int>(idx / cells);
    double sigma = t0 + k * dt;
    Vec eta = grid.point(i);
    FrozenData fz = evaluate_frozen(field, eta, sigma);
    Vec u{};
    for (int c = 0; c < d; ++c) u[c] = wrap_unit(x_probe[c] - eta[c]);
    double phicut = bumps.phi_partition(u, d);
    if (phicut == 0.0) {
      W[idx] = 0.0;
      return;
    }
    double quad_u = quad_form(fz.A_inv, u);
    double acc = 0.0;
    for (std::size_t j = 0; j < tu.size(); ++j) {
      double tau = sigma + e2 * tu.x[j];
      double kap = bumps.kappa(t_probe - tau);
      if (kap == 0.0) continue;
      double s = t_probe - tau + e2;
      acc += tu.w[j] * bumps.phi_t(tu.x[j]) * kap * fz.C *
             std::pow(s, -0.5 * d) * std::exp(-quad_u / (4.0 * s));
    }
    W[idx] = phicut * acc;  // dt1 = e2 du against phi^eps = phi_t(u)/e2
  });
  std::vector<double> est(nsamples);
  double sq = std::sqrt(cv * dt);
  for_each(static_cast<std::size_t>(nsamples), exec, [&](std::size_t s) {
    double v = 0.0;
    for (std::size_t i = 0; i < dof; ++i) {
      if (W[i] == 0.0) continue;
      v += W[i] * counter_normal(seed, s, i) * sq;
    }
    est[s] = v * v;
  });
  ProbeStat ps;
  ps.samples = nsamples;
  ps.estimate = pairwise_sum(est) / nsamples;
  double var = 0.0;
  for (double e : est) var += (e - ps.estimate) * (e - ps.estimate);
  ps.std_error = std::sqrt(var / nsamples / (nsamples - 1.0));
  return ps;
}

KpzLogPair kpz_log_pair(const FrozenData& frozen, const CountertermQuad& q,
                        const std::vector<double>& ladder) {
  KpzLogPair out;
  double a = frozen.A(0, 0);
  double am3 = std::pow(a, -3.0);
  double am4 = std::pow(a, -4.0);
  std::vector<double> xs, comb, va, vb;
  for (double e : ladder) {
    double ia = am3 * sunset5_d1(q, e, true);
    double ib = am3 * chain5_d1(q, e, true);
    xs.push_back(std::abs(std::log(e)));
    va.push_back(ia);
    vb.push_back(ib);
    comb.push_back((ia + 4.0 * ib) / am4);
  }
  out.fit = fit_line(xs, comb);
  out.combined_coeff = out.fit.slope;
  out.slope_sunset = fit_line(xs, va).slope;
  out.slope_chain = fit_line(xs, vb).slope;
  double denom = std::abs(out.slope_sunset) + 4.0 * std::abs(out.slope_chain);
  out.cancellation_ratio =
      denom > 0 ? std::abs(out.slope_sunset + 4.0 * out.slope_chain) / denom
                : 0.0;
  out.near_cancellation = out.cancellation_ratio < 0.2;
  return out;
}

}  // namespace px
