#include "px/gauss1.hpp"

#include <cmath>

namespace px {

std::vector<double> hermite_factor(int n, double s) {
  // P_0 = 1, P_{n+1} = P_n' - w/(2s) P_n
  std::vector<double> p{1.0};
  for (int k = 0; k < n; ++k) {
    std::vector<double> q(p.size() + 1, 0.0);
    for (std::size_t j = 1; j < p.size(); ++j) q[j - 1] += j * p[j];
    for (std::size_t j = 0; j < p.size(); ++j) q[j + 1] -= p[j] / (2.0 * s);
    p = std::move(q);
  }
  return p;
}

Gauss1 Gauss1::kernel(double s, int deriv_order) {
  Gauss1 g;
  g.s = s;
  g.c.assign(deriv_order + 1, 0.0);
  g.c[deriv_order] = 1.0;
  return g;
}

Gauss1 Gauss1::convolve(const Gauss1& other) const {
  Gauss1 r;
  r.s = s + other.s;
  r.c.assign(c.size() + other.c.size() - 1, 0.0);
  for (std::size_t n = 0; n < c.size(); ++n)
    for (std::size_t m = 0; m < other.c.size(); ++m)
      r.c[n + m] += c[n] * other.c[m];
  return r;
}

Gauss1 Gauss1::derivative(int order) const {
  Gauss1 r;
  r.s = s;
  r.c.assign(c.size() + order, 0.0);
  for (std::size_t n = 0; n < c.size(); ++n) r.c[n + order] = c[n];
  return r;
}

Gauss1 Gauss1::multiply(const Gauss1& other) const {
  // poly form of each factor
  auto poly_of = [](const Gauss1& g) {
    std::vector<double> p;
    for (std::size_t n = 0; n < g.c.size(); ++n) {
      if (g.c[n] == 0.0) continue;
      std::vector<double> pn = hermite_factor(static_cast<int>(n), g.s);
      if (p.size() < pn.size()) p.resize(pn.size(), 0.0);
      for (std::size_t j = 0; j < pn.size(); ++j) p[j] += g.c[n] * pn[j];
    }
    if (p.empty()) p.assign(1, 0.0);
    return p;
  };
  std::vector<double> pa = poly_of(*this), pb = poly_of(other);
  std::vector<double> q(pa.size() + pb.size() - 1, 0.0);
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pb.size(); ++j) q[i + j] += pa[i] * pb[j];

  Gauss1 r;
  r.s = s * other.s / (s + other.s);
  // G_s G_t = (4 pi (s+t))^{-1/2} G_mu
  double K = std::pow(4.0 * M_PI * (s + other.s), -0.5);

  // express q(w) G_mu(w) = sum_k e_k G^{(k)}_mu: triangular solve, highest
  // degree first (deg P_k = k, leading coeff (-1/(2 mu))^k)
  std::vector<double> e(q.size(), 0.0);
  std::vector<double> residual = q;
  for (int k = static_cast<int>(q.size()) - 1; k >= 0; --k) {
    std::vector<double> pk = hermite_factor(k, r.s);
    double lead = pk[k];
    double coef = residual[k] / lead;
    e[k] = coef;
    for (std::size_t j = 0; j < pk.size(); ++j) residual[j] -= coef * pk[j];
  }
  for (double& v : e) v *= K;
  r.c = std::move(e);
  return r;
}

double Gauss1::integral() const { return c.empty() ? 0.0 : c[0]; }

double Gauss1::value_at_zero() const {
  double g0 = std::pow(4.0 * M_PI * s, -0.5);
  double acc = 0.0;
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (c[n] == 0.0) continue;
    std::vector<double> pn = hermite_factor(static_cast<int>(n), s);
    acc += c[n] * pn[0];
  }
  return acc * g0;
}

}  // namespace px
