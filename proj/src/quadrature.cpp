#include "px/quadrature.hpp"

#include <cmath>

namespace px {

QuadNodes gauss_legendre(int n, double a, double b) {
  QuadNodes q;
  q.x.resize(n);
  q.w.resize(n);
  // Newton iteration on P_n, Chebyshev initial guesses.
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.x[i] = 0.5 * (b - a) * (-x) + 0.5 * (a + b);
    q.w[i] = (b - a) / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

QuadNodes graded_both_ends(int n_half, double a, double b) {
  QuadNodes q;
  double mid = 0.5 * (a + b);
  double h = mid - a;
  QuadNodes u = gauss_legendre(n_half, 0.0, 1.0);
  // left half: s = a + h u^2, ds = 2 h u du
  for (std::size_t i = 0; i < u.size(); ++i) {
    q.x.push_back(a + h * u.x[i] * u.x[i]);
    q.w.push_back(2.0 * h * u.x[i] * u.w[i]);
  }
  // right half: s = b - h u^2
  for (std::size_t i = 0; i < u.size(); ++i) {
    q.x.push_back(b - h * u.x[i] * u.x[i]);
    q.w.push_back(2.0 * h * u.x[i] * u.w[i]);
  }
  return q;
}

QuadNodes graded_left(int n, double a, double b) {
  QuadNodes q;
  double h = b - a;
  QuadNodes u = gauss_legendre(n, 0.0, 1.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    q.x.push_back(a + h * u.x[i] * u.x[i]);
    q.w.push_back(2.0 * h * u.x[i] * u.w[i]);
  }
  return q;
}

QuadNodes graded_geometric(double a, double b, int panels, int nodes_per_panel,
                           double ratio) {
  QuadNodes q;
  double hi = b;
  for (int p = 0; p < panels; ++p) {
    double lo = (p + 1 == panels) ? a : a + (b - a) * std::pow(ratio, p + 1);
    QuadNodes g = gauss_legendre(nodes_per_panel, lo, hi);
    q.x.insert(q.x.end(), g.x.begin(), g.x.end());
    q.w.insert(q.w.end(), g.w.begin(), g.w.end());
    hi = lo;
    if (lo <= a) break;
  }
  return q;
}

double integrate(const QuadNodes& q, const std::function<double(double)>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q.w[i] * f(q.x[i]);
  return s;
}

namespace {
double simpson(const std::function<double(double)>& f, double a, double fa,
               double b, double fb, double m, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adapt(const std::function<double(double)>& f, double a, double fa,
             double b, double fb, double m, double fm, double whole,
             double tol, int depth) {
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(f, a, fa, m, fm, lm, flm);
  double right = simpson(f, m, fm, b, fb, rm, frm);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth) {
  double m = 0.5 * (a + b);
  double fa = f(a), fb = f(b), fm = f(m);
  double whole = simpson(f, a, fa, b, fb, m, fm);
  return adapt(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

}  // namespace px
