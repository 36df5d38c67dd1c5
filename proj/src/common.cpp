#include "px/common.hpp"

#include <algorithm>

namespace px {

Mat symmetrise(const Mat& a) {
  Mat s = a;
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

double max_asymmetry(const Mat& a) {
  double m = 0.0;
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j) m = std::max(m, std::abs(a(i, j) - a(j, i)));
  return m;
}

double det(const Mat& a) {
  switch (a.d) {
    case 1:
      return a(0, 0);
    case 2:
      return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    default:
      return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
             a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
             a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  }
}

Mat inverse(const Mat& a) {
  double dt = det(a);
  if (dt == 0.0) throw NonPositiveDefinite("singular matrix in inverse()");
  Mat r;
  r.d = a.d;
  switch (a.d) {
    case 1:
      r(0, 0) = 1.0 / dt;
      break;
    case 2:
      r(0, 0) = a(1, 1) / dt;
      r(1, 1) = a(0, 0) / dt;
      r(0, 1) = -a(0, 1) / dt;
      r(1, 0) = -a(1, 0) / dt;
      break;
    default: {
      auto cof = [&](int i, int j) {
        int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
        int j1 = (j + 1) % 3, j2 = (j + 2) % 3;
        return a(i1, j1) * a(i2, j2) - a(i1, j2) * a(i2, j1);
      };
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = cof(j, i) / dt;
    }
  }
  return r;
}

// Symmetric eigenvalue range via the characteristic polynomial (d <= 2) or
// cyclic Jacobi iterations (d = 3).
void eigen_range_sym(const Mat& a, double& lo, double& hi) {
  if (a.d == 1) {
    lo = hi = a(0, 0);
    return;
  }
  if (a.d == 2) {
    double tr = a(0, 0) + a(1, 1);
    double dt = det(a);
    double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - dt));
    lo = 0.5 * tr - disc;
    hi = 0.5 * tr + disc;
    return;
  }
  Mat m = a;
  for (int sweep = 0; sweep < 32; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) off += m(p, q) * m(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(m(p, q)) < 1e-300) continue;
        double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        Mat r = m;
        for (int k = 0; k < 3; ++k) {
          r(p, k) = c * m(p, k) - s * m(q, k);
          r(q, k) = s * m(p, k) + c * m(q, k);
        }
        m = r;
        Mat r2 = m;
        for (int k = 0; k < 3; ++k) {
          r2(k, p) = c * m(k, p) - s * m(k, q);
          r2(k, q) = s * m(k, p) + c * m(k, q);
        }
        m = r2;
      }
  }
  lo = hi = m(0, 0);
  for (int i = 1; i < 3; ++i) {
    lo = std::min(lo, m(i, i));
    hi = std::max(hi, m(i, i));
  }
}

double pairwise_sum(const double* v, std::size_t n) {
  if (n < 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void set_threads(int nthreads) {
#if defined(_OPENMP)
  if (nthreads > 0) omp_set_num_threads(nthreads);
#else
  (void)nthreads;
#endif
}

int thread_count() {
#if defined(_OPENMP)
  int n = 1;
#pragma omp parallel
  {
#pragma omp single
    n = omp_get_num_threads();
  }
  return n;
#else
  return 1;
#endif
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  std::size_t n = x.size();
  if (n < 2 || y.size() != n) return f;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace px
