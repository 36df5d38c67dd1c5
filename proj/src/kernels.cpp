#include "px/kernels.hpp"

#include <cmath>

namespace px {

Theta1D theta_sum_1d(double y, double beta, double tol) {
  Theta1D th;
  double reach = std::sqrt(std::log(1.0 / tol) / beta);
  int kmax = static_cast<int>(std::ceil(reach + std::abs(y)));
  for (int k = -kmax; k <= kmax; ++k) {
    double u = y + k;
    double e = std::exp(-beta * u * u);
    th.val += e;
    th.d1 += -2.0 * beta * u * e;
    th.d2 += (4.0 * beta * beta * u * u - 2.0 * beta) * e;
  }
  return th;
}

int image_window(double lam_max, double s, double tol) {
  double r = std::sqrt(std::max(0.0, 4.0 * lam_max * s * std::log(1.0 / tol)));
  return static_cast<int>(std::ceil(r + 0.5));
}

namespace {

bool is_diag(const Mat& m) {
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

GaussEval single_image(const FrozenData& src, const Vec& y, double s) {
  GaussEval g;
  g.d2z.d = src.d;
  double q = quad_form(src.A_inv, y);
  double pref = src.C * std::pow(s, -0.5 * src.d);
  double z = pref * std::exp(-q / (4.0 * s));
  Vec By = mat_vec(src.A_inv, y);
  g.z = z;
  for (int i = 0; i < src.d; ++i) g.dz[i] = -z * By[i] / (2.0 * s);
  for (int i = 0; i < src.d; ++i)
    for (int j = 0; j < src.d; ++j)
      g.d2z(i, j) =
          z * (By[i] * By[j] / (4.0 * s * s) - src.A_inv(i, j) / (2.0 * s));
  return g;
}

GaussEval eval_periodised(const FrozenData& src, const Vec& x, double t,
                          Periodisation per) {
  if (!(t > src.t)) throw TimeOrder("frozen gaussian needs t > tau");
  double s = t - src.t;
  Vec y{};
  for (int i = 0; i < src.d; ++i) y[i] = x[i] - src.x[i];
  if (per != Periodisation::none) y = nearest_image(y, src.d);
  if (per != Periodisation::images) return single_image(src, y, s);

  if (is_diag(src.A_inv)) {
    // Product of 1-D lattice sums.
    GaussEval g;
    g.d2z.d = src.d;
    double pref = src.C * std::pow(s, -0.5 * src.d);
    Theta1D th[max_dim];
    for (int i = 0; i < src.d; ++i)
      th[i] = theta_sum_1d(y[i], src.A_inv(i, i) / (4.0 * s));
    double prod = 1.0;
    for (int i = 0; i < src.d; ++i) prod *= th[i].val;
    g.z = pref * prod;
    for (int i = 0; i < src.d; ++i) {
      double p = th[i].d1;
      for (int j = 0; j < src.d; ++j)
        if (j != i) p *= th[j].val;
      g.dz[i] = pref * p;
    }
    for (int i = 0; i < src.d; ++i)
      for (int j = 0; j < src.d; ++j) {
        double p;
        if (i == j) {
          p = th[i].d2;
          for (int k = 0; k < src.d; ++k)
            if (k != i) p *= th[k].val;
        } else {
          p = th[i].d1 * th[j].d1;
          for (int k = 0; k < src.d; ++k)
            if (k != i && k != j) p *= th[k].val;
        }
        g.d2z(i, j) = pref * p;
      }
    return g;
  }

  double lam0, lam1;
  eigen_range_sym(src.A, lam0, lam1);
  int K = image_window(lam1, s);
  GaussEval g;
  g.d2z.d = src.d;
  std::array<int, max_dim> k{};
  int dims = src.d;
  std::array<int, max_dim> idx{};
  for (int i = 0; i < dims; ++i) idx[i] = -K;
  while (true) {
    Vec yk = y;
    for (int i = 0; i < dims; ++i) yk[i] += idx[i];
    GaussEval s1 = single_image(src, yk, s);
    g.z += s1.z;
    for (int i = 0; i < dims; ++i) g.dz[i] += s1.dz[i];
    for (int i = 0; i < dims; ++i)
      for (int j = 0; j < dims; ++j) g.d2z(i, j) += s1.d2z(i, j);
    int c = 0;
    while (c < dims && ++idx[c] > K) idx[c++] = -K;
    if (c == dims) break;
  }
  (void)k;
  return g;
}

}  // namespace

double frozen_gaussian(const FrozenData& src, const Vec& x, double t,
                       Periodisation per) {
  return eval_periodised(src, x, t, per).z;
}

GaussEval frozen_gaussian_derivs(const FrozenData& src, const Vec& x, double t,
                                 Periodisation per) {
  return eval_periodised(src, x, t, per);
}

double apply_L_to_Z(const CoefficientField& field, const FrozenData& src,
                    const Vec& x, double t, Periodisation per) {
  GaussEval g = eval_periodised(src, x, t, per);
  Mat ax = field.eval_a(x, t);
  Vec bx = field.eval_b(x, t);
  double cx = field.eval_c(x, t);
  double r = cx * g.z;
  for (int i = 0; i < field.d; ++i) {
    r += bx[i] * g.dz[i];
    for (int j = 0; j < field.d; ++j)
      r += (ax(i, j) - src.A(i, j)) * g.d2z(i, j);
  }
  return r;
}

double adjoint_gaussian(const FrozenData& base, const Vec& eta, double tau) {
  if (!(base.t > tau)) throw TimeOrder("adjoint gaussian needs tau < t");
  double s = base.t - tau;
  Vec y{};
  for (int i = 0; i < base.d; ++i) y[i] = eta[i] - base.x[i];
  double q = quad_form(base.A_inv, y);
  return base.C * std::pow(s, -0.5 * base.d) * std::exp(-q / (4.0 * s));
}

GradientSplit gradient_split_Z0(const CoefficientField& field, const Vec& eta,
                                double tau, const Vec& x, double t) {
  if (!(t > tau)) throw TimeOrder("gradient_split_Z0 needs tau < t");
  GradientSplit r;
  FrozenData base = evaluate_frozen(field, x, t);
  double s = t - tau;
  Vec y{};
  for (int i = 0; i < field.d; ++i) y[i] = eta[i] - x[i];
  double z = adjoint_gaussian(base, eta, tau);
  Vec By = mat_vec(base.A_inv, y);

  for (int i = 0; i < field.d; ++i) {
    // d_i A and the induced d_i A^{-1} = -A^{-1} (d_i A) A^{-1}
    Mat dA;
    dA.d = field.d;
    for (int p = 0; p < field.d; ++p)
      for (int q = 0; q < field.d; ++q)
        dA(p, q) = field.eval_da(i, p, q, x, t);
    Mat dAinv;
    dAinv.d = field.d;
    for (int p = 0; p < field.d; ++p)
      for (int q = 0; q < field.d; ++q) {
        double v = 0.0;
        for (int l = 0; l < field.d; ++l)
          for (int m = 0; m < field.d; ++m)
            v += base.A_inv(p, l) * dA(l, m) * base.A_inv(m, q);
        dAinv(p, q) = -v;
      }
    double dlogC = 0.0;  // -1/2 tr(A^{-1} d_i A)
    for (int p = 0; p < field.d; ++p)
      for (int q = 0; q < field.d; ++q)
        dlogC -= 0.5 * base.A_inv(p, q) * dA(q, p);

    r.leading[i] = z * By[i] / (2.0 * s);
    r.remainder[i] = z * (dlogC - quad_form(dAinv, y) / (4.0 * s));
    r.full[i] = r.leading[i] + r.remainder[i];
  }
  return r;
}

}  // namespace px
