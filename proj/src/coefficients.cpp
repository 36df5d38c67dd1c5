#include "px/coefficients.hpp"

#include <cmath>
#include <sstream>

namespace px {

Mat CoefficientField::eval_a(const Vec& x, double t) const {
  return symmetrise(a(x, t));
}

Vec CoefficientField::eval_b(const Vec& x, double t) const {
  return b ? b(x, t) : Vec{};
}

double CoefficientField::eval_c(const Vec& x, double t) const {
  return c ? c(x, t) : 0.0;
}

double CoefficientField::eval_da(int k, int i, int j, const Vec& x,
                                 double t) const {
  if (da) return da(k, i, j, x, t);
  Vec xp = x, xm = x;
  xp[k] += h_fd;
  xm[k] -= h_fd;
  return (eval_a(xp, t)(i, j) - eval_a(xm, t)(i, j)) / (2.0 * h_fd);
}

FrozenData evaluate_frozen(const CoefficientField& field, const Vec& x,
                           double t) {
  FrozenData f;
  f.d = field.d;
  f.x = x;
  f.t = t;
  f.A = field.eval_a(x, t);
  double lo, hi;
  eigen_range_sym(f.A, lo, hi);
  if (lo <= 0.0) {
    std::ostringstream os;
    os << "a(z) has eigenvalue " << lo << " <= 0 at x=(" << x[0];
    for (int i = 1; i < field.d; ++i) os << "," << x[i];
    os << "), t=" << t;
    throw NonPositiveDefinite(os.str());
  }
  f.detA = det(f.A);
  f.A_inv = inverse(f.A);
  f.C = std::pow(4.0 * M_PI, -0.5 * field.d) / std::sqrt(f.detA);
  return f;
}

FrozenData frozen_from_matrix(const Mat& A) {
  FrozenData f;
  f.d = A.d;
  f.A = symmetrise(A);
  double lo, hi;
  eigen_range_sym(f.A, lo, hi);
  if (lo <= 0.0) throw NonPositiveDefinite("constant matrix not positive definite");
  f.detA = det(f.A);
  f.A_inv = inverse(f.A);
  f.C = std::pow(4.0 * M_PI, -0.5 * A.d) / std::sqrt(f.detA);
  return f;
}

double inverse_metric(const FrozenData& frozen, const Vec& zeta) {
  return quad_form(frozen.A_inv, zeta);
}

EllipticityRange check_ellipticity(const CoefficientField& field, int n_space,
                                   int n_time, double t_max) {
  if (n_space < 1 || n_time < 1)
    throw Error("check_ellipticity: empty sample lattice");
  Grid g{field.d, n_space};
  EllipticityRange r{1e300, -1e300};
  int nt = field.time_dependent ? n_time : 1;
  for (int it = 0; it < nt; ++it) {
    double t = nt == 1 ? 0.0 : t_max * it / (nt - 1);
    for (std::size_t idx = 0; idx < g.cells(); ++idx) {
      Vec x = g.point(idx);
      Mat A = field.eval_a(x, t);
      double lo, hi;
      eigen_range_sym(A, lo, hi);
      if (lo <= 0.0) {
        std::ostringstream os;
        os << "non-positive-definite a at x=(" << x[0];
        for (int i = 1; i < field.d; ++i) os << "," << x[i];
        os << "), t=" << t << " (eigenvalue " << lo << ")";
        throw NonPositiveDefinite(os.str());
      }
      r.lambda0 = std::min(r.lambda0, lo);
      r.lambda1 = std::max(r.lambda1, hi);
    }
  }
  return r;
}

CoefficientDerivatives coefficient_derivatives(const CoefficientField& field,
                                               const Vec& x, double t) {
  CoefficientDerivatives r;
  int d = field.d;
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) r.da[k][i][j] = field.eval_da(k, i, j, x, t);

  double h = field.h_fd;
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    Vec bp = field.eval_b(xp, t), bm = field.eval_b(xm, t);
    for (int i = 0; i < d; ++i) r.db[j][i] = (bp[i] - bm[i]) / (2.0 * h);
  }
  for (int i = 0; i < d; ++i) r.div_b += r.db[i][i];

  // sum_ij d_i d_j a_ij from the closed-form first derivatives when present,
  // else second differences of a.
  double dd = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (field.da) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        dd += (field.da(j, i, j, xp, t) - field.da(j, i, j, xm, t)) / (2.0 * h);
      } else if (i == j) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        dd += (field.eval_a(xp, t)(i, i) - 2.0 * field.eval_a(x, t)(i, i) +
               field.eval_a(xm, t)(i, i)) /
              (h * h);
      } else {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[i] += h; xpp[j] += h;
        xpm[i] += h; xpm[j] -= h;
        xmp[i] -= h; xmp[j] += h;
        xmm[i] -= h; xmm[j] -= h;
        dd += (field.eval_a(xpp, t)(i, j) - field.eval_a(xpm, t)(i, j) -
               field.eval_a(xmp, t)(i, j) + field.eval_a(xmm, t)(i, j)) /
              (4.0 * h * h);
      }
    }
  r.dd_a_contract = dd;

  Vec b = field.eval_b(x, t);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += r.da[j][i][j];
    r.b_star[i] = -b[i] + 2.0 * s;
  }
  r.c_star = field.eval_c(x, t) - r.div_b + r.dd_a_contract;
  return r;
}

CoefficientField adjoint_field(const CoefficientField& field, double t_ref) {
  CoefficientField adj;
  adj.d = field.d;
  adj.name = field.name + "*";
  adj.time_dependent = field.time_dependent;
  adj.diagonal = field.diagonal;
  adj.h_fd = field.h_fd;
  CoefficientField base = field;  // copy captured by value
  adj.a = [base, t_ref](const Vec& x, double s) {
    return base.eval_a(x, t_ref - s);
  };
  adj.b = [base, t_ref](const Vec& x, double s) {
    return coefficient_derivatives(base, x, t_ref - s).b_star;
  };
  adj.c = [base, t_ref](const Vec& x, double s) {
    return coefficient_derivatives(base, x, t_ref - s).c_star;
  };
  if (base.da)
    adj.da = [base, t_ref](int k, int i, int j, const Vec& x, double s) {
      return base.da(k, i, j, x, t_ref - s);
    };
  return adj;
}

CoefficientField make_field(const std::string& name, int d,
                            const std::map<std::string, double>& params) {
  auto get = [&](const std::string& key, double def) {
    auto it = params.find(key);
    return it == params.end() ? def : it->second;
  };
  CoefficientField f;
  f.d = d;
  f.name = name;

  if (name == "identity") {
    f.a = [d](const Vec&, double) { return Mat::identity(d); };
    f.da = [](int, int, int, const Vec&, double) { return 0.0; };
  } else if (name == "diag-sine") {
    double amp = get("amp", 0.5);
    f.a = [d, amp](const Vec& x, double) {
      Mat m = Mat::identity(d);
      m(0, 0) = 1.0 + amp * std::sin(2.0 * M_PI * x[0]);
      return m;
    };
    f.da = [amp](int k, int i, int j, const Vec& x, double) {
      if (k == 0 && i == 0 && j == 0)
        return amp * 2.0 * M_PI * std::cos(2.0 * M_PI * x[0]);
      return 0.0;
    };
  } else if (name == "rotated-anisotropic") {
    if (d != 2) throw ConfigError("rotated-anisotropic is a d=2 field");
    double angle = get("angle", M_PI / 6.0);
    double ratio = get("ratio", 4.0);
    double cs = std::cos(angle), sn = std::sin(angle);
    Mat m;
    m.d = 2;
    m(0, 0) = cs * cs * ratio + sn * sn;
    m(1, 1) = sn * sn * ratio + cs * cs;
    m(0, 1) = m(1, 0) = cs * sn * (ratio - 1.0);
    f.diagonal = false;
    f.a = [m](const Vec&, double) { return m; };
    f.da = [](int, int, int, const Vec&, double) { return 0.0; };
  } else if (name == "checkerboard-smooth") {
    double amp = get("amp", 0.25);
    f.a = [d, amp](const Vec& x, double) {
      double s = 1.0 + amp * std::sin(2.0 * M_PI * x[0]) *
                           std::sin(2.0 * M_PI * (d > 1 ? x[1] : x[0]));
      Mat m = Mat::identity(d);
      for (int i = 0; i < d; ++i) m(i, i) = s;
      return m;
    };
  } else if (name == "const-diag") {
    Vec diag_v{get("a1", 1.0), get("a2", 1.0), get("a3", 1.0)};
    Mat m = Mat::diag(d, diag_v);
    f.a = [m](const Vec&, double) { return m; };
    f.da = [](int, int, int, const Vec&, double) { return 0.0; };
  } else {
    throw ConfigError("unknown coefficient field: " + name);
  }

  Vec b0{get("b1", 0.0), get("b2", 0.0), get("b3", 0.0)};
  bool has_b = b0[0] != 0.0 || b0[1] != 0.0 || b0[2] != 0.0;
  if (has_b) f.b = [b0](const Vec&, double) { return b0; };
  double c0 = get("c0", 0.0);
  if (c0 != 0.0) f.c = [c0](const Vec&, double) { return c0; };
  return f;
}

}  // namespace px
