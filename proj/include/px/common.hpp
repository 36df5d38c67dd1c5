#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace px {

inline constexpr int max_dim = 3;

using Vec = std::array<double, max_dim>;  // first d entries meaningful, rest zero

inline Vec vec1(double x) { return {x, 0.0, 0.0}; }
inline Vec vec2(double x, double y) { return {x, y, 0.0}; }
inline Vec vec3(double x, double y, double z) { return {x, y, z}; }

/// Dense symmetric-capable d x d matrix, d <= 3, row major.
struct Mat {
  int d = 2;
  std::array<double, max_dim * max_dim> v{};

  double& operator()(int i, int j) { return v[i * max_dim + j]; }
  double operator()(int i, int j) const { return v[i * max_dim + j]; }

  static Mat identity(int d) {
    Mat m;
    m.d = d;
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat diag(int d, const Vec& a) {
    Mat m;
    m.d = d;
    for (int i = 0; i < d; ++i) m(i, i) = a[i];
    return m;
  }
};

Mat symmetrise(const Mat& a);
double max_asymmetry(const Mat& a);
double det(const Mat& a);
Mat inverse(const Mat& a);  // cofactor formulas, d <= 3
void eigen_range_sym(const Mat& a, double& lo, double& hi);

inline double quad_form(const Mat& m, const Vec& y) {
  double s = 0.0;
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) s += m(i, j) * y[i] * y[j];
  return s;
}

inline Vec mat_vec(const Mat& m, const Vec& y) {
  Vec r{};
  for (int i = 0; i < m.d; ++i)
    for (int j = 0; j < m.d; ++j) r[i] += m(i, j) * y[j];
  return r;
}

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonPositiveDefinite : Error { using Error::Error; };
struct TimeOrder : Error { using Error::Error; };
struct QuadratureBudgetExceeded : Error { using Error::Error; };
struct UnresolvableEpsilon : Error { using Error::Error; };
struct UnsupportedGraph : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct SolveFailure : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Execution policy. Hot loops come in a serial reference flavour and an
// OpenMP flavour; results must agree bitwise (tests assert this).

enum class Exec { serial, parallel };

template <class F>
inline void for_each(std::size_t n, Exec exec, F&& body) {
  if (exec == Exec::parallel) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      body(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) body(i);
#endif
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
}

/// Recursive pairwise sum; order independent of thread count by construction
/// (always called on a fully materialised array).
double pairwise_sum(const double* v, std::size_t n);
inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), v.size());
}

double sup_abs(const std::vector<double>& v);

void set_threads(int nthreads);
int thread_count();

// ---------------------------------------------------------------------------
// Torus grid, unit cell [0,1)^d, spacing 1/n.

struct Grid {
  int d = 2;
  int n = 64;

  double dx() const { return 1.0 / n; }
  std::size_t cells() const {
    std::size_t c = 1;
    for (int i = 0; i < d; ++i) c *= static_cast<std::size_t>(n);
    return c;
  }
  Vec point(std::size_t idx) const {
    Vec x{};
    for (int i = 0; i < d; ++i) {
      x[i] = static_cast<double>(idx % n) / n;
      idx /= n;
    }
    return x;
  }
  std::array<int, max_dim> coords(std::size_t idx) const {
    std::array<int, max_dim> c{};
    for (int i = 0; i < d; ++i) {
      c[i] = static_cast<int>(idx % n);
      idx /= n;
    }
    return c;
  }
  std::size_t index(const std::array<int, max_dim>& c) const {
    std::size_t idx = 0;
    for (int i = d - 1; i >= 0; --i) {
      int w = ((c[i] % n) + n) % n;
      idx = idx * n + static_cast<std::size_t>(w);
    }
    return idx;
  }
  double cell_volume() const { return std::pow(dx(), d); }
};

/// Nearest-image representative of a displacement on the unit torus.
inline double wrap_unit(double y) { return y - std::round(y); }
inline Vec nearest_image(const Vec& y, int d) {
  Vec r{};
  for (int i = 0; i < d; ++i) r[i] = wrap_unit(y[i]);
  return r;
}

// ---------------------------------------------------------------------------
// Least squares fitting helpers used by the divergence-law and layer-bound
// diagnostics.

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace px
