#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace px {

struct QuadNodes {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

/// Gauss-Legendre nodes on [a,b].
QuadNodes gauss_legendre(int n, double a, double b);

/// Nodes for an integral over [a,b] whose integrand has integrable power
/// singularities (of type (s-a)^{-1/2}, (b-s)^{-1/2}) at one or both ends.
/// The interval is split at the midpoint and the substitution s = a + h*u^2
/// (mirrored on the right half) is applied, so Gauss-Legendre in u sees a
/// smooth integrand.
QuadNodes graded_both_ends(int n_half, double a, double b);
QuadNodes graded_left(int n, double a, double b);

/// Geometrically graded composite Gauss panels on [a,b], refining toward a:
/// panel edges a + (b-a)*r^k. Used for the counterterm time integrals where
/// the integrand behaves like s^{-p} down to a cutoff scale.
QuadNodes graded_geometric(double a, double b, int panels, int nodes_per_panel,
                           double ratio = 0.5);

double integrate(const QuadNodes& q, const std::function<double(double)>& f);

/// Adaptive Simpson on [a,b] (plain smooth integrands: profile
/// normalisations, convolution cross checks).
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol = 1e-10, int max_depth = 24);

}  // namespace px
