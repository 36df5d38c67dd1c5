#pragma once

#include <functional>
#include <string>
#include <vector>

#include "px/coefficients.hpp"
#include "px/common.hpp"
#include "px/noise.hpp"

namespace px {

enum class EquationTag {
  gpam_noise,     // g-PAM, noise-square pairing (spatial white noise, d=2)
  gpam_gradient,  // g-PAM, gradient-square pairing
  phi4_2,         // phi^4 cherry, d=2 (space-time noise)
  phi43_cherry,   // phi^4 cherry, d=3
  phi43_sunset,   // phi^4 second-order diagram, d=3
  kpz_cherry,     // KPZ gradient cherry, d=1
  kpz_log_pair    // the two 5-kernel-edge log diagrams, d=1, combined
};
std::string to_string(EquationTag tag);

enum class CtScheme { heat_kernel, covariant, flat };
std::string to_string(CtScheme scheme);

/// Shared quadrature context: kappa integrals, the time-autocorrelation
/// psi = phi_t * phi_t, the smeared cherry integral F, the eps-independent
/// 1/eps coefficients, the reduced sunset integral, and radial Fourier data
/// for the covariant profile.
class CountertermQuad {
 public:
  explicit CountertermQuad(Bumps bumps);

  const Bumps& bumps() const { return bumps_; }
  double kappa(double t) const { return bumps_.kappa(t); }
  double psi(double u) const;  // support (-2, 2), int = 1

  /// int_0^1 (tau + shift)^{-p} kappa(tau) dtau
  double kappa_int(double p, double shift) const;
  /// int int (sigma + tau + shift)^{-p} kappa(sigma) kappa(tau)
  double kappa2_int(double p, double shift) const;
  /// int int (phi^eps)*2(tau - tau') (2 eps^2 + tau + tau')^{-p} kappa kappa
  double F(double p, double eps) const;
  /// lim eps^{2p-2} F: int int_{u,v>=0} psi(u - v) (2 + u + v)^{-p} du dv
  double alpha_phi(double p) const;
  /// reduced second-order (sunset) time integral S(eps) in dimension d
  double sunset_S(double eps, int d) const;

  /// Fourier transform at radius k of x -> rho(|x|^2) in dimension d
  /// (normalised profile; rho_hat(0) = 1).
  double rho_hat(double k, int d) const;
  /// I_p(beta, eps) = int_0^inf k^p e^{-beta k^2} rho_hat(eps k)^2 dk
  double radial_I(double p, double beta, double eps, int d) const;
  /// covariant cherry time-momentum integral; deriv_pow = number of gradient
  /// edges (0 or 2), spatial_noise selects the g-PAM variants
  double cherry_cov(double eps, int d, bool spatial_noise, int deriv_pow) const;
  double cherry_cov_alpha(int d, int deriv_pow) const;  // 1/eps coefficient

 private:
  Bumps bumps_;
  std::vector<double> psi_tab_;
  double psi_h_ = 0.0;
  std::vector<double> rho_hat_tab_[max_dim + 1];
  double rho_hat_h_ = 0.0, rho_hat_max_ = 0.0;
};

struct CountertermValue {
  double total = 0.0;
  double divergent = 0.0;
  double beta_eps = 0.0;  // total - divergent, by definition
};

// The canonical counterterm functions. `frozen` carries A(x,t); the value
// depends on the coefficient field only through it.
CountertermValue counterterm_gpam_noise(double eps, const FrozenData& frozen,
                                        const CountertermQuad& q,
                                        CtScheme scheme = CtScheme::heat_kernel);
CountertermValue counterterm_gpam_gradient(double eps, const FrozenData& frozen,
                                           const CountertermQuad& q, int i,
                                           int j,
                                           CtScheme scheme = CtScheme::heat_kernel);
CountertermValue counterterm_phi4(double eps, const FrozenData& frozen,
                                  const CountertermQuad& q, int d,
                                  CtScheme scheme = CtScheme::heat_kernel);
CountertermValue counterterm_phi43_sunset(double eps, const FrozenData& frozen,
                                          const CountertermQuad& q,
                                          double alpha_fitted = 0.0);
CountertermValue counterterm_kpz(double eps, const FrozenData& frozen,
                                 const CountertermQuad& q,
                                 CtScheme scheme = CtScheme::heat_kernel);

struct DivergenceFit {
  std::vector<double> eps, xs, values;
  LineFit fit;  // value vs |log eps| (log tags) or 1/eps (1/eps tags)
};
DivergenceFit fit_divergence(EquationTag tag, const FrozenData& frozen,
                             const CountertermQuad& q,
                             const std::vector<double>& ladder,
                             CtScheme scheme = CtScheme::heat_kernel);

// ---------------------------------------------------------------------------
// Graph menu.

enum class GraphShape {
  gpam_cherry,  // 1 kernel edge, 2 mollifier edges
  cherry,       // 2 kernel edges
  sunset,       // 5 kernel edges, sunset-rooted
  eleven,       // 3 kernel edges
  chain5,       // 5 kernel edges, chain-rooted
  ladder6       // 6 kernel edges
};
std::string to_string(GraphShape shape);

struct GraphSpec {
  GraphShape shape = GraphShape::cherry;
  int d = 2;
  bool gradient_edges = false;  // KPZ / gPAM gradient variants
  int di = 0, dj = 0;           // directions for the d>=2 gradient cherry
  bool spatial_noise = false;   // g-PAM style noise vertices
};

/// Frozen graph integral I-ring at the base point. Heat-kernel scheme
/// supports every shape (Gaussian reduction); the covariant scheme the
/// one-loop shapes; UnsupportedGraph otherwise.
double graph_frozen_integral(const GraphSpec& g, double eps,
                             const FrozenData& frozen, CtScheme scheme,
                             const CountertermQuad& q);

struct CovariantGap {
  double I_true = 0.0;
  double I_frozen = 0.0;
  double gap = 0.0;
};
/// Cherry with the true base-point-dependent covariant mollifier versus the
/// frozen one (space-time noise); kernel edges frozen at z*.
CovariantGap covariant_gap_cherry(const CoefficientField& field,
                                  const Vec& xstar, double tstar, double eps,
                                  const CountertermQuad& q,
                                  Exec exec = Exec::parallel);

/// Flat-scheme counterterm: kernel edges frozen at the constant matrix A,
/// mollifier edges an arbitrary compactly supported two-point profile,
/// by windowed quadrature. Depends on the field only through A.
double flat_graph_counterterm(
    const GraphSpec& g, double eps, const Mat& A,
    const std::function<double(const Vec&, double, const Vec&, double)>&
        rho_eps,
    double space_radius, double time_radius, const CountertermQuad& q,
    Exec exec = Exec::parallel);

struct SunsetFit {
  double alpha = 0.0;
  LineFit fit;
};
SunsetFit fit_sunset_alpha(const CountertermQuad& q,
                           const std::vector<double>& ladder);

struct KpzLogPair {
  double combined_coeff = 0.0;  // fitted log slope of (I_5a + 4 I_5b) / a^{-4}
  LineFit fit;
  double slope_sunset = 0.0, slope_chain = 0.0;
  double cancellation_ratio = 0.0;  // |combined| / (|s_a| + 4 |s_b|)
  bool near_cancellation = false;   // soft flag
};
KpzLogPair kpz_log_pair(const FrozenData& frozen, const CountertermQuad& q,
                        const std::vector<double>& ladder);

// ---------------------------------------------------------------------------
// Monte-Carlo probes of the divergent pairings.

struct ProbeStat {
  double estimate = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

/// Empirical second moment of the mollified-and-propagated noise at a probe
/// point: E[xi_eps <1>] for gpam_noise, E[<1>^2] for phi4_2. Kernel chains
/// use the frozen-Gaussian reduction; samples are counter-seeded.
ProbeStat mc_variance_probe(EquationTag tag, double eps,
                            const CoefficientField& field, const Grid& grid,
                            const Vec& x_probe, double t_probe, int nsamples,
                            std::uint64_t seed, const CountertermQuad& q,
                            Exec exec = Exec::parallel);

}  // namespace px
