#pragma once

// Univariate and bivariate standard-normal probabilities.
//
// Bounds are extended reals: +/-infinity are legal arguments everywhere and
// short-circuit to the univariate CDF (or to 0/1). NaN arguments raise
// ErrorCode::invalid_argument.

#include <array>
#include <cstdint>
#include <limits>

namespace ovrp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double std_normal_cdf(double x);
double std_normal_pdf(double x);

/// Inverse of std_normal_cdf on (0,1) (Wichura AS241, ~1e-16 relative).
/// Returns -inf / +inf at 0 / 1.
double std_normal_quantile(double p);

/// Half-open rectangle (lo1, hi1] x (lo2, hi2].
struct RectBounds {
  double lo1 = -kInf;
  double hi1 = kInf;
  double lo2 = -kInf;
  double hi2 = kInf;
};

/// Bivariate normal CDF for a fixed correlation.
///
/// Uses Genz's Gauss-Legendre rendition of the Drezner-Wesolowsky method:
/// 6/12/20 nodes for |rho| < 0.3 / 0.75 / 1, and the asymptotic
/// reformulation for |rho| >= 0.925. Node-dependent trigonometric terms are
/// precomputed once per correlation, so a likelihood evaluation builds one
/// kernel and reuses it for every cell. |rho| = 1 uses the degenerate closed
/// forms: Phi(min(a,b)) for rho = 1 and max(0, Phi(a) - Phi(-b)) for rho = -1.
class BvnKernel {
 public:
  explicit BvnKernel(double rho);

  double rho() const { return rho_; }

  /// P(X <= a, Y <= b). With `flip` the correlation is taken as -rho,
  /// which lets callers reflect one axis without building a second kernel.
  double cdf(double a, double b, bool flip = false) const;

  /// P(X > h, Y > k), same `flip` convention.
  double upper(double h, double k, bool flip = false) const;

 private:
  double upper_finite(double h, double k, bool flip) const;

  static constexpr int kMaxNodes = 20;

  double rho_;
  double abs_rho_;
  int n_nodes_ = 0;
  std::array<double, kMaxNodes> weight_{};
  // |rho| < 0.925: sin(theta_i) and 1 - sin^2(theta_i) along the arc.
  std::array<double, kMaxNodes> sn_{};
  std::array<double, kMaxNodes> cos2_{};
  // |rho| >= 0.925: abscissae on the rescaled interval.
  std::array<double, kMaxNodes> xs_{};
  std::array<double, kMaxNodes> rs_{};
  double half_arc_ = 0.0;
  double one_minus_rho2_ = 0.0;
  double sqrt_one_minus_rho2_ = 0.0;
};

/// P(X <= a, Y <= b) for standard normals with correlation rho in [-1, 1].
double bvn_cdf(double a, double b, double rho);

/// Probability of the rectangle by inclusion-exclusion of four CDF values.
/// Each axis is reflected to the side of zero where the rectangle lives
/// (flipping the correlation sign as needed) to limit cancellation.
/// Results in (-1e-12, 0) are clamped to zero and counted; anything more
/// negative raises ErrorCode::internal_error.
double rect_prob(const RectBounds& bounds, double rho);
double rect_prob(const RectBounds& bounds, const BvnKernel& kernel);

/// Number of negative-mass clamps performed since process start.
std::uint64_t numeric_warning_count();

/// Shared by every caller that clamps a tiny negative probability mass.
double clamp_probability(double p);

}  // namespace ovrp
