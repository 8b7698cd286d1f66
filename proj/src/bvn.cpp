#include "ovrp/bvn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "ovrp/error.hpp"

namespace ovrp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNegativeMassLimit = -1e-12;

std::atomic<std::uint64_t> g_clamp_count{0};

void require_not_nan(double v, const char* what) {
  if (std::isnan(v)) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + " is NaN");
  }
}

// Gauss-Legendre half-rules on [-1, 1]: positive abscissae and weights.
constexpr std::array<double, 3> kGl6X = {0.9324695142031522, 0.6612093864662647,
                                         0.2386191860831970};
constexpr std::array<double, 3> kGl6W = {0.1713244923791705, 0.3607615730481384,
                                         0.4679139345726904};
constexpr std::array<double, 6> kGl12X = {0.9815606342467191, 0.9041172563704750,
                                          0.7699026741943050, 0.5873179542866171,
                                          0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 6> kGl12W = {0.04717533638651177, 0.1069393259953183,
                                          0.1600783285433464,  0.2031674267230659,
                                          0.2334925365383547,  0.2491470458134029};
constexpr std::array<double, 10> kGl20X = {
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
    0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
    0.2277858511416451, 0.07652652113349733};
constexpr std::array<double, 10> kGl20W = {
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
    0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
    0.1491729864726037,  0.1527533871307259};

}  // namespace

double std_normal_cdf(double x) {
  require_not_nan(x, "normal CDF argument");
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5);
}

double std_normal_pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

double std_normal_quantile(double p) {
  require_not_nan(p, "normal quantile argument");
  if (p < 0.0 || p > 1.0) {
    throw Error(ErrorCode::invalid_argument, "normal quantile argument outside [0,1]");
  }
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;

  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }

  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

BvnKernel::BvnKernel(double rho) : rho_(rho), abs_rho_(std::fabs(rho)) {
  if (std::isnan(rho) || abs_rho_ > 1.0) {
    throw Error(ErrorCode::invalid_argument,
                "correlation must lie in [-1, 1], got " + std::to_string(rho));
  }

  auto load = [this](const auto& xs, const auto& ws) {
    const int half = static_cast<int>(xs.size());
    n_nodes_ = 2 * half;
    for (int i = 0; i < half; ++i) {
      xs_[i] = 1.0 - xs[i];
      xs_[half + i] = 1.0 + xs[i];
      weight_[i] = ws[i];
      weight_[half + i] = ws[i];
    }
  };
  if (abs_rho_ < 0.3) {
    load(kGl6X, kGl6W);
  } else if (abs_rho_ < 0.75) {
    load(kGl12X, kGl12W);
  } else {
    load(kGl20X, kGl20W);
  }

  // xs_ temporarily holds the nodes t in (0, 2); convert per branch.
  if (abs_rho_ < 0.925) {
    half_arc_ = std::asin(rho_) / 2.0;
    for (int i = 0; i < n_nodes_; ++i) {
      sn_[i] = std::sin(half_arc_ * xs_[i]);
      cos2_[i] = 1.0 - sn_[i] * sn_[i];
    }
  } else if (abs_rho_ < 1.0) {
    one_minus_rho2_ = (1.0 - rho_) * (1.0 + rho_);
    sqrt_one_minus_rho2_ = std::sqrt(one_minus_rho2_);
    const double a = sqrt_one_minus_rho2_ / 2.0;
    for (int i = 0; i < n_nodes_; ++i) {
      const double t = a * xs_[i];
      xs_[i] = t * t;
      rs_[i] = std::sqrt(1.0 - xs_[i]);
    }
  }
}

double BvnKernel::cdf(double a, double b, bool flip) const {
  require_not_nan(a, "bivariate normal bound");
  require_not_nan(b, "bivariate normal bound");
  return upper(-a, -b, flip);
}

double BvnKernel::upper(double h, double k, bool flip) const {
  require_not_nan(h, "bivariate normal bound");
  require_not_nan(k, "bivariate normal bound");
  // Fixed argument order makes the result exactly symmetric.
  if (h > k) std::swap(h, k);
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : std_normal_cdf(-k);
  if (k == -kInf) return std_normal_cdf(-h);

  if (abs_rho_ == 1.0) {
    const bool positive = (rho_ > 0.0) != flip;
    if (positive) return std_normal_cdf(-std::max(h, k));
    return std::max(0.0, std_normal_cdf(-k) - std_normal_cdf(h));
  }
  if (rho_ == 0.0) return std_normal_cdf(-h) * std_normal_cdf(-k);
  return upper_finite(h, k, flip);
}

double BvnKernel::upper_finite(double h, double k, bool flip) const {
  double hk = h * k;
  double bvn = 0.0;

  if (abs_rho_ < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double sign = flip ? -1.0 : 1.0;
    const double shk = sign * hk;
    for (int i = 0; i < n_nodes_; ++i) {
      bvn += weight_[i] * std::exp((sn_[i] * shk - hs) / cos2_[i]);
    }
    bvn = bvn * sign * half_arc_ / kTwoPi + std_normal_cdf(-h) * std_normal_cdf(-k);
    return std::clamp(bvn, 0.0, 1.0);
  }

  const double r = flip ? -rho_ : rho_;
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  const double as = one_minus_rho2_;
  double a = sqrt_one_minus_rho2_;
  const double bs = (h - k) * (h - k);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 80.0;
  double asr = -(bs / as + hk) / 2.0;
  if (asr > -100.0) {
    bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
  }
  if (hk > -100.0) {
    const double b = std::sqrt(bs);
    const double sp = std::sqrt(kTwoPi) * std_normal_cdf(-b / a);
    bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
  }
  a /= 2.0;
  double sum = 0.0;
  for (int i = 0; i < n_nodes_; ++i) {
    const double xs = xs_[i];
    asr = -(bs / xs + hk) / 2.0;
    if (asr > -100.0) {
      const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
      const double rs = rs_[i];
      const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
      sum += weight_[i] * std::exp(asr) * (sp - ep);
    }
  }
  bvn = (a * sum - bvn) / kTwoPi;

  if (r > 0.0) {
    bvn += std_normal_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double l = h < 0.0 ? std_normal_cdf(k) - std_normal_cdf(h)
                             : std_normal_cdf(-h) - std_normal_cdf(-k);
    bvn = l - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double bvn_cdf(double a, double b, double rho) {
  return BvnKernel(rho).cdf(a, b);
}

double clamp_probability(double p) {
  if (std::isnan(p)) throw Error(ErrorCode::internal_error, "probability is NaN");
  if (p < 0.0) {
    if (p <= kNegativeMassLimit) {
      throw Error(ErrorCode::internal_error,
                  "negative rectangle mass " + std::to_string(p) + " exceeds clamp limit");
    }
    g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    return 0.0;
  }
  return std::min(p, 1.0);
}

double rect_prob(const RectBounds& bounds, const BvnKernel& kernel) {
  require_not_nan(bounds.lo1, "rectangle bound");
  require_not_nan(bounds.hi1, "rectangle bound");
  require_not_nan(bounds.lo2, "rectangle bound");
  require_not_nan(bounds.hi2, "rectangle bound");
  if (bounds.lo1 > bounds.hi1 || bounds.lo2 > bounds.hi2) {
    throw Error(ErrorCode::invalid_argument, "rectangle bounds are not ordered");
  }

  // Move each interval to the negative side when its centre is positive:
  // the CDF differences then involve small numbers rather than values near 1.
  auto reflect = [](double lo, double hi) {
    if (lo == -kInf) return false;
    if (hi == kInf) return true;
    return lo + hi > 0.0;
  };
  double lo1 = bounds.lo1, hi1 = bounds.hi1, lo2 = bounds.lo2, hi2 = bounds.hi2;
  const bool r1 = reflect(lo1, hi1);
  const bool r2 = reflect(lo2, hi2);
  if (r1) {
    std::swap(lo1, hi1);
    lo1 = -lo1;
    hi1 = -hi1;
  }
  if (r2) {
    std::swap(lo2, hi2);
    lo2 = -lo2;
    hi2 = -hi2;
  }
  const bool flip = r1 != r2;

  auto cdf = [&](double a, double b) {
    if (a == -kInf || b == -kInf) return 0.0;
    return kernel.cdf(a, b, flip);
  };
  const double p = cdf(hi1, hi2) - cdf(lo1, hi2) - cdf(hi1, lo2) + cdf(lo1, lo2);
  return clamp_probability(p);
}

double rect_prob(const RectBounds& bounds, double rho) {
  return rect_prob(bounds, BvnKernel(rho));
}

std::uint64_t numeric_warning_count() {
  return g_clamp_count.load(std::memory_order_relaxed);
}

}  // namespace ovrp
