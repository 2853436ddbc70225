#include "fpl/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace fpl::dist {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

/// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    c = 1.0 + num / c;
    if (std::abs(d) < tiny) d = tiny;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    c = 1.0 + num / c;
    if (std::abs(d) < tiny) d = tiny;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return h;
}

/// Gauss-Legendre rule of order 20 on [-1, 1].
constexpr double kGlNodes[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                                 0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                                 0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                                 0.9931285991850949};
constexpr double kGlWeights[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                                   0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                                   0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                                   0.0176140071391521};

template <typename F>
double gauss_legendre(F&& f, double lo, double hi, int panels) {
  double total = 0.0;
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double mid = a + 0.5 * width, half = 0.5 * width;
    for (int i = 0; i < 10; ++i) {
      total += kGlWeights[i] * (f(mid - half * kGlNodes[i]) + f(mid + half * kGlNodes[i])) * half;
    }
  }
  return total;
}

/// P(R > w) for the normal range, computed without cancellation:
/// k * integral phi(z) [Phi(z)^(k-1) - (Phi(z) - Phi(z - w))^(k-1)] dz.
double normal_range_sf(double w, int k) {
  if (w <= 0.0) return 1.0;
  const double m = k - 1;
  auto integrand = [&](double z) {
    const double a = normal_cdf(z);
    if (a <= 0.0) return 0.0;
    const double d = normal_cdf(z - w);
    const double ratio = std::min(d / a, 1.0);
    // a^m (1 - (1 - d/a)^m)
    const double tail = -std::expm1(m * std::log1p(-ratio));
    return normal_pdf(z) * std::pow(a, m) * tail;
  };
  const double v = k * gauss_legendre(integrand, -8.5, 8.5 + w, 40 + static_cast<int>(4 * w));
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isinf(df)) return normal_cdf(t);
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must be in (0, 1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, df);
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, df) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double normal_range_cdf(double w, int k) { return 1.0 - normal_range_sf(w, k); }

double studentized_range_sf(double q, int k, double df) {
  if (k < 2) throw std::invalid_argument("studentized range needs k >= 2");
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (q <= 0.0) return 1.0;
  if (std::isinf(df) || df > 5000.0) return normal_range_sf(q, k);
  // Q = R / S with S ~ chi_df / sqrt(df); integrate over s.
  const double log_norm = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
  auto density = [&](double s) {
    if (s <= 0.0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  const double spread = 1.0 / std::sqrt(df);
  const double lo = std::max(0.0, 1.0 - 12.0 * spread);
  const double hi = 1.0 + 14.0 * spread + 2.0;
  double v = gauss_legendre([&](double s) { return density(s) * normal_range_sf(q * s, k); }, lo, hi, 60);
  if (lo > 0.0) {
    // tail of small s where the range is almost surely exceeded
    v += gauss_legendre(density, 0.0, lo, 20);
  }
  return std::clamp(v, 0.0, 1.0);
}

double studentized_range_cdf(double q, int k, double df) { return 1.0 - studentized_range_sf(q, k, df); }

double studentized_range_quantile(double p, int k, double df) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must be in (0, 1)");
  double lo = 0.0, hi = 4.0;
  while (studentized_range_cdf(hi, k, df) < p) hi *= 2.0;
  for (int i = 0; i < 100 && hi - lo > 1e-10; ++i) {
    const double mid = 0.5 * (lo + hi);
    (studentized_range_cdf(mid, k, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace fpl::dist
