#include "abund/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace abund {

double Rng::uniform() {
  // 53-bit mantissa, shifted into (0,1); 0 is impossible because we add 0.5
  // before scaling.
  uint64_t u = gen_() >> 11;
  return (static_cast<double>(u) + 0.5) * (1.0 / 9007199254740992.0);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) {
    double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = uniform();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

long long Rng::binomial(long long n, double p) {
  if (n <= 0) return 0;
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial(n, 1.0 - p);
  // Waiting times between successes are geometric; skip through failures.
  double lq = std::log1p(-p);
  long long count = 0;
  long long i = 0;
  for (;;) {
    double g = std::floor(std::log(uniform()) / lq);
    i += static_cast<long long>(g) + 1;
    if (i > n) break;
    ++count;
  }
  return count;
}

namespace {

// Inverse standard normal CDF: Acklam's rational approximation refined with
// one Halley step against erfc, good to near machine precision.
double probit(double u) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (u < plow) {
    double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - plow) {
    double q = u - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  double e = 0.5 * std::erfc(-x / 1.4142135623730950488) - u;
  double pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
  if (pdf > 0.0) {
    double w = e / pdf;
    x -= w / (1.0 + x * w / 2.0);
  }
  return x;
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

}  // namespace

double Rng::trunc_normal(double mean, double sd, double lo, double hi) {
  if (!(sd > 0.0) || !(lo < hi)) throw std::invalid_argument("bad truncation");
  double za = (lo - mean) / sd;
  double zb = (hi - mean) / sd;
  // Plenty of mass inside: cheap rejection.
  if (za < 2.0 && zb > -2.0) {
    for (int k = 0; k < 64; ++k) {
      double z = normal();
      if (z > za && z < zb) return mean + sd * z;
    }
  }
  double pa = norm_cdf(za);
  double pb = norm_cdf(zb);
  double u = pa + uniform() * (pb - pa);
  if (u <= 0.0) u = 5e-324;
  if (u >= 1.0) u = 1.0 - 1e-16;
  double z = probit(u);
  if (z <= za) z = std::nextafter(za, zb);
  if (z >= zb) z = std::nextafter(zb, za);
  return mean + sd * z;
}

long long Rng::below(long long m) {
  return static_cast<long long>(uniform() * static_cast<double>(m)) % m;
}

}  // namespace abund
