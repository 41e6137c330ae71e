#pragma once
// Shared numeric primitives: exact binomials, compensated summation,
// signed log-gamma, version tag.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace oamao {

inline constexpr const char* version = "1.0.0";
inline constexpr double pi = 3.14159265358979323846264338327950288;

// Exact binomial coefficient. Fits int64 for n <= 62 (C(62,31) < 2^63).
inline std::int64_t binomial_i64(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (n > 62) throw std::domain_error("binomial_i64: n > 62 overflows int64");
  k = std::min(k, n - k);
  std::int64_t num = 1;
  for (int i = 1; i <= k; ++i) {
    // num * (n-k+i) stays exact: intermediate fits because the running
    // value is itself a binomial coefficient times i! bounded by C(62,31)*31.
    num = num / i * (n - k + i) + (num % i) * (n - k + i) / i;
  }
  return num;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  if (n <= 62) return static_cast<double>(binomial_i64(n, k));
  return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(n - k + 1.0)));
}

// Exact factorial through 20!, the largest that fits int64.
inline double factorial(int n) {
  if (n < 0) throw std::domain_error("factorial: negative argument");
  static const double table[] = {
      1.,
      1.,
      2.,
      6.,
      24.,
      120.,
      720.,
      5040.,
      40320.,
      362880.,
      3628800.,
      39916800.,
      479001600.,
      6227020800.,
      87178291200.,
      1307674368000.,
      20922789888000.,
      355687428096000.,
      6402373705728000.,
      121645100408832000.,
      2432902008176640000.};
  if (n <= 20) return table[n];
  return std::exp(std::lgamma(n + 1.0));
}

struct KahanAccumulator {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// Sums in ascending magnitude with compensation; reorders its argument.
inline double stable_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end(),
            [](double a, double b) { return std::fabs(a) < std::fabs(b); });
  KahanAccumulator acc;
  for (double t : terms) acc.add(t);
  return acc.value();
}

// Extended-precision variant for ill-conditioned alternating sums.
inline long double stable_sum(std::vector<long double>& terms) {
  std::sort(terms.begin(), terms.end(), [](long double a, long double b) {
    return std::fabs(a) < std::fabs(b);
  });
  long double sum = 0.0L, c = 0.0L;
  for (long double t : terms) {
    long double y = t - c;
    long double u = sum + y;
    c = (u - sum) - y;
    sum = u;
  }
  return sum;
}

// log|Gamma(x)| with sign, valid for non-pole x (reflection for x < 0.5).
inline double lgamma_signed(double x, int& sign) {
  if (x >= 0.5) {
    sign = 1;
    return std::lgamma(x);
  }
  if (x == std::floor(x))
    throw std::domain_error("lgamma_signed: pole at non-positive integer");
  double s = std::sin(pi * x);
  sign = (s > 0) ? 1 : -1;
  return std::log(pi / std::fabs(s)) - std::lgamma(1.0 - x);
}

}  // namespace oamao
