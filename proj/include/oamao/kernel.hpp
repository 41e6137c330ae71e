#pragma once
// Closed-form building blocks of the first-order aberration superoperator.
// Each term couples two Laguerre-Gauss pairs through two Zernike modes and
// factorizes into an angular selection weight (exact multiples of pi^2), a
// radial overlap sum (binomials and lower incomplete gamma functions), and
// a constant carrying covariance, normalization, and axial-phase factors.

#include <complex>
#include <stdexcept>
#include <vector>

#include "oamao/common.hpp"
#include "oamao/oam.hpp"
#include "oamao/turbulence.hpp"
#include "oamao/zernike.hpp"

namespace oamao {

namespace detail {

// Extended-precision core of the lower incomplete gamma. The radial closed
// forms feed these values into alternating sums whose largest term can dwarf
// the result by many orders; the extra mantissa bits pay for that
// cancellation. Series for x < alpha + 1, Lentz continued fraction otherwise.
inline long double lower_incomplete_gamma_ld(long double alpha, long double x) {
  if (x < alpha + 1.0L) {
    long double ap = alpha;
    long double term = 1.0L / alpha;
    long double sum = term;
    for (int i = 0; i < 5000; ++i) {
      ap += 1.0L;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-21L) break;
    }
    return sum * std::exp(alpha * std::log(x) - x);
  }
  // Modified Lentz for the upper tail's continued fraction.
  const long double tiny = 1e-300L;
  long double b = x + 1.0L - alpha;
  long double c = 1.0L / tiny;
  long double d = 1.0L / b;
  long double h = d;
  for (int i = 1; i <= 5000; ++i) {
    long double an = -static_cast<long double>(i) * (i - alpha);
    b += 2.0L;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0L / d;
    long double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0L) < 1e-20L) break;
  }
  long double upper = std::exp(alpha * std::log(x) - x) * h;
  return std::tgamma(alpha) - upper;
}

}  // namespace detail

// Lower incomplete gamma gamma(alpha, x) = int_0^x t^(alpha-1) e^-t dt.
// Relative error <= 1e-15 over alpha in (0, 170), x >= 0.
inline double lower_incomplete_gamma(double alpha, double x) {
  if (alpha <= 0.0) throw std::invalid_argument("lower_incomplete_gamma: alpha <= 0");
  if (x < 0.0) throw std::invalid_argument("lower_incomplete_gamma: x < 0");
  if (alpha >= 170.0) throw std::domain_error("lower_incomplete_gamma: alpha too large");
  if (x == 0.0) return 0.0;
  return static_cast<double>(detail::lower_incomplete_gamma_ld(alpha, x));
}

enum class AngularCase { F1, F23, F4 };

// Angular weight for one term family. Arguments follow the pair layout
// (l, l', ltilde, ltilde'); m is the shared signed Zernike frequency.
// Values are exact multiples of pi^2:
//   F1  : int dtheta dtheta' e^{i(l-lt)theta} trig(m theta)^2, needs lt' = l'.
//   F23 : int e^{i(l-lt)theta} trig(m theta) e^{-i(l'-lt')theta'} trig(m theta').
//   F4  : mirror of F1 on the primed pair.
// trig is cos for m > 0, sin for m < 0, constant for m = 0. For m != 0 the
// squared-trig cases keep the unshifted column at 2 pi^2 and add +/- pi^2 at
// a shift of 2m (+ for cos, - for sin); the split case couples all four
// combinations of +/- m shifts on the two pairs, each +/- pi^2.
inline double angular_F(AngularCase c, int l, int lp, int lt, int ltp, int m) {
  const double pi2 = pi * pi;
  if (c == AngularCase::F1 || c == AngularCase::F4) {
    // Reduce F4 to F1 by swapping the roles of the two pairs.
    int a = (c == AngularCase::F1) ? l : lp;
    int at = (c == AngularCase::F1) ? lt : ltp;
    int b = (c == AngularCase::F1) ? lp : l;
    int bt = (c == AngularCase::F1) ? ltp : lt;
    if (b != bt) return 0.0;  // plain overlap on the other pair
    if (m == 0) return (a == at) ? 4.0 * pi2 : 0.0;
    double v = 0.0;
    if (a == at) v += 2.0 * pi2;
    if (a == at + 2 * m || a == at - 2 * m) v += (m > 0) ? pi2 : -pi2;
    return v;
  }
  // F23.
  if (m == 0) return (l == lt && lp == ltp) ? 4.0 * pi2 : 0.0;
  int am = m < 0 ? -m : m;
  int d1 = l - lt, d2 = lp - ltp;
  if (d1 != am && d1 != -am) return 0.0;
  if (d2 != am && d2 != -am) return 0.0;
  if (m > 0) return pi2;               // cos cos: every sign combination
  return (d1 == d2) ? pi2 : -pi2;      // sin sin: aligned +, opposed -
}

namespace detail {

// gamma(alpha0 + t, x) for t = 0..count-1, kept in extended precision for
// the alternating sums downstream.
inline std::vector<long double> gamma_ladder(double alpha0, int count, double x) {
  std::vector<long double> g(count);
  for (int t = 0; t < count; ++t)
    g[t] = lower_incomplete_gamma_ld(static_cast<long double>(alpha0) + t, x);
  return g;
}

}  // namespace detail

// Quadruple radial sum coupling both Laguerre-Gauss pairs to both Zernike
// modes at once (the "same-side" terms). k and kt share |m|.
//   G1 = sum_{j,jt,j',jt'} (-1)^{j+jt+j'+jt'} / (j! jt!)
//        C(p+|l|,p-j) C(pt+|lt|,pt-jt)
//        C(n-j',j') C(n-2j',(n-|m|)/2-j') C(nt-jt',jt') C(nt-2jt',(nt-|m|)/2-jt')
//        (sqrt(2) R/w)^(2j'+2jt'-n-nt) gamma(s+1, 2R^2/w^2)
// with s = (|l|+|lt|+n+nt)/2 + j + jt - j' - jt'.
inline double radial_G1(int l, int p, int lt, int pt, const ZernikeMode& k,
                        const ZernikeMode& kt, double R_over_w) {
  if (p < 0 || pt < 0) throw std::invalid_argument("radial_G1: p must be >= 0");
  if (R_over_w <= 0) throw std::invalid_argument("radial_G1: R_over_w must be positive");
  check_nm(k.n, k.m);
  check_nm(kt.n, kt.m);
  int am = k.m < 0 ? -k.m : k.m;
  int amt = kt.m < 0 ? -kt.m : kt.m;
  if (am != amt) throw std::invalid_argument("radial_G1: |m| mismatch");
  int al = l < 0 ? -l : l;
  int alt = lt < 0 ? -lt : lt;
  int n = k.n, nt = kt.n;
  int jmaxp = (n - am) / 2, jmaxtp = (nt - am) / 2;
  double x = 2.0 * R_over_w * R_over_w;
  long double s2R = std::sqrt(2.0L) * static_cast<long double>(R_over_w);
  // gamma arguments run over s+1 with s in steps of 1.
  double base = 0.5 * (al + alt + n + nt) + 1.0;
  int tmin = -(jmaxp + jmaxtp);
  int tmax = p + pt;
  auto g = detail::gamma_ladder(base + tmin, tmax - tmin + 1, x);
  std::vector<long double> terms;
  terms.reserve((p + 1) * (pt + 1) * (jmaxp + 1) * (jmaxtp + 1));
  for (int j = 0; j <= p; ++j)
    for (int jt = 0; jt <= pt; ++jt)
      for (int jp = 0; jp <= jmaxp; ++jp)
        for (int jtp = 0; jtp <= jmaxtp; ++jtp) {
          long double coef =
              static_cast<long double>(binomial(p + al, p - j)) *
              binomial(pt + alt, pt - jt) * binomial(n - jp, jp) *
              binomial(n - 2 * jp, jmaxp - jp) * binomial(nt - jtp, jtp) *
              binomial(nt - 2 * jtp, jmaxtp - jtp) /
              (static_cast<long double>(factorial(j)) * factorial(jt));
          long double powr = std::pow(s2R, 2 * jp + 2 * jtp - n - nt);
          long double gv = g[(j + jt - jp - jtp) - tmin];
          long double t = coef * powr * gv;
          int sgn = (j + jt + jp + jtp) % 2;
          terms.push_back(sgn == 0 ? t : -t);
        }
  return static_cast<double>(stable_sum(terms));
}

// Single-pair radial factor: one Laguerre-Gauss pair against one Zernike
// radial polynomial of order n at frequency |m|.
//   U = sum_{j,jt,j'} (-1)^{j+jt+j'} / (j! jt!)
//       C(p+|l|,p-j) C(pt+|lt|,pt-jt) C(n-j',j') C(n-2j',(n-|m|)/2-j')
//       (sqrt(2) R/w)^(2j'-n) gamma(s+1, 2R^2/w^2),
// s = (|l|+|lt|+n)/2 + j + jt - j'.
inline double radial_g2_factor(int l, int p, int lt, int pt, int n, int m_abs,
                               double R_over_w) {
  if (p < 0 || pt < 0) throw std::invalid_argument("radial_g2_factor: p must be >= 0");
  if (R_over_w <= 0)
    throw std::invalid_argument("radial_g2_factor: R_over_w must be positive");
  check_nm(n, m_abs);
  int al = l < 0 ? -l : l;
  int alt = lt < 0 ? -lt : lt;
  int jmaxp = (n - m_abs) / 2;
  double x = 2.0 * R_over_w * R_over_w;
  long double s2R = std::sqrt(2.0L) * static_cast<long double>(R_over_w);
  double base = 0.5 * (al + alt + n) + 1.0;
  int tmin = -jmaxp;
  int tmax = p + pt;
  auto g = detail::gamma_ladder(base + tmin, tmax - tmin + 1, x);
  std::vector<long double> terms;
  terms.reserve((p + 1) * (pt + 1) * (jmaxp + 1));
  for (int j = 0; j <= p; ++j)
    for (int jt = 0; jt <= pt; ++jt)
      for (int jp = 0; jp <= jmaxp; ++jp) {
        long double coef = static_cast<long double>(binomial(p + al, p - j)) *
                           binomial(pt + alt, pt - jt) * binomial(n - jp, jp) *
                           binomial(n - 2 * jp, jmaxp - jp) /
                           (static_cast<long double>(factorial(j)) *
                            factorial(jt));
        long double powr = std::pow(s2R, 2 * jp - n);
        long double gv = g[(j + jt - jp) - tmin];
        long double t = coef * powr * gv;
        int sgn = (j + jt + jp) % 2;
        terms.push_back(sgn == 0 ? t : -t);
      }
  return static_cast<double>(stable_sum(terms));
}

// Split radial products: each Zernike mode meets one pair.
inline double radial_G2(int l, int p, int lp, int pp, int lt, int pt, int ltp,
                        int ptp, const ZernikeMode& k, const ZernikeMode& kt,
                        double R_over_w) {
  int am = k.m < 0 ? -k.m : k.m;
  int amt = kt.m < 0 ? -kt.m : kt.m;
  if (am != amt) throw std::invalid_argument("radial_G2: |m| mismatch");
  return radial_g2_factor(l, p, lt, pt, k.n, am, R_over_w) *
         radial_g2_factor(lp, pp, ltp, ptp, kt.n, am, R_over_w);
}

inline double radial_G3(int l, int p, int lp, int pp, int lt, int pt, int ltp,
                        int ptp, const ZernikeMode& k, const ZernikeMode& kt,
                        double R_over_w) {
  return radial_G2(l, p, lp, pp, lt, pt, ltp, ptp, kt, k, R_over_w);
}

// Same-side quadruple sum on the primed pair.
inline double radial_G4(int lp, int pp, int ltp, int ptp, const ZernikeMode& k,
                        const ZernikeMode& kt, double R_over_w) {
  return radial_G1(lp, pp, ltp, ptp, k, kt, R_over_w);
}

// Dimensionless channel geometry. R_over_w uses the beam radius at the
// aperture plane; z_over_zR fixes the axial phase; R_over_r0 the strength.
struct DimensionlessGeometry {
  double R_over_w;
  double z_over_zR;
  double R_over_r0;
  void validate() const {
    if (R_over_w <= 0 || R_over_r0 <= 0)
      throw std::invalid_argument("DimensionlessGeometry: scales must be positive");
  }
  double gouy() const { return std::atan(z_over_zR); }
};

// The four mode labels and two Zernike indices of one superoperator term.
struct TermIndices {
  OamLabel in1;   // (l, p)
  OamLabel in2;   // (l', p')
  OamLabel out1;  // (ltilde, ptilde)
  OamLabel out2;  // (ltilde', ptilde')
  ZernikeMode k;
  ZernikeMode kt;
};

// Term prefactor: coefficient covariance, azimuthal multiplicity, the four
// normalization constants, radial-order weights, and the net axial phase
//   exp(i psi (2p+|l| - 2p'-|l'| - 2pt-|lt| + 2pt'+|lt'|)).
// Zero when the Zernike frequencies differ.
inline std::complex<double> term_constant_C(const TermIndices& t,
                                            const DimensionlessGeometry& geom,
                                            double gouy) {
  geom.validate();
  if (t.k.m != t.kt.m) return {0.0, 0.0};
  double cov = coefficient_covariance(t.k, t.kt, geom.R_over_r0);
  double eps = (t.k.m != 0) ? 2.0 : 1.0;
  double a4 = lg_norm(t.in1.l, t.in1.p) * lg_norm(t.in2.l, t.in2.p) *
              lg_norm(t.out1.l, t.out1.p) * lg_norm(t.out2.l, t.out2.p);
  double root = std::sqrt((t.k.n + 1.0) * (t.kt.n + 1.0));
  auto aw = [](const OamLabel& q) {
    return 2.0 * q.p + (q.l < 0 ? -q.l : q.l);
  };
  double arg = gouy * (aw(t.in1) - aw(t.in2) - aw(t.out1) + aw(t.out2));
  double mag = cov * (eps / pi) * a4 * root;
  return mag * std::complex<double>(std::cos(arg), std::sin(arg));
}

}  // namespace oamao
