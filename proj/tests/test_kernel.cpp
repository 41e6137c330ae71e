#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "oamao/kernel.hpp"

using namespace oamao;

TEST_CASE("lower incomplete gamma closed forms") {
  for (double x : {0.1, 1.0, 5.0, 50.0})
    CHECK_THAT(lower_incomplete_gamma(1.0, x),
               Catch::Matchers::WithinRel(1.0 - std::exp(-x), 1e-13));
  CHECK(lower_incomplete_gamma(3.7, 0.0) == 0.0);
  // gamma(2,x) = 1 - (1+x) e^-x
  for (double x : {0.5, 4.0, 20.0})
    CHECK_THAT(lower_incomplete_gamma(2.0, x),
               Catch::Matchers::WithinRel(1.0 - (1.0 + x) * std::exp(-x), 1e-12));
}

TEST_CASE("lower incomplete gamma frozen values") {
  // 50-digit reference evaluations; both series and continued-fraction branches.
  CHECK_THAT(lower_incomplete_gamma(0.5, 2.0),
             Catch::Matchers::WithinRel(1.6918067329451983365, 1e-12));
  CHECK_THAT(lower_incomplete_gamma(7.0, 0.5),
             Catch::Matchers::WithinRel(0.00072171331407669607091, 1e-12));
  CHECK_THAT(lower_incomplete_gamma(13.5, 190.0),
             Catch::Matchers::WithinRel(1710542068.3195732157, 1e-12));
  CHECK_THAT(lower_incomplete_gamma(28.0, 18.0),
             Catch::Matchers::WithinRel(1.8856941798092050172e+26, 1e-12));
}

TEST_CASE("lower incomplete gamma against quadrature") {
  // panel Gauss-Legendre of t^(alpha-1) e^-t on [0, x]
  const int nodes = 48;
  double xs[nodes], ws[nodes];
  for (int i = 0; i < nodes; ++i) {
    double t = std::cos(pi * (i + 0.75) / (nodes + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < nodes; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
      }
      double dp = nodes * (t * p0 - p1) / (t * t - 1.0);
      double step = p0 / dp;
      t -= step;
      if (std::fabs(step) < 1e-15) break;
    }
    double p0 = 1.0, p1 = 0.0;
    for (int j = 0; j < nodes; ++j) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
    }
    double dp = nodes * (t * p0 - p1) / (t * t - 1.0);
    xs[i] = 0.5 * (1.0 - t);
    ws[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  for (double alpha : {2.5, 6.0, 11.25})
    for (double x : {3.0, 8.0}) {
      double acc = 0.0;
      const int panels = 32;
      for (int pan = 0; pan < panels; ++pan) {
        double a = x * pan / panels, b = x * (pan + 1) / panels;
        for (int i = 0; i < nodes; ++i) {
          double t = a + (b - a) * xs[i];
          acc += (b - a) * ws[i] * std::pow(t, alpha - 1.0) * std::exp(-t);
        }
      }
      CAPTURE(alpha, x);
      CHECK_THAT(lower_incomplete_gamma(alpha, x),
                 Catch::Matchers::WithinRel(acc, 1e-10));
    }
}

TEST_CASE("lower incomplete gamma limits and domain") {
  CHECK_THAT(lower_incomplete_gamma(5.0, 200.0),
             Catch::Matchers::WithinRel(24.0, 1e-12));  // -> Gamma(5)
  CHECK(lower_incomplete_gamma(3.0, 2.0) < lower_incomplete_gamma(3.0, 2.5));
  CHECK_THROWS_AS(lower_incomplete_gamma(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(lower_incomplete_gamma(1.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(lower_incomplete_gamma(171.0, 1.0), std::domain_error);
}

TEST_CASE("angular weights, squared-trig family") {
  const double pi2 = pi * pi;
  // m = 0: plain overlaps on both pairs
  CHECK(angular_F(AngularCase::F1, 2, 1, 2, 1, 0) == 4.0 * pi2);
  CHECK(angular_F(AngularCase::F1, 2, 1, 3, 1, 0) == 0.0);
  CHECK(angular_F(AngularCase::F1, 2, 1, 2, 2, 0) == 0.0);
  // m > 0: unshifted column at 2 pi^2, +/-2m shifts at +pi^2
  CHECK(angular_F(AngularCase::F1, 2, 0, 2, 0, 1) == 2.0 * pi2);
  CHECK(angular_F(AngularCase::F1, 2, 0, 0, 0, 1) == pi2);
  CHECK(angular_F(AngularCase::F1, 2, 0, 4, 0, 1) == pi2);
  CHECK(angular_F(AngularCase::F1, 2, 0, 3, 0, 1) == 0.0);
  CHECK(angular_F(AngularCase::F1, 2, 0, 2, 1, 1) == 0.0);  // primed mismatch
  // m < 0: shifts flip sign
  CHECK(angular_F(AngularCase::F1, 2, 0, 2, 0, -1) == 2.0 * pi2);
  CHECK(angular_F(AngularCase::F1, 2, 0, 0, 0, -1) == -pi2);
  CHECK(angular_F(AngularCase::F1, 2, 0, 4, 0, -1) == -pi2);
  // F4 mirrors on the primed pair
  CHECK(angular_F(AngularCase::F4, 1, 2, 1, 0, 1) == pi2);
  CHECK(angular_F(AngularCase::F4, 1, 2, 1, 2, 1) == 2.0 * pi2);
  CHECK(angular_F(AngularCase::F4, 1, 2, 2, 0, 1) == 0.0);  // unprimed mismatch
  CHECK(angular_F(AngularCase::F4, 1, 2, 1, 0, -1) == -pi2);
  // large |m| keeps only the unshifted column within small l ranges
  CHECK(angular_F(AngularCase::F1, 1, 0, 1, 0, 6) == 2.0 * pi2);
  CHECK(angular_F(AngularCase::F1, 1, 0, 13, 0, 6) == pi2);
}

TEST_CASE("angular weights, split family") {
  const double pi2 = pi * pi;
  CHECK(angular_F(AngularCase::F23, 1, 2, 1, 2, 0) == 4.0 * pi2);
  CHECK(angular_F(AngularCase::F23, 1, 2, 1, 3, 0) == 0.0);
  // m > 0: every sign combination of the +/-m shifts contributes +pi^2
  CHECK(angular_F(AngularCase::F23, 2, 1, 1, 0, 1) == pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 3, 2, 1) == pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 1, 2, 1) == pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 3, 0, 1) == pi2);
  // m < 0: aligned shifts +pi^2, opposed -pi^2
  CHECK(angular_F(AngularCase::F23, 2, 1, 1, 0, -1) == pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 3, 2, -1) == pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 1, 2, -1) == -pi2);
  CHECK(angular_F(AngularCase::F23, 2, 1, 3, 0, -1) == -pi2);
  // any off-shift label kills the term
  CHECK(angular_F(AngularCase::F23, 2, 1, 2, 0, 1) == 0.0);
  CHECK(angular_F(AngularCase::F23, 2, 1, 1, 1, 1) == 0.0);
  CHECK(angular_F(AngularCase::F23, 2, 1, 4, 3, 2) == pi2);
}

TEST_CASE("same-side radial sum frozen values") {
  // 50-digit quadrature references for the quadruple sum.
  CHECK_THAT(radial_G1(2, 1, 2, 0, ZernikeMode{0, 3, 1}, ZernikeMode{0, 3, 1}, 9.2088),
             Catch::Matchers::WithinRel(-0.12214622929750492, 1e-11));
  CHECK_THAT(radial_G1(0, 2, 2, 1, ZernikeMode{0, 2, 2}, ZernikeMode{0, 4, 2}, 3.0),
             Catch::Matchers::WithinRel(0.30761824182524727, 1e-11));
  CHECK_THAT(radial_G1(-1, 0, 1, 1, ZernikeMode{0, 1, 1}, ZernikeMode{0, 1, 1}, 9.8596),
             Catch::Matchers::WithinRel(-0.010286826327614802, 1e-11));
}

TEST_CASE("same-side radial sum symmetry and domain") {
  ZernikeMode k{0, 3, 1}, kt{0, 5, 1};
  for (double rw : {3.0, 9.2088}) {
    CHECK_THAT(radial_G1(2, 1, -1, 3, k, kt, rw),
               Catch::Matchers::WithinRel(radial_G1(-1, 3, 2, 1, kt, k, rw), 1e-12));
    CHECK_THAT(radial_G1(0, 2, 2, 0, k, kt, rw),
               Catch::Matchers::WithinRel(radial_G1(2, 0, 0, 2, kt, k, rw), 1e-12));
  }
  CHECK_THROWS_AS(radial_G1(0, 0, 0, 0, ZernikeMode{0, 2, 2}, ZernikeMode{0, 3, 1}, 3.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(radial_G1(0, -1, 0, 0, k, k, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(radial_G1(0, 0, 0, 0, k, k, 0.0), std::invalid_argument);
}

TEST_CASE("single-pair radial factor closed forms") {
  // fundamental pair against piston: gamma(1, 2R^2/w^2) = 1 - e^-x
  for (double rw : {1.0, 3.0, 9.2088}) {
    double x = 2.0 * rw * rw;
    CHECK_THAT(radial_g2_factor(0, 0, 0, 0, 0, 0, rw),
               Catch::Matchers::WithinRel(-std::expm1(-x), 1e-13));
    // defocus: 2 gamma(2,x)/x - gamma(1,x)
    double ref = 2.0 * (1.0 - (1.0 + x) * std::exp(-x)) / x - (1.0 - std::exp(-x));
    CHECK_THAT(radial_g2_factor(0, 0, 0, 0, 2, 0, rw),
               Catch::Matchers::WithinRel(ref, 1e-12));
  }
}

TEST_CASE("split radial products wire the two factors") {
  ZernikeMode k{0, 3, 1}, kt{0, 1, 1};
  double rw = 9.2088;
  double g2 = radial_G2(1, 0, 2, 1, 1, 1, 2, 0, k, kt, rw);
  CHECK_THAT(g2, Catch::Matchers::WithinRel(
                     radial_g2_factor(1, 0, 1, 1, 3, 1, rw) *
                         radial_g2_factor(2, 1, 2, 0, 1, 1, rw),
                     1e-14));
  CHECK_THAT(radial_G3(1, 0, 2, 1, 1, 1, 2, 0, k, kt, rw),
             Catch::Matchers::WithinRel(
                 radial_G2(1, 0, 2, 1, 1, 1, 2, 0, kt, k, rw), 1e-14));
  CHECK_THAT(radial_G4(1, 0, 1, 1, k, kt, rw),
             Catch::Matchers::WithinRel(radial_G1(1, 0, 1, 1, k, kt, rw), 1e-14));
}

TEST_CASE("radial sums reach the full-plane limit at large aperture") {
  // gamma(s, 2R^2/w^2) -> Gamma(s): piston-piston G1 becomes the Laguerre
  // weight-function inner product Gamma(p+|l|+1)/p! delta_{p,pt}.
  ZernikeMode piston{1, 0, 0};
  CHECK_THAT(radial_G1(1, 1, 1, 1, piston, piston, 20.0),
             Catch::Matchers::WithinRel(2.0, 1e-12));
  CHECK_THAT(radial_G1(1, 0, 1, 1, piston, piston, 20.0),
             Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(radial_G1(2, 2, 2, 2, piston, piston, 20.0),
             Catch::Matchers::WithinRel(12.0, 1e-12));  // Gamma(5)/2!
}

TEST_CASE("term prefactor") {
  DimensionlessGeometry geom{9.2088, 0.4234, 1.9937};
  double gy = geom.gouy();
  TermIndices t{{2, 1}, {1, 0}, {2, 0}, {1, 1}, ZernikeMode{0, 3, 1},
                ZernikeMode{0, 5, 1}};

  // frequency mismatch vanishes
  TermIndices tm = t;
  tm.kt = ZernikeMode{0, 5, -1};
  CHECK(term_constant_C(tm, geom, gy) == std::complex<double>(0.0, 0.0));

  // covariance, multiplicity, norms, order weights, and the axial phase
  // 2p+|l| accounting: (2*1+2) - (0+1) - (0+2) + (2*1+1) = 4
  auto c = term_constant_C(t, geom, gy);
  double mag = coefficient_covariance(t.k, t.kt, geom.R_over_r0) * (2.0 / pi) *
               lg_norm(2, 1) * lg_norm(1, 0) * lg_norm(2, 0) * lg_norm(1, 1) *
               std::sqrt(4.0 * 6.0);
  double arg = 4.0 * gy;
  CHECK_THAT(c.real(), Catch::Matchers::WithinRel(mag * std::cos(arg), 1e-13));
  CHECK_THAT(c.imag(), Catch::Matchers::WithinRel(mag * std::sin(arg), 1e-13));

  // swapping both unprimed/primed roles conjugates the term
  TermIndices ts{t.in2, t.in1, t.out2, t.out1, t.k, t.kt};
  auto cs = term_constant_C(ts, geom, gy);
  CHECK_THAT(cs.real(), Catch::Matchers::WithinRel(c.real(), 1e-12));
  CHECK_THAT(cs.imag(), Catch::Matchers::WithinAbs(-c.imag(), 1e-12));

  // strength scaling
  DimensionlessGeometry geom2 = geom;
  geom2.R_over_r0 *= 3.0;
  CHECK_THAT(std::abs(term_constant_C(t, geom2, gy)) / std::abs(c),
             Catch::Matchers::WithinRel(std::pow(3.0, 5.0 / 3.0), 1e-12));

  // zero axial phase makes the term real
  auto c0 = term_constant_C(t, geom, 0.0);
  CHECK(c0.imag() == 0.0);
}
