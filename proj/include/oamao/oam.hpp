#pragma once
// Laguerre-Gauss beam modes. The transverse profile at axial position z is
//   R_{l,p}(r) = (2 A_{l,p} / w) (sqrt(2) r / w)^|l| L_p^|l|(2 r^2 / w^2)
//                exp(-r^2/w^2) exp(-i k r^2 / (2 R_c)) exp(i (2p+|l|+1) psi)
// with w = w(z), R_c the wavefront curvature radius, psi = arctan(z/z_R)
// the axial phase, and A_{l,p} = sqrt(p! / (p+|l|)!). The azimuthal factor
// exp(i l theta) / sqrt(2 pi) is kept separate by all overlap routines.

#include <complex>
#include <stdexcept>
#include <vector>

#include "oamao/common.hpp"

namespace oamao {

struct OamLabel {
  int l;  // azimuthal index, signed
  int p;  // radial index, p >= 0
};

inline bool operator==(const OamLabel& a, const OamLabel& b) {
  return a.l == b.l && a.p == b.p;
}

// Generalized Laguerre polynomial L_p^alpha(x), finite sum with
// exact-integer binomials, terms accumulated smallest magnitude first.
inline double laguerre(int p, int alpha, double x) {
  if (p < 0 || alpha < 0) throw std::invalid_argument("laguerre: negative index");
  if (p > 60) throw std::domain_error("laguerre: p > 60 not supported");
  std::vector<double> terms;
  terms.reserve(p + 1);
  for (int i = 0; i <= p; ++i) {
    double t = binomial(p + alpha, p - i) * std::pow(x, i) / factorial(i);
    terms.push_back((i % 2 == 0) ? t : -t);
  }
  return stable_sum(terms);
}

// Three-term recurrence evaluation, used as an independent cross-check:
// (p+1) L_{p+1} = (2p + alpha + 1 - x) L_p - (p + alpha) L_{p-1}.
inline double laguerre_recurrence(int p, int alpha, double x) {
  if (p < 0 || alpha < 0) throw std::invalid_argument("laguerre: negative index");
  double lm1 = 0.0, l0 = 1.0;
  for (int i = 0; i < p; ++i) {
    double l1 = ((2 * i + alpha + 1 - x) * l0 - (i + alpha) * lm1) / (i + 1);
    lm1 = l0;
    l0 = l1;
  }
  return l0;
}

// A_{l,p} = sqrt(p! / (p+|l|)!); log-space when the factorials get large.
inline double lg_norm(int l, int p) {
  if (p < 0) throw std::invalid_argument("lg_norm: p must be >= 0");
  int al = l < 0 ? -l : l;
  if (al + p <= 20) {
    return std::sqrt(factorial(p) / factorial(p + al));
  }
  return std::exp(0.5 * (std::lgamma(p + 1.0) - std::lgamma(p + al + 1.0)));
}

// Free-space Gaussian beam geometry. All lengths share one unit.
struct BeamGeometry {
  double w0;          // waist radius
  double z;           // axial position
  double wavelength;  // vacuum wavelength

  void validate() const {
    if (w0 <= 0 || wavelength <= 0)
      throw std::invalid_argument("BeamGeometry: w0 and wavelength must be positive");
  }
  double k_wave() const { return 2.0 * pi / wavelength; }
  double rayleigh() const { return 0.5 * k_wave() * w0 * w0; }
  double t_z() const { return z / rayleigh(); }
  double w() const { return w0 * std::sqrt(1.0 + t_z() * t_z()); }
  // 1/R_c = z / (z^2 + z_R^2); finite everywhere, zero at the waist.
  double inv_curvature() const {
    double zr = rayleigh();
    return z / (z * z + zr * zr);
  }
  double gouy() const { return std::atan(t_z()); }
};

// Radial profile R_{l,p}(r) at the geometry's axial position.
inline std::complex<double> lg_radial(const OamLabel& mode, double r,
                                      const BeamGeometry& geom) {
  if (mode.p < 0) throw std::invalid_argument("lg_radial: p must be >= 0");
  if (r < 0) throw std::invalid_argument("lg_radial: r must be >= 0");
  geom.validate();
  int al = mode.l < 0 ? -mode.l : mode.l;
  double wz = geom.w();
  double u = 2.0 * r * r / (wz * wz);
  double mag = (2.0 * lg_norm(mode.l, mode.p) / wz) *
               std::pow(std::sqrt(2.0) * r / wz, al) * laguerre(mode.p, al, u) *
               std::exp(-r * r / (wz * wz));
  double phase = -0.5 * geom.k_wave() * r * r * geom.inv_curvature() +
                 (2.0 * mode.p + al + 1.0) * geom.gouy();
  return mag * std::complex<double>(std::cos(phase), std::sin(phase));
}

}  // namespace oamao
