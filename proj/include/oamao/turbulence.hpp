#pragma once
// Kolmogorov-spectrum statistics of a thin-phase-screen aberration expanded
// in Zernike modes over an aperture of radius R. The covariance of the
// expansion coefficients a_k (phase in radians, coefficients carrying
// dimensions of length^1 through the 1/R mode prefactor) is
//   E[a_k a_k'] / R^2 = (-1)^((n'-n)/2) M (R/r0)^(5/3)
//                       sqrt((n+1)(n'+1)) delta_{m,m'} I_{n,n'}
// where r0 is the Fried parameter and I is a ratio of Gamma functions.
// All routines here work with the R^2-divided covariance.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "oamao/common.hpp"
#include "oamao/zernike.hpp"

namespace oamao {

// M = 4 sqrt(2) ((3/5) Gamma(6/5))^(5/6) Gamma(11/6)^2 / pi^(11/3)
//   = 0.0457911742171103615...
inline double spectral_constant_M() {
  static const double M = 4.0 * std::sqrt(2.0) *
                          std::pow(0.6 * std::tgamma(1.2), 5.0 / 6.0) *
                          std::tgamma(11.0 / 6.0) * std::tgamma(11.0 / 6.0) /
                          std::pow(pi, 11.0 / 3.0);
  return M;
}

// Fried parameter for a path of length z through constant Cn^2:
//   r0 = (16.6 Cn2 z / wavelength^2)^(-3/5).
inline double fried_parameter(double Cn2, double z, double wavelength) {
  if (Cn2 <= 0 || z <= 0 || wavelength <= 0)
    throw std::invalid_argument("fried_parameter: arguments must be positive");
  return std::pow(16.6 * Cn2 * z / (wavelength * wavelength), -0.6);
}

// Radial-order integral
//   I_{n,n'} = pi^(11/3) Gamma(14/3) Gamma((n+n'-14/3+3)/2)
//              / (2 Gamma((n'-n+14/3+1)/2) Gamma((n-n'+14/3+1)/2)
//                   Gamma((n+n'+14/3+3)/2)).
// Evaluated in log space; the two difference factors hit negative Gamma
// arguments for |n-n'| >= 6 (never a pole: arguments stay half-integral
// away from the non-positive integers when n-n' is even).
inline double noll_integral_I(int n, int nt) {
  if (n < 0 || nt < 0) throw std::invalid_argument("noll_integral_I: negative order");
  if (n + nt < 2)
    throw std::invalid_argument("noll_integral_I: piston pair diverges");
  const double c = 14.0 / 3.0;
  int s1 = 0, s2 = 0, s3 = 0;
  double num = lgamma_signed((n + nt - c + 3.0) / 2.0, s1);
  double d1 = lgamma_signed((nt - n + c + 1.0) / 2.0, s2);
  double d2 = lgamma_signed((n - nt + c + 1.0) / 2.0, s3);
  double d3 = std::lgamma((n + nt + c + 3.0) / 2.0);
  double lg = (11.0 / 3.0) * std::log(pi) + std::lgamma(c) + num - d1 - d2 - d3 -
              std::log(2.0);
  return s1 * s2 * s3 * std::exp(lg);
}

// R^2-divided coefficient covariance E[a_k a_k'] / R^2.
// Zero across different azimuthal frequencies; piston-piston is rejected.
inline double coefficient_covariance(const ZernikeMode& a, const ZernikeMode& b,
                                     double R_over_r0) {
  if (R_over_r0 <= 0)
    throw std::invalid_argument("coefficient_covariance: R_over_r0 must be positive");
  if (a.m != b.m) return 0.0;
  if (a.n + b.n < 2)
    throw std::invalid_argument("coefficient_covariance: piston variance diverges");
  int half = (b.n - a.n) / 2;  // integer: equal m forces equal radial parity
  double sign = (half % 2 == 0) ? 1.0 : -1.0;
  return sign * spectral_constant_M() * std::pow(R_over_r0, 5.0 / 3.0) *
         std::sqrt((a.n + 1.0) * (b.n + 1.0)) * noll_integral_I(a.n, b.n);
}

// Full residual covariance over modes J+1..(order n_max), row-major.
inline std::vector<double> covariance_matrix(const std::vector<ZernikeMode>& modes,
                                             double R_over_r0) {
  std::size_t d = modes.size();
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      double v = coefficient_covariance(modes[i], modes[j], R_over_r0);
      cov[i * d + j] = v;
      cov[j * d + i] = v;
    }
  return cov;
}

struct RytovResult {
  double sigma_R2;  // plane-wave log-amplitude variance proxy
  bool valid;       // first-order phase-screen treatment applicable
};

// sigma_R^2 = 1.637 t_z^(5/6) (w0/r0)^(5/3), valid while
// sigma_R^2 < (t_z + 1/t_z)^(5/6). t_z = z / z_R.
inline RytovResult rytov_check(double t_z, double w0_over_r0) {
  if (t_z <= 0 || w0_over_r0 <= 0)
    throw std::invalid_argument("rytov_check: arguments must be positive");
  double s = 1.637 * std::pow(t_z, 5.0 / 6.0) * std::pow(w0_over_r0, 5.0 / 3.0);
  double bound = std::pow(t_z + 1.0 / t_z, 5.0 / 6.0);
  return RytovResult{s, s < bound};
}

}  // namespace oamao
