#pragma once
// Zernike circle functions on an aperture of radius R, orthonormal under
// the unweighted area element r dr dtheta:
//   Z_k(r,theta) = (1/R) sqrt((n+1)/pi) P_n^0(r/R)                 m = 0
//                = (1/R) sqrt(2(n+1)/pi) P_n^|m|(r/R) cos(m theta) m > 0
//                = (1/R) sqrt(2(n+1)/pi) P_n^|m|(r/R) (-sin(m theta)) m < 0
// (the m < 0 branch carries sin(m theta) with signed m, hence the sign).
// Single-index ordering: ascending radial order n, then ascending |m|,
// with the cosine member of each |m| pair on the even index.

#include <mutex>
#include <stdexcept>
#include <vector>

#include "oamao/common.hpp"

namespace oamao {

struct ZernikeMode {
  int k;  // single index, 1-based, k = 1 is piston
  int n;  // radial order, n >= 0
  int m;  // signed azimuthal frequency, |m| <= n, n - |m| even
};

inline void check_nm(int n, int m) {
  int am = m < 0 ? -m : m;
  if (n < 0 || am > n || ((n - am) % 2) != 0)
    throw std::invalid_argument("zernike: invalid (n, m) pair");
}

// Single index from (n, m). Closed form; H is the unit step (H(0) = 1).
inline int nm_to_noll(int n, int m) {
  check_nm(n, m);
  int am = m < 0 ? -m : m;
  int T = n * (n + 1) / 2;
  if (am == 0) return 1 + T;
  int T2 = T % 2;
  int m0 = am % 2;        // |m| odd -> 1
  int m1 = (am - 1) % 2;  // |m| even -> 1
  int bracket = (m >= 0) ? (T2 * m0 + (1 - T2) * m1) : (T2 * m1 + (1 - T2) * m0);
  return 1 + T + am - bracket;
}

namespace detail {
// Enumeration table for the inverse map, grown on demand. Copies the
// requested prefix out under the lock; the table itself may reallocate.
inline std::vector<ZernikeMode> noll_prefix(int k_max) {
  static std::vector<ZernikeMode> table;  // table[k-1]
  static std::mutex mu;
  std::lock_guard<std::mutex> lk(mu);
  int n = 0;
  if (!table.empty()) n = table.back().n + 1;
  while ((int)table.size() < k_max) {
    table.resize(table.size() + n + 1);
    for (int m = -n; m <= n; ++m) {
      if ((n - std::abs(m)) % 2 != 0) continue;
      int k = nm_to_noll(n, m);
      table[k - 1] = ZernikeMode{k, n, m};
    }
    ++n;
  }
  return std::vector<ZernikeMode>(table.begin(), table.begin() + k_max);
}
}  // namespace detail

inline ZernikeMode noll_to_nm(int k) {
  if (k < 1) throw std::invalid_argument("noll_to_nm: k must be >= 1");
  return detail::noll_prefix(k).back();
}

// All modes with radial order n <= N, in single-index order.
inline std::vector<ZernikeMode> complete_through_order(int N) {
  return detail::noll_prefix((N + 1) * (N + 2) / 2);
}

// Modes J+1 .. with radial order capped at n_max (the uncorrected residual).
inline std::vector<ZernikeMode> residual_modes(int J, int n_max) {
  if (J < 1) throw std::invalid_argument("residual_modes: J must be >= 1");
  int count = (n_max + 1) * (n_max + 2) / 2;
  if (J >= count)
    throw std::invalid_argument("residual_modes: J leaves no residual below n_max");
  auto all = complete_through_order(n_max);
  return std::vector<ZernikeMode>(all.begin() + J, all.end());
}

// True when correcting exactly J modes separates a +/-m pair.
inline bool splits_pair(int J) {
  ZernikeMode first = noll_to_nm(J + 1);
  if (first.m == 0) return false;
  return nm_to_noll(first.n, -first.m) <= J;
}

// Radial polynomial P_n^|m|(rho) = sum_s (-1)^s C(n-s,s) C(n-2s,(n-|m|)/2-s) rho^(n-2s),
// evaluated through the equivalent Jacobi form rho^m J_s^{(0,m)}(2 rho^2 - 1),
// s = (n-m)/2. The recurrence argument stays inside [-1,1], so this is stable
// at orders where the alternating monomial sum would cancel catastrophically.
inline double radial_poly(int n, int m_abs, double rho) {
  if (m_abs < 0) throw std::invalid_argument("radial_poly: m_abs must be >= 0");
  check_nm(n, m_abs);
  int smax = (n - m_abs) / 2;
  double x = 2.0 * rho * rho - 1.0;
  double b = (double)m_abs;
  double jm1 = 1.0;  // J_0
  if (smax == 0) return std::pow(rho, m_abs);
  double j = 0.5 * ((b + 2.0) * x - b);  // J_1
  for (int s = 2; s <= smax; ++s) {
    double c1 = 2.0 * s * (s + b) * (2.0 * s + b - 2.0);
    double c2 = (2.0 * s + b - 1.0) * ((2.0 * s + b) * (2.0 * s + b - 2.0) * x - b * b);
    double c3 = 2.0 * (s - 1.0) * (s + b - 1.0) * (2.0 * s + b);
    double jnext = (c2 * j - c3 * jm1) / c1;
    jm1 = j;
    j = jnext;
  }
  return j * std::pow(rho, m_abs);
}

// Value of R * Z_k at the dimensionless point (rho, theta), rho in [0,1].
inline double zernike_eval_unit(const ZernikeMode& mode, double rho, double theta) {
  check_nm(mode.n, mode.m);
  if (rho < 0.0 || rho > 1.0)
    throw std::invalid_argument("zernike_eval_unit: rho outside [0,1]");
  int am = mode.m < 0 ? -mode.m : mode.m;
  double P = radial_poly(mode.n, am, rho);
  if (mode.m == 0) return std::sqrt((mode.n + 1) / pi) * P;
  double norm = std::sqrt(2.0 * (mode.n + 1) / pi);
  // sin(m theta) with signed m: for m < 0 this is -sin(|m| theta).
  if (mode.m > 0) return norm * P * std::cos(mode.m * theta);
  return -norm * P * std::sin(mode.m * theta);
}

inline double zernike_eval(const ZernikeMode& mode, double r, double theta, double R) {
  if (R <= 0.0) throw std::invalid_argument("zernike_eval: R must be positive");
  if (r < 0.0 || r > R) throw std::invalid_argument("zernike_eval: r outside [0,R]");
  return zernike_eval_unit(mode, r / R, theta) / R;
}

}  // namespace oamao
