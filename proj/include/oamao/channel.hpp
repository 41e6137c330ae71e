#pragma once
// First-order aberration channel on a truncated Laguerre-Gauss basis.
// The superoperator A maps input-pair coordinates of a density matrix to
// output-pair coordinates:
//   A[(o1,o2)][(i1,i2)] = delta - (1/8 pi^2) sum_{k,kt} C(t) *
//     [ d_{i2,o2} ((p'+|l'|)!/p'!) F1 G1  -  F23 (G2 + G3)
//       + d_{i1,o1} ((p+|l|)!/p!) F4 G4 ]
// summed over residual Zernike pairs with equal azimuthal frequency.
// Complete +/-|m| partner pairs are folded into single entries with
// pre-summed angular weights, so outputs violating l~ - l~' = l - l' get no
// terms at all at pair-complete truncations. Element evaluation and full
// assembly share one term enumerator, so both agree to accumulation order.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "oamao/kernel.hpp"
#include "oamao/threads.hpp"

namespace oamao {

struct Truncation {
  int l_max;  // keeps |l| <= l_max
  int p_max;  // keeps p <= p_max

  void validate() const {
    if (l_max < 0 || p_max < 0)
      throw std::invalid_argument("Truncation: bounds must be >= 0");
  }
  int dim() const { return (2 * l_max + 1) * (p_max + 1); }
  bool contains(const OamLabel& q) const {
    return q.l >= -l_max && q.l <= l_max && q.p >= 0 && q.p <= p_max;
  }
  int index(const OamLabel& q) const {
    if (!contains(q)) throw std::out_of_range("Truncation: label outside set");
    return (q.l + l_max) * (p_max + 1) + q.p;
  }
  OamLabel label(int idx) const {
    if (idx < 0 || idx >= dim()) throw std::out_of_range("Truncation: bad index");
    return OamLabel{idx / (p_max + 1) - l_max, idx % (p_max + 1)};
  }
  bool covers(const Truncation& o) const {
    return l_max >= o.l_max && p_max >= o.p_max;
  }
};

struct ChannelParams {
  DimensionlessGeometry geom{9.2088, 0.4234, 1.9937};
  int J = 10;      // corrected leading modes (single-index 1..J)
  int n_max = 9;   // radial-order cutoff of the residual expansion
  Truncation in{3, 6};
  Truncation out{6, 6};

  void validate() const {
    geom.validate();
    in.validate();
    out.validate();
    if (J < 1) throw std::invalid_argument("ChannelParams: J must be >= 1");
    if (!out.covers(in))
      throw std::invalid_argument("ChannelParams: output truncation must cover input");
    if (J >= (n_max + 1) * (n_max + 2) / 2)
      throw std::invalid_argument("ChannelParams: no residual modes below n_max");
  }
  double gouy() const { return std::atan(geom.z_over_zR); }
};

struct SuperoperatorMatrix {
  ChannelParams params;
  Eigen::MatrixXcd a;  // (d_out^2) x (d_in^2)

  int row_index(const OamLabel& o1, const OamLabel& o2) const {
    return params.out.index(o1) * params.out.dim() + params.out.index(o2);
  }
  int col_index(const OamLabel& i1, const OamLabel& i2) const {
    return params.in.index(i1) * params.in.dim() + params.in.index(i2);
  }
};

// Reusable per-parameter evaluator. Precomputes the residual pair list and
// dense tables of the radial sums; element() and assemble() both walk
// scan_column(), so a single code path defines every term.
class SuperopEvaluator {
 public:
  explicit SuperopEvaluator(const ChannelParams& params) : par_(params) {
    par_.validate();
    modes_ = residual_modes(par_.J, par_.n_max);
    lmax_in_ = par_.in.l_max;
    pmax_in_ = par_.in.p_max;
    lmax_out_ = par_.out.l_max;
    pmax_out_ = par_.out.p_max;
    build_label_tables();
    build_pairs_and_caches();
  }

  const ChannelParams& params() const { return par_; }

  // One superoperator element; inputs must lie in the input truncation,
  // outputs in the output truncation.
  std::complex<double> element(const OamLabel& o1, const OamLabel& o2,
                               const OamLabel& i1, const OamLabel& i2) const {
    if (!par_.out.contains(o1) || !par_.out.contains(o2))
      throw std::out_of_range("element: output label outside truncation");
    KahanAccumulator re, im;
    scan_column(i1, i2, [&](const OamLabel& c1, const OamLabel& c2,
                            std::complex<double> v) {
      if (c1 == o1 && c2 == o2) {
        re.add(v.real());
        im.add(v.imag());
      }
    });
    std::complex<double> val(re.value(), im.value());
    if (o1 == i1 && o2 == i2) val += 1.0;
    return val;
  }

  // Enumerates every non-identity contribution to column (i1, i2) in a
  // fixed order. visit(o1, o2, value) may be called repeatedly per output.
  template <typename Visitor>
  void scan_column(const OamLabel& i1, const OamLabel& i2, Visitor&& visit) const {
    if (!par_.in.contains(i1) || !par_.in.contains(i2))
      throw std::out_of_range("scan_column: input label outside truncation");
    const double inv8pi2 = 1.0 / (8.0 * pi * pi);
    const double pi2 = pi * pi;
    const int l = i1.l, p = i1.p, lp = i2.l, pp = i2.p;
    const double a_in = lgA(i1) * lgA(i2);
    const int aw_in = aweight(i1) - aweight(i2);
    for (const Pair& pr : pairs_) {
      const int m = pr.m;
      // Case 1: primed pair collapses onto itself.
      {
        struct Cand {
          int lt;
          double F;
        } cands[3];
        int nc = 0;
        if (m == 0) {
          cands[nc++] = {l, 4.0 * pi2};
        } else if (pr.both) {
          // cos^2 and sin^2 partners: shifted columns cancel exactly.
          cands[nc++] = {l, 4.0 * pi2};
        } else {
          cands[nc++] = {l, 2.0 * pi2};
          double s = (m > 0) ? pi2 : -pi2;
          cands[nc++] = {l + 2 * m, s};
          cands[nc++] = {l - 2 * m, s};
        }
        for (int ci = 0; ci < nc; ++ci) {
          int ltl = cands[ci].lt;
          if (ltl < -lmax_out_ || ltl > lmax_out_) continue;
          const double* g1row = g1_entry(pr.g1, std::abs(l), p, std::abs(ltl));
          for (int ptl = 0; ptl <= pmax_out_; ++ptl) {
            OamLabel o1{ltl, ptl};
            double base = pr.pref * a_in * lgA(o1) * lgA(i2) * inv_a2(i2);
            std::complex<double> ph = phase(aw_in - aweight(o1) + aweight(i2));
            std::complex<double> v =
                -inv8pi2 * base * cands[ci].F * g1row[ptl] * ph;
            visit(o1, i2, v);
          }
        }
      }
      // Cases 2 and 3 share the angular weight; their radial parts swap the
      // Zernike orders, so they are emitted together.
      {
        struct Cand {
          int lt, ltp;
          double F;
        } cands[4];
        int nc = 0;
        if (m == 0) {
          cands[nc++] = {l, lp, 4.0 * pi2};
        } else if (pr.both) {
          // opposed shifts cancel between the partners; aligned ones double.
          cands[nc++] = {l - m, lp - m, 2.0 * pi2};
          cands[nc++] = {l + m, lp + m, 2.0 * pi2};
        } else if (m > 0) {
          cands[nc++] = {l - m, lp - m, pi2};
          cands[nc++] = {l + m, lp + m, pi2};
          cands[nc++] = {l - m, lp + m, pi2};
          cands[nc++] = {l + m, lp - m, pi2};
        } else {
          cands[nc++] = {l - m, lp - m, pi2};
          cands[nc++] = {l + m, lp + m, pi2};
          cands[nc++] = {l - m, lp + m, -pi2};
          cands[nc++] = {l + m, lp - m, -pi2};
        }
        for (int ci = 0; ci < nc; ++ci) {
          int ltl = cands[ci].lt, ltpl = cands[ci].ltp;
          if (ltl < -lmax_out_ || ltl > lmax_out_) continue;
          if (ltpl < -lmax_out_ || ltpl > lmax_out_) continue;
          const double* uk_1 = u_entry(pr.u_k, std::abs(l), p, std::abs(ltl));
          const double* ukt_1 = u_entry(pr.u_kt, std::abs(l), p, std::abs(ltl));
          const double* uk_2 = u_entry(pr.u_k, std::abs(lp), pp, std::abs(ltpl));
          const double* ukt_2 = u_entry(pr.u_kt, std::abs(lp), pp, std::abs(ltpl));
          for (int ptl = 0; ptl <= pmax_out_; ++ptl) {
            OamLabel o1{ltl, ptl};
            double a_o1 = lgA(o1);
            int aw1 = aw_in - aweight(o1);
            for (int ptpl = 0; ptpl <= pmax_out_; ++ptpl) {
              OamLabel o2{ltpl, ptpl};
              double g23 = uk_1[ptl] * ukt_2[ptpl] + ukt_1[ptl] * uk_2[ptpl];
              double base = pr.pref * a_in * a_o1 * lgA(o2);
              std::complex<double> ph = phase(aw1 + aweight(o2));
              std::complex<double> v =
                  inv8pi2 * base * cands[ci].F * g23 * ph;
              visit(o1, o2, v);
            }
          }
        }
      }
      // Case 4: unprimed pair collapses onto itself.
      {
        struct Cand {
          int ltp;
          double F;
        } cands[3];
        int nc = 0;
        if (m == 0) {
          cands[nc++] = {lp, 4.0 * pi2};
        } else if (pr.both) {
          cands[nc++] = {lp, 4.0 * pi2};
        } else {
          cands[nc++] = {lp, 2.0 * pi2};
          double s = (m > 0) ? pi2 : -pi2;
          cands[nc++] = {lp + 2 * m, s};
          cands[nc++] = {lp - 2 * m, s};
        }
        for (int ci = 0; ci < nc; ++ci) {
          int ltpl = cands[ci].ltp;
          if (ltpl < -lmax_out_ || ltpl > lmax_out_) continue;
          const double* g4row = g1_entry(pr.g1, std::abs(lp), pp, std::abs(ltpl));
          for (int ptpl = 0; ptpl <= pmax_out_; ++ptpl) {
            OamLabel o2{ltpl, ptpl};
            double base = pr.pref * a_in * lgA(i1) * lgA(o2) * inv_a2(i1);
            std::complex<double> ph = phase(aw_in - aweight(i1) + aweight(o2));
            std::complex<double> v =
                -inv8pi2 * base * cands[ci].F * g4row[ptpl] * ph;
            visit(i1, o2, v);
          }
        }
      }
    }
  }

  const std::vector<ZernikeMode>& residual() const { return modes_; }

 private:
  struct Pair {
    ZernikeMode k, kt;
    int m;        // shared signed frequency; the +|m| member when both = true
    bool both;    // entry stands for the +|m| and -|m| signed pairs jointly
    double pref;  // cov * (eps/pi) * sqrt((n+1)(nt+1))
    const std::vector<double>* g1;    // table for (n, nt, |m|)
    const std::vector<double>* u_k;   // table for (n, |m|)
    const std::vector<double>* u_kt;  // table for (nt, |m|)
  };

  int aweight(const OamLabel& q) const { return 2 * q.p + std::abs(q.l); }
  double lgA(const OamLabel& q) const {
    return lg_a_[std::abs(q.l) * (pmax_out_ + 1) + q.p];
  }
  double inv_a2(const OamLabel& q) const {
    return inv_a2_[std::abs(q.l) * (pmax_out_ + 1) + q.p];
  }
  std::complex<double> phase(int dw) const { return phase_[dw + phase_off_]; }

  // Table layout: [al_in][p_in][al_out][p_out], input side first.
  int tab_index(int al, int p, int alt) const {
    return ((al * (pmax_in_ + 1) + p) * (lmax_out_ + 1) + alt) * (pmax_out_ + 1);
  }
  const double* g1_entry(const std::vector<double>* t, int al, int p, int alt) const {
    return t->data() + tab_index(al, p, alt);
  }
  const double* u_entry(const std::vector<double>* t, int al, int p, int alt) const {
    return t->data() + tab_index(al, p, alt);
  }

  void build_label_tables() {
    int lm = lmax_out_, pm = pmax_out_;
    lg_a_.resize((lm + 1) * (pm + 1));
    inv_a2_.resize((lm + 1) * (pm + 1));
    for (int al = 0; al <= lm; ++al)
      for (int q = 0; q <= pm; ++q) {
        lg_a_[al * (pm + 1) + q] = lg_norm(al, q);
        double a = lg_norm(al, q);
        inv_a2_[al * (pm + 1) + q] = 1.0 / (a * a);
      }
    int wmax = 2 * pmax_in_ + lmax_in_ + 2 * pmax_out_ + lmax_out_;
    phase_off_ = wmax;
    phase_.resize(2 * wmax + 1);
    double gouy = par_.gouy();
    for (int d = -wmax; d <= wmax; ++d)
      phase_[d + phase_off_] =
          std::complex<double>(std::cos(gouy * d), std::sin(gouy * d));
  }

  void build_pairs_and_caches() {
    // Distinct radial-sum table keys.
    std::map<std::tuple<int, int, int>, int> g1_key;   // (n, nt, |m|)
    std::map<std::pair<int, int>, int> u_key;          // (n, |m|)
    for (const ZernikeMode& a : modes_)
      for (const ZernikeMode& b : modes_) {
        if (a.m != b.m) continue;
        int am = std::abs(a.m);
        g1_key.emplace(std::make_tuple(a.n, b.n, am), 0);
        u_key.emplace(std::make_pair(a.n, am), 0);
      }
    int gi = 0;
    for (auto& kv : g1_key) kv.second = gi++;
    int ui = 0;
    for (auto& kv : u_key) kv.second = ui++;
    g1_tabs_.resize(g1_key.size());
    u_tabs_.resize(u_key.size());

    int block = (lmax_in_ + 1) * (pmax_in_ + 1) * (lmax_out_ + 1) * (pmax_out_ + 1);
    std::vector<std::tuple<int, int, int>> g1_keys(g1_key.size());
    for (auto& kv : g1_key) g1_keys[kv.second] = kv.first;
    std::vector<std::pair<int, int>> u_keys(u_key.size());
    for (auto& kv : u_key) u_keys[kv.second] = kv.first;

    double rw = par_.geom.R_over_w;
    parallel_for(g1_keys.size(), [&](std::size_t idx) {
      auto [n, nt, am] = g1_keys[idx];
      ZernikeMode k{0, n, am}, kt{0, nt, am};
      std::vector<double>& tab = g1_tabs_[idx];
      tab.assign(block, 0.0);
      for (int al = 0; al <= lmax_in_; ++al)
        for (int q = 0; q <= pmax_in_; ++q)
          for (int alt = 0; alt <= lmax_out_; ++alt)
            for (int qt = 0; qt <= pmax_out_; ++qt)
              tab[tab_index(al, q, alt) + qt] =
                  radial_G1(al, q, alt, qt, k, kt, rw);
    });
    parallel_for(u_keys.size(), [&](std::size_t idx) {
      auto [n, am] = u_keys[idx];
      std::vector<double>& tab = u_tabs_[idx];
      tab.assign(block, 0.0);
      for (int al = 0; al <= lmax_in_; ++al)
        for (int q = 0; q <= pmax_in_; ++q)
          for (int alt = 0; alt <= lmax_out_; ++alt)
            for (int qt = 0; qt <= pmax_out_; ++qt)
              tab[tab_index(al, q, alt) + qt] =
                  radial_g2_factor(al, q, alt, qt, n, am, rw);
    });

    // Complete +/-|m| partner pairs fold into one entry with pre-summed
    // angular weights; azimuthal-conservation zeros are then exact instead
    // of relying on floating-point cancellation. A truncation that splits a
    // pair leaves the orphaned signed entries in place.
    std::set<std::pair<int, int>> present;
    for (const ZernikeMode& q : modes_) present.insert({q.n, q.m});
    for (const ZernikeMode& a : modes_)
      for (const ZernikeMode& b : modes_) {
        if (a.m != b.m) continue;
        int am = std::abs(a.m);
        bool partnered = am != 0 && present.count({a.n, -a.m}) &&
                         present.count({b.n, -b.m});
        if (a.m < 0 && partnered) continue;  // folded into the +|m| entry
        double cov = coefficient_covariance(a, b, par_.geom.R_over_r0);
        double eps = (a.m != 0) ? 2.0 : 1.0;
        double pref = cov * (eps / pi) * std::sqrt((a.n + 1.0) * (b.n + 1.0));
        Pair pr;
        pr.k = a;
        pr.kt = b;
        pr.m = a.m;
        pr.both = a.m > 0 && partnered;
        pr.pref = pref;
        pr.g1 = &g1_tabs_[g1_key.at(std::make_tuple(a.n, b.n, am))];
        pr.u_k = &u_tabs_[u_key.at(std::make_pair(a.n, am))];
        pr.u_kt = &u_tabs_[u_key.at(std::make_pair(b.n, am))];
        pairs_.push_back(pr);
      }
  }

  ChannelParams par_;
  std::vector<ZernikeMode> modes_;
  std::vector<Pair> pairs_;
  std::vector<std::vector<double>> g1_tabs_, u_tabs_;
  std::vector<double> lg_a_, inv_a2_;
  std::vector<std::complex<double>> phase_;
  int phase_off_ = 0;
  int lmax_in_ = 0, pmax_in_ = 0, lmax_out_ = 0, pmax_out_ = 0;
};

// Convenience single-element evaluation. Builds the full evaluator; use
// SuperopEvaluator directly when querying many elements.
inline std::complex<double> superop_element(const OamLabel& o1, const OamLabel& o2,
                                            const OamLabel& i1, const OamLabel& i2,
                                            const ChannelParams& params) {
  return SuperopEvaluator(params).element(o1, o2, i1, i2);
}

// Full assembly. Parallel over input pairs (columns); each column is
// accumulated with per-entry compensation in a private buffer, so the
// result does not depend on the thread count.
inline SuperoperatorMatrix assemble(const ChannelParams& params) {
  params.validate();
  int d_in = params.in.dim(), d_out = params.out.dim();
  std::size_t bytes = (std::size_t)d_in * d_in * d_out * d_out * 16;
  if (bytes > (std::size_t)4 << 30)
    throw std::length_error("assemble: truncation exceeds the resource guard");
  SuperopEvaluator ev(params);
  SuperoperatorMatrix A;
  A.params = params;
  A.a.resize((Eigen::Index)d_out * d_out, (Eigen::Index)d_in * d_in);
  parallel_for((std::size_t)d_in * d_in, [&](std::size_t col) {
    OamLabel i1 = params.in.label((int)(col / d_in));
    OamLabel i2 = params.in.label((int)(col % d_in));
    std::vector<std::complex<double>> buf((std::size_t)d_out * d_out, 0.0);
    std::vector<std::complex<double>> comp((std::size_t)d_out * d_out, 0.0);
    ev.scan_column(i1, i2, [&](const OamLabel& o1, const OamLabel& o2,
                               std::complex<double> v) {
      std::size_t r = (std::size_t)params.out.index(o1) * d_out + params.out.index(o2);
      // Kahan step on both components.
      std::complex<double> y = v - comp[r];
      std::complex<double> t = buf[r] + y;
      comp[r] = (t - buf[r]) - y;
      buf[r] = t;
    });
    buf[(std::size_t)params.out.index(i1) * d_out + params.out.index(i2)] += 1.0;
    for (std::size_t r = 0; r < buf.size(); ++r) A.a((Eigen::Index)r, (Eigen::Index)col) = buf[r];
  });
  return A;
}

struct DensityMatrix {
  Truncation basis;
  Eigen::MatrixXcd mat;
  double herm_deviation = 0.0;  // max |rho - rho^dagger| seen when produced
};

inline DensityMatrix make_pure(const Truncation& basis, const Eigen::VectorXcd& psi) {
  if (psi.size() != basis.dim())
    throw std::invalid_argument("make_pure: dimension mismatch");
  double n2 = psi.squaredNorm();
  if (n2 <= 0) throw std::invalid_argument("make_pure: zero state");
  DensityMatrix rho;
  rho.basis = basis;
  rho.mat = psi * psi.adjoint() / n2;
  return rho;
}

// Applies the channel: sigma = unvec(A vec(rho)), then re-Hermitizes,
// recording the deviation.
inline DensityMatrix apply(const SuperoperatorMatrix& A, const DensityMatrix& rho) {
  int d_in = A.params.in.dim(), d_out = A.params.out.dim();
  if (rho.mat.rows() != d_in || rho.mat.cols() != d_in)
    throw std::invalid_argument("apply: density matrix outside input truncation");
  Eigen::VectorXcd v((Eigen::Index)d_in * d_in);
  for (int i = 0; i < d_in; ++i)
    for (int j = 0; j < d_in; ++j) v(i * d_in + j) = rho.mat(i, j);
  Eigen::VectorXcd s = A.a * v;
  DensityMatrix out;
  out.basis = A.params.out;
  out.mat.resize(d_out, d_out);
  for (int i = 0; i < d_out; ++i)
    for (int j = 0; j < d_out; ++j) out.mat(i, j) = s(i * d_out + j);
  Eigen::MatrixXcd dev = out.mat - out.mat.adjoint();
  out.herm_deviation = dev.cwiseAbs().maxCoeff();
  out.mat = 0.5 * (out.mat + out.mat.adjoint()).eval();
  return out;
}

struct ChoiMatrix {
  int d_in = 0, d_out = 0;
  Eigen::MatrixXcd mat;  // (d_in*d_out) square, Hermitized
  double herm_deviation = 0.0;
};

// Choi reshuffling: C[(i,o),(i',o')] = A[(o,o')][(i,i')].
inline ChoiMatrix choi(const SuperoperatorMatrix& A) {
  int d_in = A.params.in.dim(), d_out = A.params.out.dim();
  ChoiMatrix C;
  C.d_in = d_in;
  C.d_out = d_out;
  C.mat.resize((Eigen::Index)d_in * d_out, (Eigen::Index)d_in * d_out);
  for (int i = 0; i < d_in; ++i)
    for (int o = 0; o < d_out; ++o)
      for (int ip = 0; ip < d_in; ++ip)
        for (int op = 0; op < d_out; ++op)
          C.mat((Eigen::Index)i * d_out + o, (Eigen::Index)ip * d_out + op) =
              A.a((Eigen::Index)o * d_out + op, (Eigen::Index)i * d_in + ip);
  Eigen::MatrixXcd dev = C.mat - C.mat.adjoint();
  C.herm_deviation = dev.cwiseAbs().maxCoeff();
  C.mat = 0.5 * (C.mat + C.mat.adjoint()).eval();
  return C;
}

struct KrausSet {
  int d_in = 0, d_out = 0;
  std::vector<double> weights;            // descending eigenvalues of the Choi form
  std::vector<Eigen::MatrixXcd> ops;      // unit-Frobenius d_out x d_in maps
  double clipped_mass = 0.0;              // total negative eigenvalue mass removed
  double dropped_mass = 0.0;              // small positive mass below neg_tol
};

// Spectral Kraus extraction. Negative eigenvalue mass up to 1e-3 of the
// trace is clipped (first-order tensors can dip slightly negative);
// anything worse aborts.
inline KrausSet kraus_decompose(const ChoiMatrix& C, double neg_tol) {
  if (neg_tol < 0) throw std::invalid_argument("kraus_decompose: neg_tol < 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(C.mat);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("kraus_decompose: eigensolver failed");
  const auto& vals = es.eigenvalues();
  double trace = vals.sum();
  if (trace <= 0) throw std::runtime_error("kraus_decompose: non-positive trace");
  KrausSet ks;
  ks.d_in = C.d_in;
  ks.d_out = C.d_out;
  for (Eigen::Index idx = vals.size() - 1; idx >= 0; --idx) {
    double lam = vals(idx);
    if (lam < 0) {
      ks.clipped_mass += -lam;
      continue;
    }
    if (lam <= neg_tol * trace) {
      ks.dropped_mass += lam;
      continue;
    }
    Eigen::MatrixXcd K(C.d_out, C.d_in);
    for (int i = 0; i < C.d_in; ++i)
      for (int o = 0; o < C.d_out; ++o)
        K(o, i) = es.eigenvectors()((Eigen::Index)i * C.d_out + o, idx);
    ks.weights.push_back(lam);
    ks.ops.push_back(std::move(K));
  }
  if (ks.clipped_mass > 1e-3 * trace)
    throw std::runtime_error(
        "kraus_decompose: negative mass exceeds 1e-3 of trace; "
        "first-order treatment unreliable at these parameters");
  return ks;
}

// Uhlmann fidelity F = Tr sqrt(sqrt(rho) sigma sqrt(rho)).
inline double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.mat.rows() != sigma.mat.rows())
    throw std::invalid_argument("state_fidelity: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> er(rho.mat);
  Eigen::VectorXd lam = er.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXcd sq =
      er.eigenvectors() * lam.asDiagonal() * er.eigenvectors().adjoint();
  Eigen::MatrixXcd mid = sq * sigma.mat * sq;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> em(mid);
  double f = 0.0;
  for (Eigen::Index i = 0; i < em.eigenvalues().size(); ++i)
    f += std::sqrt(std::max(0.0, em.eigenvalues()(i)));
  return f;
}

// Pure-state fast path: F = sqrt(<psi| sigma |psi>).
inline double state_fidelity_pure(const Eigen::VectorXcd& psi,
                                  const DensityMatrix& sigma) {
  if (psi.size() != sigma.mat.rows())
    throw std::invalid_argument("state_fidelity_pure: dimension mismatch");
  std::complex<double> q = psi.dot(sigma.mat * psi);
  return std::sqrt(std::max(0.0, q.real() / psi.squaredNorm()));
}

struct MinFidelityOptions {
  int n_starts = 64;
  int max_iters = 2000;
  double tol = 1e-8;          // absolute change of F between accepted steps
  std::uint64_t seed = 0x6f616d616f5f6d66ull;
};

struct MinFidelityResult {
  double f_min = 1.0;
  Eigen::VectorXcd state;     // argmin input state, unit norm
  int best_start = -1;
  int converged_starts = 0;
  int iterations = 0;         // iterations used by the winning start
  double grad_norm = 0.0;     // Riemannian gradient norm at the minimum
};

namespace detail {

// Normal variates from explicit bit manipulation; stable across platforms.
inline double uniform01(std::mt19937_64& rng) {
  return ((rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}
inline double normal(std::mt19937_64& rng) {
  // Box-Muller; one value per call keeps the call sequence deterministic.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
}

}  // namespace detail

// Worst-case pure-state channel fidelity over the input truncation:
//   F(psi) = sqrt(<psi| A(|psi><psi|) |psi>),
// minimized by multi-start projected gradient descent on the unit sphere.
// The output truncation of A must cover the input truncation; rows outside
// the input set do not contribute to the overlap and are ignored.
inline MinFidelityResult min_channel_fidelity(const SuperoperatorMatrix& A,
                                              const MinFidelityOptions& opts = {}) {
  int d = A.params.in.dim();
  int d_out = A.params.out.dim();
  // Restriction of the output-pair rows to input-truncation labels.
  Eigen::MatrixXcd B((Eigen::Index)d * d, (Eigen::Index)d * d);
  for (int o1 = 0; o1 < d; ++o1)
    for (int o2 = 0; o2 < d; ++o2) {
      OamLabel a = A.params.in.label(o1), b = A.params.in.label(o2);
      Eigen::Index src = (Eigen::Index)A.params.out.index(a) * d_out +
                         A.params.out.index(b);
      B.row((Eigen::Index)o1 * d + o2) = A.a.row(src);
    }
  Eigen::MatrixXcd Bh = B.adjoint();

  auto vec_of = [d](const Eigen::VectorXcd& psi) {
    Eigen::VectorXcd v((Eigen::Index)d * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) v(i * (Eigen::Index)d + j) = psi(i) * std::conj(psi(j));
    return v;
  };
  auto unvec_h = [d](const Eigen::VectorXcd& s) {
    Eigen::MatrixXcd M(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) M(i, j) = s(i * (Eigen::Index)d + j);
    return ((M + M.adjoint()) * 0.5).eval();
  };

  struct StartResult {
    double f = 1.0;
    Eigen::VectorXcd psi;
    bool converged = false;
    int iters = 0;
    double gnorm = 0.0;
  };
  std::vector<StartResult> results(opts.n_starts);

  parallel_for(opts.n_starts, [&](std::size_t s) {
    std::seed_seq sq{(std::uint32_t)(opts.seed & 0xffffffffu),
                     (std::uint32_t)(opts.seed >> 32), (std::uint32_t)s};
    std::mt19937_64 rng(sq);
    Eigen::VectorXcd psi(d);
    for (int i = 0; i < d; ++i)
      psi(i) = std::complex<double>(detail::normal(rng), detail::normal(rng));
    psi.normalize();

    auto f_quartic = [&](const Eigen::VectorXcd& q, Eigen::MatrixXcd* sig) {
      Eigen::VectorXcd sv = B * vec_of(q);
      Eigen::MatrixXcd sg = unvec_h(sv);
      if (sig) *sig = sg;
      return q.dot(sg * q).real();
    };

    Eigen::MatrixXcd sigma;
    double f = f_quartic(psi, &sigma);
    double eta = 0.5;
    StartResult res;
    int it = 0;
    for (; it < opts.max_iters; ++it) {
      Eigen::MatrixXcd sigt = unvec_h(Bh * vec_of(psi));
      Eigen::VectorXcd g = (sigma + sigt) * psi;
      double inner = psi.dot(g).real();
      Eigen::VectorXcd rg = g - inner * psi;
      double gn = rg.norm();
      res.gnorm = gn;
      if (gn < 1e-12) {
        res.converged = true;
        break;
      }
      bool accepted = false;
      double f_new = f;
      Eigen::VectorXcd cand;
      Eigen::MatrixXcd sigma_new;
      for (int bt = 0; bt < 60; ++bt) {
        cand = (psi - eta * rg).normalized();
        f_new = f_quartic(cand, &sigma_new);
        if (f_new <= f - 1e-4 * eta * gn * gn) {
          accepted = true;
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) {
        res.converged = true;  // no descent direction at floating precision
        break;
      }
      double df = std::sqrt(std::max(0.0, f)) - std::sqrt(std::max(0.0, f_new));
      psi = cand;
      f = f_new;
      sigma = sigma_new;
      eta = std::min(eta * 2.0, 64.0);
      if (df < opts.tol && it > 2) {
        res.converged = true;
        ++it;
        break;
      }
    }
    res.f = std::sqrt(std::max(0.0, f));
    res.psi = psi;
    res.iters = it;
    results[s] = std::move(res);
  });

  MinFidelityResult out;
  out.f_min = 2.0;
  for (int s = 0; s < opts.n_starts; ++s) {
    if (results[s].converged) ++out.converged_starts;
    if (results[s].f < out.f_min) {
      out.f_min = results[s].f;
      out.state = results[s].psi;
      out.best_start = s;
      out.iterations = results[s].iters;
      out.grad_norm = results[s].gnorm;
    }
  }
  return out;
}

// Probability of measuring `out` given input `in`; the real diagonal of the
// superoperator. A tiny imaginary residue is reported through imag_dev.
inline double transition_probability(const SuperoperatorMatrix& A, const OamLabel& in,
                                     const OamLabel& out, double* imag_dev = nullptr) {
  std::complex<double> v =
      A.a(A.row_index(out, out), A.col_index(in, in));
  if (imag_dev) *imag_dev = std::fabs(v.imag());
  return std::min(1.0, std::max(0.0, v.real()));
}

}  // namespace oamao
