#ifndef BOLTZ_COLLISION_HPP
#define BOLTZ_COLLISION_HPP

#include <Eigen/Dense>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>
#include <gsl/gsl_sf_gamma.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "grids.hpp"

namespace boltz {

// q0 as a function of |cos theta|; normalized per relative velocity so the
// discrete angular mass is exactly 1
struct AngularKernel {
  double power = 0.0;  // 0 = constant

  static AngularKernel parse(const std::string& s) {
    if (s == "constant") return {};
    const std::string pre = "cos_power:";
    if (s.rfind(pre, 0) == 0) {
      AngularKernel q;
      q.power = parse_double(s.substr(pre.size()));
      require(q.power >= 0.0 && q.power <= 16.0, "cos_power exponent must lie in [0, 16]");
      return q;
    }
    throw Error(ErrorKind::Parse, "unknown angular kernel '" + s + "'");
  }
  std::string spec() const { return power == 0.0 ? "constant" : "cos_power:" + fmt(power); }
  double operator()(double c) const { return power == 0.0 ? 1.0 : std::pow(std::abs(c), power); }
  // integral of |omega . e|^power over the unit sphere in R^d
  double mass(int d) const {
    if (d == 3) return 4.0 * kPi / (power + 1.0);
    return 2.0 * std::sqrt(kPi) * std::exp(gsl_sf_lngamma(0.5 * (power + 1.0)) - gsl_sf_lngamma(0.5 * power + 1.0));
  }
};

// Directions on a half sphere (omega and -omega give the same collision),
// weights summing to 1.
struct SphereRule {
  int d = 0;
  std::vector<std::array<double, 3>> omega;
  Vec weight;
};

inline SphereRule sphere_rule(int d, int order) {
  require(d == 2 || d == 3, "collision operator supports d = 2 or 3");
  require(order >= 2 && order % 2 == 0, "sphere rule order must be even and >= 2");
  SphereRule r;
  r.d = d;
  if (d == 2) {
    for (int k = 0; k < order; ++k) {
      double a = (k + 0.5) * kPi / order;
      r.omega.push_back({std::cos(a), std::sin(a), 0.0});
      r.weight.push_back(1.0 / order);
    }
    return r;
  }
  const int nphi = 2 * order;
  gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(order);
  for (int i = 0; i < order; ++i) {
    double c = 0.0, w = 0.0;
    gsl_integration_glfixed_point(0.0, 1.0, i, &c, &w, t);
    double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (int j = 0; j < nphi; ++j) {
      double p = (j + 0.5) * 2.0 * kPi / nphi;
      r.omega.push_back({s * std::cos(p), s * std::sin(p), c});
      r.weight.push_back(w / nphi);
    }
  }
  gsl_integration_glfixed_table_free(t);
  return r;
}

struct CollisionSpec {
  int d = 3;
  double gamma = 1.0;
  double vmax = 6.0;
  int n = 24;
  int order = 4;
  std::string q0 = "constant";
  double beta = -1.0;  // < 0: d/2 + 1
  double asym_tol = 1e-3;
  int workers = 1;

  double beta_value() const { return beta < 0.0 ? 0.5 * d + 1.0 : beta; }
  void validate() const {
    require(d == 2 || d == 3, "collision operator supports d = 2 or 3");
    require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    require(beta < 0.0 || beta > 0.5 * d, "beta must exceed d/2");
    require(asym_tol > 0.0, "asymmetry tolerance must be positive");
    AngularKernel::parse(q0);
  }
  // identifies the kernel table; beta and tolerances do not enter it
  std::string key() const {
    return "boltz-kernel-v4 d=" + std::to_string(d) + " gamma=" + fmt(gamma) + " vmax=" + fmt(vmax) +
           " n=" + std::to_string(n) + " order=" + std::to_string(order) + " q0=" + AngularKernel::parse(q0).spec();
  }
  std::string hash() const { return Fnv1a().str(key()).hex(); }
};

struct KernelStats {
  double asymmetry = 0.0;     // ||K - K^T||_F / ||K||_F in the symmetric frame, before symmetrization
  Vec null_raw;               // |L phi| / |nu phi| per invariant, before symmetrization
  Vec null_sym;               // same after symmetrization, before the null-space correction
  double self_share = 0.0;    // max over nodes of the own-cell integral / nu
  double seconds = 0.0;
  bool from_cache = false;
};

class CollisionModel {
 public:
  CollisionSpec spec;
  VelocityGrid grid;
  SphereRule rule;
  AngularKernel q0;
  double beta = 0.0;
  Vec nu;
  Vec sqrt_mu;
  Vec sqrt_w;
  Eigen::MatrixXd Khat;  // W^{1/2} K W^{-1/2}, symmetric, null space corrected
  Eigen::MatrixXd U;     // orthonormal W^{1/2} {sqrt(mu), v sqrt(mu), |v|^2 sqrt(mu)}
  KernelStats stats;

  bool assembled() const { return Khat.rows() == grid.size(); }
  int size() const { return grid.size(); }
};

namespace detail {

inline double rel_pow(double r, double gamma) { return gamma == 1.0 ? r : std::pow(r, gamma); }

// per-difference coefficient tables: |D h|^gamma and angular weights
struct PairTable {
  int d = 0, n = 0, m = 0;  // m = 2n - 1 differences per axis
  Vec base;                  // |D h|^gamma
  Vec qnorm;                 // 1 / sum_k w_k q0(Dhat . omega_k), or 1 for constant
  int index(const int* D) const {
    int r = 0;
    for (int k = 0; k < d; ++k) r = r * m + (D[k] + n - 1);
    return r;
  }
};

inline PairTable pair_table(const VelocityGrid& g, const SphereRule& rule, const AngularKernel& q0, double gamma) {
  PairTable t;
  t.d = g.dim();
  t.n = g.n();
  t.m = 2 * t.n - 1;
  int total = 1;
  for (int k = 0; k < t.d; ++k) total *= t.m;
  t.base.assign(total, 0.0);
  t.qnorm.assign(total, 1.0);
  std::vector<int> D(t.d);
  for (int idx = 0; idx < total; ++idx) {
    int r = idx;
    double s = 0.0;
    for (int k = t.d - 1; k >= 0; --k) {
      D[k] = r % t.m - (t.n - 1);
      r /= t.m;
      s += double(D[k]) * D[k];
    }
    double len = std::sqrt(s);
    t.base[idx] = len == 0.0 ? 0.0 : rel_pow(len * g.h(), gamma);
    if (q0.power != 0.0 && len > 0.0) {
      double z = 0.0;
      for (std::size_t k = 0; k < rule.omega.size(); ++k) {
        double c = 0.0;
        for (int a = 0; a < t.d; ++a) c += D[a] * rule.omega[k][a];
        z += rule.weight[k] * q0(c / len);
      }
      t.qnorm[idx] = z > 0.0 ? 1.0 / z : 0.0;
    }
  }
  return t;
}

inline double angular_weight(const SphereRule& rule, const AngularKernel& q0, const PairTable& t, int didx,
                             std::size_t k, double proj, double len) {
  if (q0.power == 0.0) return rule.weight[k];
  return rule.weight[k] * q0(proj / len) * t.qnorm[didx];
}

// Gain sweep: out[I] += sum_{D,omega} c(D,omega) m[I-D] A(I-D+delta) B(I-delta),
// multilinear interpolation, stencils leaving the grid dropped.
template <int DIM>
void gain_sweep(const VelocityGrid& g, const SphereRule& rule, const AngularKernel& q0, const PairTable& t,
                const double* A, const double* B, const double* m, const double* aabs, const double* babs,
                double* out, double& kept) {
  constexpr int C = 1 << DIM;
  const int n = g.n();
  int stride[DIM];
  for (int k = 0; k < DIM; ++k) stride[k] = g.stride(k);
  int D[DIM];
  for (int k = 0; k < DIM; ++k) D[k] = -(n - 1);
  const int total = static_cast<int>(t.base.size());
  double kept_sum = 0.0;
  for (int didx = 0; didx < total; ++didx) {
    if (didx) {
      for (int k = DIM - 1; k >= 0; --k) {
        if (++D[k] <= n - 1) break;
        D[k] = -(n - 1);
      }
    }
    const double base = t.base[didx];
    if (base == 0.0) continue;
    double len2 = 0.0;
    int Dlin = 0;
    for (int k = 0; k < DIM; ++k) {
      len2 += double(D[k]) * D[k];
      Dlin += D[k] * stride[k];
    }
    const double len = std::sqrt(len2);
    for (std::size_t w = 0; w < rule.omega.size(); ++w) {
      const auto& om = rule.omega[w];
      double proj = 0.0;
      for (int k = 0; k < DIM; ++k) proj += D[k] * om[k];
      const double c = base * angular_weight(rule, q0, t, didx, w, proj, len);
      if (c == 0.0) continue;
      int lo[DIM], hi[DIM], bu[DIM], bv[DIM];
      double su[DIM], tv[DIM];
      bool empty = false;
      for (int k = 0; k < DIM; ++k) {
        double del = proj * om[k];
        bu[k] = static_cast<int>(std::floor(del));
        su[k] = del - bu[k];
        bv[k] = static_cast<int>(std::floor(-del));
        tv[k] = -del - bv[k];
        int l = std::max({0, D[k], D[k] - bu[k], -bv[k]});
        int h = std::min({n - 1, n - 1 + D[k], n - 1 + D[k] - bu[k] - (su[k] > 0.0), n - 1 - bv[k] - (tv[k] > 0.0)});
        lo[k] = l;
        hi[k] = h;
        if (l > h) empty = true;
      }
      if (empty) continue;
      double wu[C], wv[C];
      int ou[C], ov[C];
      for (int cc = 0; cc < C; ++cc) {
        double a = 1.0, b = 1.0;
        int oa = 0, ob = 0;
        for (int k = 0; k < DIM; ++k) {
          int bit = (cc >> (DIM - 1 - k)) & 1;
          a *= bit ? su[k] : 1.0 - su[k];
          b *= bit ? tv[k] : 1.0 - tv[k];
          oa += (-D[k] + bu[k] + (bit && su[k] > 0.0)) * stride[k];
          ob += (bv[k] + (bit && tv[k] > 0.0)) * stride[k];
        }
        wu[cc] = a;
        wv[cc] = b;
        ou[cc] = oa;
        ov[cc] = ob;
      }
      // iterate the box, last axis innermost
      int I[DIM];
      for (int k = 0; k < DIM; ++k) I[k] = lo[k];
      const int len_last = hi[DIM - 1] - lo[DIM - 1] + 1;
      while (true) {
        int row = 0;
        for (int k = 0; k < DIM; ++k) row += I[k] * stride[k];
        double* o = out + row;
        const double* mj = m + row - Dlin;
        const double* aj = aabs + row - Dlin;
        const double* bi = babs + row;
        double ks = 0.0;
#pragma omp simd reduction(+ : ks)
        for (int i = 0; i < len_last; ++i) {
          double a = 0.0, b = 0.0;
          for (int cc = 0; cc < C; ++cc) {
            a += wu[cc] * A[row + i + ou[cc]];
            b += wv[cc] * B[row + i + ov[cc]];
          }
          o[i] += c * mj[i] * a * b;
          ks += aj[i] * bi[i];
        }
        kept_sum += c * ks;
        int k = DIM - 2;
        for (; k >= 0; --k) {
          if (++I[k] <= hi[k]) break;
          I[k] = lo[k];
        }
        if (k < 0) break;
      }
    }
  }
  kept += kept_sum;
}

// out[I] = sum_J m[J] |v_I - v_J|^gamma A[J]
inline void loss_convolution(const VelocityGrid& g, const PairTable& t, const double* m, const double* A,
                             double* out) {
  const int N = g.size(), d = g.dim();
  std::vector<int> mi(d), mj(d), D(d);
  std::vector<int> multi(static_cast<std::size_t>(N) * d);
  for (int i = 0; i < N; ++i) g.multi(i, multi.data() + static_cast<std::size_t>(i) * d);
  for (int i = 0; i < N; ++i) {
    const int* a = multi.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < N; ++j) {
      const int* b = multi.data() + static_cast<std::size_t>(j) * d;
      int idx = 0;
      for (int k = 0; k < d; ++k) idx = idx * t.m + (a[k] - b[k] + t.n - 1);
      s += t.base[idx] * m[j] * A[j];
    }
    out[i] = s;
  }
}

inline std::vector<Vec> invariants(const VelocityGrid& g) {
  const int N = g.size(), d = g.dim();
  std::vector<Vec> phi(d + 2, Vec(N));
  for (int i = 0; i < N; ++i) {
    phi[0][i] = 1.0;
    for (int k = 0; k < d; ++k) phi[1 + k][i] = g.coord(i, k);
    phi[d + 1][i] = g.v2(i);
  }
  return phi;
}

// removes sum_a c_a s phi_a so that sum_i w_i q_i out_i phi_b = 0 for every b
inline double project_out(const VelocityGrid& g, const Vec& s, const Vec& q, double* out) {
  auto phi = invariants(g);
  const int M = static_cast<int>(phi.size()), N = g.size();
  Eigen::MatrixXd G(M, M);
  Eigen::VectorXd r(M);
  double scale = 0.0, defect = 0.0;
  for (int a = 0; a < M; ++a) {
    double ra = 0.0, sa = 0.0;
    for (int i = 0; i < N; ++i) {
      ra += g.weight(i) * q[i] * out[i] * phi[a][i];
      sa += g.weight(i) * std::abs(q[i] * out[i] * phi[a][i]);
    }
    r[a] = ra;
    scale = std::max(scale, sa);
    defect = std::max(defect, std::abs(ra));
    for (int b = 0; b < M; ++b) {
      double gab = 0.0;
      for (int i = 0; i < N; ++i) gab += g.weight(i) * q[i] * s[i] * phi[a][i] * phi[b][i];
      G(a, b) = gab;
    }
  }
  Eigen::VectorXd c = G.ldlt().solve(r);
  for (int i = 0; i < N; ++i) {
    double corr = 0.0;
    for (int a = 0; a < M; ++a) corr += c[a] * phi[a][i];
    out[i] -= s[i] * corr;
  }
  return scale > 0.0 ? defect / scale : 0.0;
}

struct Symmetry {
  std::vector<std::vector<int>> perm;  // perm[g][i] = g(i)
};

// Grid symmetries (k is invariant under all of them): reflections of every
// axis and the exchange of axes 0 and 1.
inline Symmetry grid_symmetry(const VelocityGrid& g) {
  const int d = g.dim(), n = g.n(), N = g.size();
  Symmetry s;
  std::vector<int> m(d), q(d);
  for (int swap = 0; swap < 2; ++swap)
    for (int flips = 0; flips < (1 << d); ++flips) {
      std::vector<int> p(N);
      for (int i = 0; i < N; ++i) {
        g.multi(i, m.data());
        for (int k = 0; k < d; ++k) q[k] = m[k];
        if (swap) std::swap(q[0], q[1]);
        for (int k = 0; k < d; ++k)
          if ((flips >> k) & 1) q[k] = n - 1 - q[k];
        p[i] = g.index(q.data());
      }
      s.perm.push_back(std::move(p));
    }
  return s;
}

// Pointwise k = k2 - k1 after the Carleman change of variables. For a pair
// (v, v') with s = |v' - v|, e = (v' - v)/s and p the part of v orthogonal to e,
//   k2 = exp(-((v.e)^2 + (v'.e)^2)/4) (2 A_a(|p|, s)/s^{d-1} + 2 A_b(|p|, s)/s)
// where A_a, A_b are integrals over the hyperplane orthogonal to e reduced to
// one radial variable. They depend on (|p|, s) only and are tabulated.
class CarlemanTable {
 public:
  CarlemanTable() = default;
  CarlemanTable(int d, double gamma, const AngularKernel& q0, double pmax, double smax, double step = 0.04)
      : d_(d), step_(step) {
    np_ = static_cast<int>(std::ceil(pmax / step)) + 3;
    ns_ = static_cast<int>(std::ceil(smax / step)) + 3;
    Aa_.resize(static_cast<std::size_t>(np_) * ns_);
    Ab_.resize(Aa_.size());
    const double cq = 1.0 / q0.mass(d);
    const int nodes = 12;
    gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(nodes);
    for (int is = 0; is < ns_; ++is) {
      const double s = is * step;
      for (int ip = 0; ip < np_; ++ip) {
        const double P = ip * step;
        const double lo = std::max(0.0, P - 9.0), hi = P + 9.0;
        const int panels = static_cast<int>(std::ceil((hi - lo) / 3.0));
        double sa = 0.0, sb = 0.0;
        for (int q = 0; q < panels; ++q) {
          const double a = lo + (hi - lo) * q / panels, b = lo + (hi - lo) * (q + 1) / panels;
          for (int k = 0; k < nodes; ++k) {
            double r = 0.0, w = 0.0;
            gsl_integration_glfixed_point(a, b, k, &r, &w, gl);
            const double z2 = r * r + s * s;
            if (z2 == 0.0) continue;
            const double z = std::sqrt(z2), zg = rel_pow(z, gamma);
            double J = d == 3 ? 2.0 * kPi * gsl_sf_bessel_I0_scaled(r * P) : 1.0 + std::exp(-2.0 * r * P);
            J *= w * std::exp(-0.5 * sqr(r - P)) * zg * cq;
            sa += (d == 3 ? r : 1.0) * q0(s / z) * J;
            sb += q0(r / z) * J;
          }
        }
        Aa_[static_cast<std::size_t>(is) * np_ + ip] = sa;
        Ab_[static_cast<std::size_t>(is) * np_ + ip] = sb;
      }
    }
    gsl_integration_glfixed_table_free(gl);
  }

  bool empty() const { return Aa_.empty(); }

  // k(v, v') for v != v'
  double kernel(const double* v, const double* vp, double gamma) const {
    double s2 = 0.0, v2 = 0.0, w2 = 0.0, a = 0.0;
    for (int k = 0; k < d_; ++k) {
      double e = vp[k] - v[k];
      s2 += e * e;
      v2 += v[k] * v[k];
      w2 += vp[k] * vp[k];
      a += v[k] * e;
    }
    const double s = std::sqrt(s2);
    a /= s;
    const double b = a + s;
    const double P = std::sqrt(std::max(0.0, v2 - a * a));
    double A, B;
    interp(P, s, A, B);
    const double k2 = std::exp(-0.25 * (a * a + b * b)) * 2.0 * (A / (d_ == 3 ? s2 : s) + B / s);
    return k2 - rel_pow(s, gamma) * std::exp(-0.25 * (v2 + w2));
  }

  // integral of k(v, v + V) over the box lo <= V <= hi (lo <= 0 <= hi), split
  // into one pyramid per face with apex at the singular point
  double self_cell(const double* v, const double* lo, const double* hi, double gamma) const {
    const int nt = 10, ny = 8;
    gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(nt);
    gsl_integration_glfixed_table* gy = gsl_integration_glfixed_table_alloc(ny);
    double total = 0.0, vp[3];
    for (int ax = 0; ax < d_; ++ax)
      for (int side = 0; side < 2; ++side) {
        const double c = side ? hi[ax] : lo[ax];
        if (c == 0.0) continue;
        int other[2], no = 0;
        for (int k = 0; k < d_; ++k)
          if (k != ax) other[no++] = k;
        const int cnt = no == 2 ? ny * ny : ny;
        for (int f = 0; f < cnt; ++f) {
          double y[3], wy = 1.0;
          y[ax] = c;
          for (int o = 0, r = f; o < no; ++o, r /= ny) {
            double x = 0.0, w = 0.0;
            gsl_integration_glfixed_point(lo[other[o]], hi[other[o]], r % ny, &x, &w, gy);
            y[other[o]] = x;
            wy *= w;
          }
          for (int it = 0; it < nt; ++it) {
            double t = 0.0, wt = 0.0;
            gsl_integration_glfixed_point(0.0, 1.0, it, &t, &wt, gl);
            for (int k = 0; k < d_; ++k) vp[k] = v[k] + t * y[k];
            total += wy * wt * std::abs(c) * std::pow(t, d_ - 1) * kernel(v, vp, gamma);
          }
        }
      }
    gsl_integration_glfixed_table_free(gl);
    gsl_integration_glfixed_table_free(gy);
    return total;
  }

  // leading singular part of k at v: k ~ c(e)/s^{d-1} as v' = v + s e, s -> 0
  double singular_coeff(const double* v, const double* e) const {
    double v2 = 0.0, a = 0.0;
    for (int k = 0; k < d_; ++k) {
      v2 += v[k] * v[k];
      a += v[k] * e[k];
    }
    double A, B;
    interp(std::sqrt(std::max(0.0, v2 - a * a)), 0.0, A, B);
    return 2.0 * std::exp(-0.5 * a * a) * (d_ == 3 ? A : A + B);
  }

  // integral of c(x/|x|)/|x|^{d-1} over the box lo <= x <= hi (lo <= 0 <= hi);
  // the radial part of each face pyramid is exact, faces use panels graded
  // towards the foot of the perpendicular
  double singular_box(const double* v, const double* lo, const double* hi) const {
    const int ng = 6;
    gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(ng);
    double total = 0.0;
    for (int ax = 0; ax < d_; ++ax)
      for (int side = 0; side < 2; ++side) {
        const double c = side ? hi[ax] : lo[ax];
        if (c == 0.0) continue;
        int other[2], no = 0;
        for (int k = 0; k < d_; ++k)
          if (k != ax) other[no++] = k;
        // per other axis: signed panel list covering [lo, hi]
        std::vector<std::pair<double, double>> pan[2];
        for (int o = 0; o < no; ++o)
          for (double ext : {lo[other[o]], hi[other[o]]}) {
            if (ext == 0.0) continue;
            double prev = 0.0, L = std::abs(ext), sg = ext < 0 ? -1.0 : 1.0;
            for (double b = 0.5 * std::abs(c); prev < L; b *= 2.0) {
              double nb = std::min(b, L);
              if (L - nb < 0.25 * (nb - prev)) nb = L;
              pan[o].push_back({sg * prev, sg * nb});
              prev = nb;
            }
          }
        if (no == 1) pan[1].push_back({0.0, 1.0});
        double y[3], e[3];
        y[ax] = c;
        for (const auto& p0 : pan[0])
          for (const auto& p1 : pan[1])
            for (int i0 = 0; i0 < ng; ++i0)
              for (int i1 = 0; i1 < (no == 2 ? ng : 1); ++i1) {
                double x0, w0, x1 = 0.0, w1 = 1.0;
                gsl_integration_glfixed_point(p0.first, p0.second, i0, &x0, &w0, gl);
                if (no == 2) gsl_integration_glfixed_point(p1.first, p1.second, i1, &x1, &w1, gl);
                y[other[0]] = x0;
                if (no == 2) y[other[1]] = x1;
                double r2 = 0.0;
                for (int k = 0; k < d_; ++k) r2 += y[k] * y[k];
                const double r = std::sqrt(r2);
                for (int k = 0; k < d_; ++k) e[k] = y[k] / r;
                total += std::abs(w0 * w1) * std::abs(c) * singular_coeff(v, e) / std::pow(r, d_ - 1);
              }
      }
    gsl_integration_glfixed_table_free(gl);
    return total;
  }

 private:
  int d_ = 0, np_ = 0, ns_ = 0;
  double step_ = 0.0;
  Vec Aa_, Ab_;

  // 4x4 Lagrange interpolation; both tables are even in |p| and in s
  void interp(double P, double s, double& A, double& B) const {
    double x = P / step_, y = s / step_;
    int ix = std::min(static_cast<int>(x), np_ - 3), iy = std::min(static_cast<int>(y), ns_ - 3);
    double fx = x - ix, fy = y - iy;
    auto lag = [](double t, double* c) {
      c[0] = -t * (t - 1) * (t - 2) / 6;
      c[1] = (t + 1) * (t - 1) * (t - 2) / 2;
      c[2] = -(t + 1) * t * (t - 2) / 2;
      c[3] = (t + 1) * t * (t - 1) / 6;
    };
    double cx[4], cy[4];
    lag(fx, cx);
    lag(fy, cy);
    A = B = 0.0;
    for (int j = 0; j < 4; ++j) {
      int r = std::abs(iy - 1 + j);
      double ra = 0.0, rb = 0.0;
      for (int i = 0; i < 4; ++i) {
        int c = std::abs(ix - 1 + i);
        std::size_t idx = static_cast<std::size_t>(r) * np_ + c;
        ra += cx[i] * Aa_[idx];
        rb += cx[i] * Ab_[idx];
      }
      A += cy[j] * ra;
      B += cy[j] * rb;
    }
  }
};

inline CarlemanTable carleman_table(const CollisionModel& M) {
  const double V = M.grid.vmax(), rd = std::sqrt(double(M.grid.dim()));
  return CarlemanTable(M.grid.dim(), M.spec.gamma, M.q0, rd * V + 0.5, 2.0 * rd * V + 0.5);
}

inline std::string cache_dir() {
  if (const char* e = std::getenv("BOLTZ_CACHE_DIR"); e && *e) return e;
  return "kernel-cache";
}

}  // namespace detail

// nu(v) = sum_j w_j |v - u_j|^gamma mu(u_j); angular mass is 1 by normalization
inline double collision_frequency(const CollisionModel& M, const double* v) {
  const VelocityGrid& g = M.grid;
  double s = 0.0;
  for (int j = 0; j < g.size(); ++j) {
    double r2 = 0.0;
    for (int k = 0; k < g.dim(); ++k) r2 += sqr(v[k] - g.coord(j, k));
    if (r2 == 0.0) continue;
    s += g.weight(j) * detail::rel_pow(std::sqrt(r2), M.spec.gamma) * M.sqrt_mu[j] * M.sqrt_mu[j];
  }
  return s;
}

// grid, quadrature and nu; the kernel table comes from assemble_L
inline CollisionModel make_model(const CollisionSpec& spec) {
  spec.validate();
  CollisionModel M;
  M.spec = spec;
  M.grid = VelocityGrid(spec.d, spec.vmax, spec.n);
  M.rule = sphere_rule(spec.d, spec.order);
  M.q0 = AngularKernel::parse(spec.q0);
  M.beta = spec.beta_value();
  M.sqrt_mu = M.grid.sqrt_mu();
  const int N = M.grid.size();
  M.sqrt_w.resize(N);
  for (int i = 0; i < N; ++i) M.sqrt_w[i] = std::sqrt(M.grid.weight(i));
  auto t = detail::pair_table(M.grid, M.rule, M.q0, spec.gamma);
  Vec mu = M.grid.mu(), ones(N, 1.0);
  M.nu.resize(N);
  detail::loss_convolution(M.grid, t, M.grid.weights().data(), mu.data(), M.nu.data());
  auto phi = detail::invariants(M.grid);
  M.U.resize(N, phi.size());
  for (std::size_t a = 0; a < phi.size(); ++a)
    for (int i = 0; i < N; ++i) M.U(i, a) = M.sqrt_w[i] * M.sqrt_mu[i] * phi[a][i];
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M.U);
  M.U = qr.householderQ() * Eigen::MatrixXd::Identity(N, phi.size());
  return M;
}

namespace detail {

template <class Mat>
Vec null_residuals(const CollisionModel& M, const Mat& K) {
  auto phi = invariants(M.grid);
  const int N = M.grid.size();
  Vec r;
  for (const auto& p : phi) {
    Eigen::VectorXd psi(N), nupsi(N);
    for (int i = 0; i < N; ++i) {
      psi[i] = M.sqrt_w[i] * M.sqrt_mu[i] * p[i];
      nupsi[i] = M.nu[i] * psi[i];
    }
    Eigen::VectorXd res = nupsi - K * psi;
    r.push_back(res.norm() / nupsi.norm());
  }
  return r;
}

// relative Frobenius asymmetry, tiled to stay in cache
inline double asymmetry(const Eigen::MatrixXd& A) {
  const int N = static_cast<int>(A.rows()), B = 64;
  double num = 0.0, den = 0.0;
  for (int jb = 0; jb < N; jb += B)
    for (int ib = 0; ib <= jb; ib += B)
      for (int j = jb; j < std::min(N, jb + B); ++j)
        for (int i = ib; i < std::min(N, ib + B) && i <= j; ++i) {
          if (i == j) {
            den += sqr(A(i, i));
            continue;
          }
          num += 2.0 * sqr(A(i, j) - A(j, i));
          den += sqr(A(i, j)) + sqr(A(j, i));
        }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

inline void symmetrize(Eigen::MatrixXd& A) {
  const int N = static_cast<int>(A.rows()), B = 64;
  for (int jb = 0; jb < N; jb += B)
    for (int ib = 0; ib <= jb; ib += B)
      for (int j = jb; j < std::min(N, jb + B); ++j)
        for (int i = ib; i < std::min(N, ib + B) && i < j; ++i) {
          double a = 0.5 * (A(i, j) + A(j, i));
          A(i, j) = a;
          A(j, i) = a;
        }
}

inline bool load_kernel(CollisionModel& M, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "BOLTZK04") return false;
  std::uint64_t klen = 0;
  in.read(reinterpret_cast<char*>(&klen), sizeof klen);
  if (!in || klen > 4096) return false;
  std::string key(klen, '\0');
  in.read(key.data(), klen);
  if (key != M.spec.key()) return false;
  std::uint64_t N = 0;
  in.read(reinterpret_cast<char*>(&N), sizeof N);
  if (N != static_cast<std::uint64_t>(M.grid.size())) return false;
  const int m = M.grid.dim() + 2;
  Vec head(3 + 2 * m);
  in.read(reinterpret_cast<char*>(head.data()), head.size() * sizeof(double));
  Vec nu(N);
  in.read(reinterpret_cast<char*>(nu.data()), N * sizeof(double));
  Eigen::MatrixXd K(N, N);
  in.read(reinterpret_cast<char*>(K.data()), N * N * sizeof(double));
  if (!in) return false;
  // nu is recomputed deterministically by make_model; a mismatch means a stale file
  for (std::size_t i = 0; i < N; ++i)
    if (nu[i] != M.nu[i]) return false;
  M.stats.asymmetry = head[0];
  M.stats.self_share = head[1];
  M.stats.seconds = head[2];
  M.stats.null_raw.assign(head.begin() + 3, head.begin() + 3 + m);
  M.stats.null_sym.assign(head.begin() + 3 + m, head.end());
  M.stats.from_cache = true;
  M.Khat = std::move(K);
  return true;
}

inline void save_kernel(const CollisionModel& M, const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(path).parent_path(), ec);
  std::string tmp = path + ".tmp" + std::to_string(std::random_device{}());
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) return;  // cache is best effort
    out.write("BOLTZK04", 8);
    std::string key = M.spec.key();
    std::uint64_t klen = key.size(), N = M.grid.size();
    out.write(reinterpret_cast<const char*>(&klen), sizeof klen);
    out.write(key.data(), klen);
    out.write(reinterpret_cast<const char*>(&N), sizeof N);
    Vec head{M.stats.asymmetry, M.stats.self_share, M.stats.seconds};
    head.insert(head.end(), M.stats.null_raw.begin(), M.stats.null_raw.end());
    head.insert(head.end(), M.stats.null_sym.begin(), M.stats.null_sym.end());
    out.write(reinterpret_cast<const char*>(head.data()), head.size() * sizeof(double));
    out.write(reinterpret_cast<const char*>(M.nu.data()), N * sizeof(double));
    out.write(reinterpret_cast<const char*>(M.Khat.data()), N * N * sizeof(double));
    if (!out) {
      fs::remove(tmp, ec);
      return;
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) fs::remove(tmp, ec);
}

}  // namespace detail

inline std::string kernel_cache_path(const CollisionSpec& spec) {
  return detail::cache_dir() + "/kernel-" + spec.hash() + ".bin";
}

// Builds the symmetric kernel table Khat = W^{1/2} K W^{-1/2}.
// Order: raw rows -> asymmetry check -> (Khat + Khat^T)/2 -> restrict L to the
// complement of the collision invariants.
inline void assemble_L(CollisionModel& M, bool use_cache = true) {
  if (M.assembled()) return;
  const std::string path = kernel_cache_path(M.spec);
  if (use_cache && detail::load_kernel(M, path)) return;
  auto t0 = std::chrono::steady_clock::now();
  const VelocityGrid& g = M.grid;
  const int N = g.size(), d = g.dim();
  auto tab = detail::carleman_table(M);
  auto sym = detail::grid_symmetry(g);
  std::vector<int> reps;
  for (int i = 0; i < N; ++i) {
    int r = i;
    for (const auto& p : sym.perm) r = std::min(r, p[i]);
    if (r == i) reps.push_back(i);
  }
  const double h = g.h(), V = g.vmax(), gamma = M.spec.gamma;
  // column I of Kt holds row I of K
  Eigen::MatrixXd Kt(N, N);
  Vec share(reps.size(), 0.0);
  parallel_for(reps.size(), M.spec.workers, [&](std::size_t b, std::size_t e) {
    Vec row(N);
    for (std::size_t r = b; r < e; ++r) {
      const int I = reps[r];
      const double* vi = g.v(I);
      for (int J = 0; J < N; ++J) row[J] = J == I ? 0.0 : tab.kernel(vi, g.v(J), gamma) * g.weight(J);
      double lo[3], hi[3];
      for (int k = 0; k < d; ++k) {
        lo[k] = std::max(-0.5 * h, -V - vi[k]);
        hi[k] = std::min(0.5 * h, V - vi[k]);
      }
      row[I] = tab.self_cell(vi, lo, hi, gamma);
      // remove the O(h) lattice error of the singular part: exact box integral
      // of c(e)/s^{d-1} outside the own cell minus its lattice sum
      double lat = 0.0, e[3];
      for (int J = 0; J < N; ++J) {
        if (J == I) continue;
        const double* vj = g.v(J);
        double s2 = 0.0;
        for (int k = 0; k < d; ++k) s2 += sqr(vj[k] - vi[k]);
        const double sl = std::sqrt(s2);
        for (int k = 0; k < d; ++k) e[k] = (vj[k] - vi[k]) / sl;
        lat += g.weight(J) * tab.singular_coeff(vi, e) / (d == 3 ? s2 : sl);
      }
      double blo[3], bhi[3];
      for (int k = 0; k < d; ++k) {
        blo[k] = -V - vi[k];
        bhi[k] = V - vi[k];
      }
      row[I] += tab.singular_box(vi, blo, bhi) - tab.singular_box(vi, lo, hi) - lat;
      share[r] = std::abs(row[I]) / M.nu[I];
      for (const auto& p : sym.perm) {
        double* col = Kt.col(p[I]).data();
        for (int J = 0; J < N; ++J) col[p[J]] = row[J];
      }
    }
  });
  M.stats.self_share = *std::max_element(share.begin(), share.end());
  // Khat(i,j) = sqrt(w_i) K(i,j) / sqrt(w_j); stored transposed so far
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) Kt(i, j) *= M.sqrt_w[j] / M.sqrt_w[i];
  // Kt now holds Khat^T
  M.stats.null_raw = detail::null_residuals(M, Kt.transpose());
  M.stats.asymmetry = detail::asymmetry(Kt);
  if (M.stats.asymmetry > M.spec.asym_tol)
    throw Error(ErrorKind::AsymmetryExceeded, "kernel asymmetry " + fmt(M.stats.asymmetry) + " > " +
                                                  fmt(M.spec.asym_tol) + " on " + g.describe());
  detail::symmetrize(Kt);
  M.stats.null_sym = detail::null_residuals(M, Kt);
  // L' = (I - UU^T) L (I - UU^T), written as an update of K
  Eigen::MatrixXd Y = -(Kt * M.U);
  for (int i = 0; i < N; ++i) Y.row(i) += M.nu[i] * M.U.row(i);
  Eigen::MatrixXd Cm = M.U.transpose() * Y;
  Eigen::MatrixXd Z = Y - 0.5 * M.U * Cm;
  Kt.noalias() += M.U * Z.transpose();
  Kt.noalias() += Z * M.U.transpose();
  detail::symmetrize(Kt);
  M.Khat = std::move(Kt);
  M.stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  M.stats.from_cache = false;
  if (use_cache) detail::save_kernel(M, path);
}

inline CollisionModel build_model(const CollisionSpec& spec, bool use_cache = true) {
  auto M = make_model(spec);
  assemble_L(M, use_cache);
  return M;
}

// (K f)_i = sum_j K_ij f_j, K = W^{-1/2} Khat W^{1/2}
inline Vec apply_K(const CollisionModel& M, const Vec& f) {
  require(M.assembled(), "kernel table not assembled");
  const int N = M.size();
  require(static_cast<int>(f.size()) == N, "slice size does not match the velocity grid");
  Eigen::VectorXd x(N);
  for (int i = 0; i < N; ++i) x[i] = M.sqrt_w[i] * f[i];
  Eigen::VectorXd y = M.Khat * x;
  Vec out(N);
  for (int i = 0; i < N; ++i) out[i] = y[i] / M.sqrt_w[i];
  return out;
}

inline Vec apply_L(const CollisionModel& M, const Vec& f) {
  Vec k = apply_K(M, f);
  for (int i = 0; i < M.size(); ++i) k[i] = M.nu[i] * f[i] - k[i];
  return k;
}

struct CollisionReport {
  double dropped_fraction = 0.0;  // of |loss|-weighted quadrature mass
  bool cutoff_loss = false;       // dropped_fraction > 1%
  double invariant_defect = 0.0;  // relative, before projection
};

namespace detail {

inline Vec gain_term(const CollisionModel& M, const Vec& A, const Vec& B, const Vec& m, double& kept,
                     const Vec& aabs, const Vec& babs) {
  auto t = pair_table(M.grid, M.rule, M.q0, M.spec.gamma);
  Vec out(M.size(), 0.0);
  if (M.grid.dim() == 2)
    gain_sweep<2>(M.grid, M.rule, M.q0, t, A.data(), B.data(), m.data(), aabs.data(), babs.data(), out.data(), kept);
  else
    gain_sweep<3>(M.grid, M.rule, M.q0, t, A.data(), B.data(), m.data(), aabs.data(), babs.data(), out.data(), kept);
  return out;
}

// Q-like bilinear form: gain(A at u', B at v') weighted by m at u, minus B(v) * sum m A
inline Vec bilinear(const CollisionModel& M, const Vec& A, const Vec& B, const Vec& m, const Vec& s, const Vec& q,
                    CollisionReport* rep) {
  const int N = M.size();
  require(static_cast<int>(A.size()) == N && static_cast<int>(B.size()) == N,
          "slice size does not match the velocity grid");
  Vec aabs(N), babs(N);
  for (int i = 0; i < N; ++i) {
    aabs[i] = std::abs(m[i] * A[i]);
    babs[i] = std::abs(B[i]);
  }
  double kept = 0.0;
  Vec out = gain_term(M, A, B, m, kept, aabs, babs);
  auto t = pair_table(M.grid, M.rule, M.q0, M.spec.gamma);
  Vec conv(N), cabs(N);
  Vec mA(N);
  for (int i = 0; i < N; ++i) mA[i] = m[i] * A[i];
  Vec ones(N, 1.0);
  loss_convolution(M.grid, t, ones.data(), mA.data(), conv.data());
  loss_convolution(M.grid, t, ones.data(), aabs.data(), cabs.data());
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    out[i] -= B[i] * conv[i];
    total += babs[i] * cabs[i];
  }
  double defect = project_out(M.grid, s, q, out.data());
  if (rep) {
    rep->dropped_fraction = total > 0.0 ? std::max(0.0, 1.0 - kept / total) : 0.0;
    rep->cutoff_loss = rep->dropped_fraction > 0.01;
    rep->invariant_defect = defect;
  }
  return out;
}

}  // namespace detail

// Q(F1, F2) on the grid, projected so that sum w Q phi = 0 for the invariants
inline Vec apply_Q(const CollisionModel& M, const Vec& F1, const Vec& F2, CollisionReport* rep = nullptr) {
  Vec mu = M.grid.mu(), ones(M.size(), 1.0);
  return detail::bilinear(M, F1, F2, M.grid.weights(), mu, ones, rep);
}

// Gamma(f1, f2) = Q(sqrt(mu) f1, sqrt(mu) f2) / sqrt(mu), evaluated without the division
inline Vec apply_Gamma(const CollisionModel& M, const Vec& f1, const Vec& f2, CollisionReport* rep = nullptr) {
  const int N = M.size();
  Vec m(N);
  for (int i = 0; i < N; ++i) m[i] = M.grid.weight(i) * M.sqrt_mu[i];
  return detail::bilinear(M, f1, f2, m, M.sqrt_mu, M.sqrt_mu, rep);
}

// w(x, v) = (|v|^2/2 + Phi(x))^{beta/2}
inline Vec weight_function(const CollisionModel& M, double phi) {
  Vec w(M.size());
  for (int i = 0; i < M.size(); ++i) w[i] = std::pow(0.5 * M.grid.v2(i) + phi, 0.5 * M.beta);
  return w;
}

inline Vec apply_Kw(const CollisionModel& M, const PotentialField& field, const Vec& x, const Vec& h) {
  Vec w = weight_function(M, field.value(x.data()));
  Vec f(M.size());
  for (int i = 0; i < M.size(); ++i) f[i] = h[i] / w[i];
  Vec k = apply_K(M, f);
  for (int i = 0; i < M.size(); ++i) k[i] *= w[i];
  return k;
}

// ---------------- spectra ----------------

struct LanczosResult {
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

// smallest eigenvalue of a symmetric operator on the complement of span(Q)
inline LanczosResult lanczos_min(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& op, int N,
                                 const Eigen::MatrixXd& Q, int max_iter = 300, double tol = 1e-10,
                                 std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> G;
  auto deflate = [&](Eigen::VectorXd& x) {
    if (Q.cols()) x -= Q * (Q.transpose() * x);
  };
  max_iter = std::min(max_iter, N - static_cast<int>(Q.cols()));
  Eigen::MatrixXd V(N, max_iter + 1);
  Eigen::VectorXd q(N);
  for (int i = 0; i < N; ++i) q[i] = G(rng);
  deflate(q);
  q.normalize();
  V.col(0) = q;
  Vec alpha, beta;
  Eigen::VectorXd w(N);
  LanczosResult res;
  double scale = 0.0;
  for (int k = 0; k < max_iter; ++k) {
    op(V.col(k), w);
    deflate(w);
    double a = V.col(k).dot(w);
    alpha.push_back(a);
    // two passes of full reorthogonalization
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd c = V.leftCols(k + 1).transpose() * w;
      w -= V.leftCols(k + 1) * c;
    }
    deflate(w);
    double b = w.norm();
    const int m = k + 1;
    Eigen::VectorXd dg = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sd(std::max(0, m - 1));
    for (int i = 0; i + 1 < m; ++i) sd[i] = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(dg, sd, Eigen::ComputeEigenvectors);
    res.value = es.eigenvalues()[0];
    res.residual = std::abs(b * es.eigenvectors()(m - 1, 0));
    res.iterations = m;
    scale = std::max(scale, es.eigenvalues().cwiseAbs().maxCoeff());
    if (res.residual <= tol * std::max(scale, 1e-300) || b < 1e-300) break;
    beta.push_back(b);
    V.col(k + 1) = w / b;
  }
  return res;
}

struct SpectralSummary {
  double min_eigenvalue = 0.0;  // of L on the grid (symmetric frame)
  double nu_max = 0.0;
  double sigma_gap = 0.0;       // min <Lf,f>/|f|_nu^2 over f nu-orthogonal to the invariants
  LanczosResult min_run, gap_run;
};

inline SpectralSummary spectral_summary(const CollisionModel& M, int max_iter = 300) {
  require(M.assembled(), "kernel table not assembled");
  const int N = M.size();
  SpectralSummary s;
  s.nu_max = *std::max_element(M.nu.begin(), M.nu.end());
  Eigen::Map<const Eigen::VectorXd> nu(M.nu.data(), N);
  auto opL = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.noalias() = M.Khat * x;
    y = nu.cwiseProduct(x) - y;
  };
  s.min_run = lanczos_min(opL, N, Eigen::MatrixXd(N, 0), max_iter, 1e-12);
  s.min_eigenvalue = s.min_run.value;
  Eigen::VectorXd isq = nu.cwiseSqrt().cwiseInverse();
  auto opT = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    Eigen::VectorXd z = isq.cwiseProduct(x);
    y.noalias() = M.Khat * z;
    y = isq.cwiseProduct(nu.cwiseProduct(z) - y);
  };
  Eigen::MatrixXd Q = nu.cwiseSqrt().asDiagonal() * M.U;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Q);
  Q = qr.householderQ() * Eigen::MatrixXd::Identity(N, M.U.cols());
  s.gap_run = lanczos_min(opT, N, Q, max_iter, 1e-10);
  s.sigma_gap = s.gap_run.value;
  return s;
}

// ---------------- kernel envelopes ----------------

struct EnvelopeFit {
  double C_fit = 0.0;       // max |k| / envelope over off-diagonal pairs
  std::int64_t pairs = 0;
  std::int64_t violations = 0;  // pairs above C_fit * envelope, or with a non-finite ratio
};

// log of {|v-v'| + |v-v'|^{-1}} exp{-|v-v'|^2/8 - (|v|^2-|v'|^2)^2/(8|v-v'|^2)}
inline double log_envelope(double r2, double a2, double b2) {
  double r = std::sqrt(r2);
  return std::log(r + 1.0 / r) - r2 / 8.0 - sqr(a2 - b2) / (8.0 * r2);
}

// k(v_i, v_j) = Khat_ij / sqrt(w_i w_j)
inline double kernel_value(const CollisionModel& M, int i, int j) {
  return M.Khat(i, j) / (M.sqrt_w[i] * M.sqrt_w[j]);
}

inline EnvelopeFit kernel_envelope(const CollisionModel& M) {
  require(M.assembled(), "kernel table not assembled");
  const int N = M.size(), d = M.grid.dim();
  EnvelopeFit f;
  double best = -INFINITY;
  auto pass = [&](bool count) {
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        if (i == j) continue;
        double k = std::abs(kernel_value(M, i, j));
        if (k == 0.0) continue;
        double r2 = 0.0;
        for (int a = 0; a < d; ++a) r2 += sqr(M.grid.coord(i, a) - M.grid.coord(j, a));
        double lr = std::log(k) - log_envelope(r2, M.grid.v2(i), M.grid.v2(j));
        if (!count) {
          if (!std::isfinite(lr)) ++f.violations;
          else best = std::max(best, lr);
          ++f.pairs;
        } else if (lr > best + 1e-12) {
          ++f.violations;
        }
      }
  };
  pass(false);
  f.C_fit = std::exp(best);
  pass(true);
  return f;
}

struct WeightFits {
  double C_ratio = 0.0;   // max w(v)/w(v') / (1+|v-v'|^2)^{beta/2}
  double C_row = 0.0;     // max (1+|v|) sum_{j != i} |k_w(v_i, v_j)| w_j
  Vec ray_speed, ray_row;  // row sums along the positive first axis
  double ray_slope = 0.0;  // least squares d log R / d log(1+|v|) for |v| >= 1
  std::int64_t violations = 0;
};

inline WeightFits weight_fits(const CollisionModel& M, const PotentialField& field, const Vec& x) {
  require(M.assembled(), "kernel table not assembled");
  const int N = M.size(), d = M.grid.dim();
  const double phi = field.value(x.data());
  Vec w = weight_function(M, phi);
  WeightFits r;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) r2 += sqr(M.grid.coord(i, a) - M.grid.coord(j, a));
      r.C_ratio = std::max(r.C_ratio, w[i] / w[j] / std::pow(1.0 + r2, 0.5 * M.beta));
    }
  Vec row(N, 0.0);
  for (int i = 0; i < N; ++i) {
    double s = 0.0;
    for (int j = 0; j < N; ++j)
      if (j != i) s += std::abs(kernel_value(M, i, j)) * w[i] / w[j] * M.grid.weight(j);
    row[i] = s;
    r.C_row = std::max(r.C_row, (1.0 + std::sqrt(M.grid.v2(i))) * s);
  }
  for (int i = 0; i < N; ++i) {
    if ((1.0 + std::sqrt(M.grid.v2(i))) * row[i] > r.C_row * (1 + 1e-12)) ++r.violations;
    for (int j = 0; j < N; ++j) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) r2 += sqr(M.grid.coord(i, a) - M.grid.coord(j, a));
      if (w[i] / w[j] > r.C_ratio * std::pow(1.0 + r2, 0.5 * M.beta) * (1 + 1e-12)) ++r.violations;
    }
  }
  // ray along +e_1 through the node closest to the origin in the other axes
  const int n = M.grid.n();
  std::vector<int> m(d, n / 2);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (int k = n / 2; k < n; ++k) {
    m[0] = k;
    int i = M.grid.index(m.data());
    double sp = std::sqrt(M.grid.v2(i));
    r.ray_speed.push_back(sp);
    r.ray_row.push_back(row[i]);
    if (sp >= 1.0) {
      double X = std::log(1.0 + sp), Y = std::log(row[i]);
      sx += X;
      sy += Y;
      sxx += X * X;
      sxy += X * Y;
      ++cnt;
    }
  }
  if (cnt >= 2) r.ray_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return r;
}

// nu(v) ~ (1+|v|)^gamma: c1 = min, c2 = max of nu / (1+|v|)^gamma over the grid
inline std::pair<double, double> nu_comparability(const CollisionModel& M) {
  double lo = INFINITY, hi = 0.0;
  for (int i = 0; i < M.size(); ++i) {
    double q = M.nu[i] / std::pow(1.0 + std::sqrt(M.grid.v2(i)), M.spec.gamma);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  return {lo, hi};
}

}  // namespace boltz

#endif  // BOLTZ_COLLISION_HPP
