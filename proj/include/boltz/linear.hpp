#ifndef BOLTZ_LINEAR_HPP
#define BOLTZ_LINEAR_HPP

#include <fftw3.h>

#include <complex>

#include "equilibrium.hpp"

namespace boltz {

// d/dx_k of a periodic grid function by FFT; the Nyquist mode of an even
// axis is dropped (its derivative is not representable as a real field)
inline Vec spectral_derivative(const SpatialGrid& xg, const Vec& u, int axis) {
  const int d = xg.dim(), N = xg.size();
  require(static_cast<int>(u.size()) == N, "field size does not match the spatial grid");
  const auto& c = xg.counts();
  std::vector<int> dims(c.begin(), c.end());
  const int last = dims[d - 1] / 2 + 1;
  const int M = N / dims[d - 1] * last;
  Vec in(u);
  std::vector<std::complex<double>> spec(M);
  auto* cs = reinterpret_cast<fftw_complex*>(spec.data());
  fftw_plan fwd = fftw_plan_dft_r2c(d, dims.data(), in.data(), cs, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  const double L = xg.torus().period[axis];
  for (int j = 0; j < M; ++j) {
    // multi-index of the complex array (last axis truncated)
    int r = j, m = 0;
    for (int k = d - 1; k >= 0; --k) {
      int n = k == d - 1 ? last : dims[k];
      int q = r % n;
      r /= n;
      if (k == axis) m = q;
    }
    const int n = dims[axis];
    int kk = (axis == d - 1) ? m : (m <= n / 2 ? m : m - n);
    if (n % 2 == 0 && m == n / 2) kk = 0;
    spec[j] *= std::complex<double>(0.0, 2.0 * kPi * kk / L) / double(N);
  }
  Vec out(N);
  fftw_plan bwd = fftw_plan_dft_c2r(d, dims.data(), cs, out.data(), FFTW_ESTIMATE);
  fftw_execute(bwd);
  fftw_destroy_plan(bwd);
  return out;
}

// ---------------- macroscopic equations ----------------

struct MacroFields {
  Vec t;
  std::vector<Vec> a, c;  // [time][x]
  std::vector<Vec> b;     // [time][x * d + k]
  std::string source = "synthetic";
};

struct MacroResidual {
  double me1 = 0.0;  // a_t - grad Phi . b
  double me2 = 0.0;  // b_t + grad a - 2 c grad Phi
  Vec me3;           // c_t + d_i b_i, per i
  double me4 = 0.0;  // d_j b_i + d_i b_j, i != j, max over pairs
  double me5 = 0.0;  // grad c
  double laplace = 0.0;  // Laplacian of b_i, max over i
  double max() const {
    double m = std::max({me1, me2, me4, me5});
    for (double x : me3) m = std::max(m, x);
    return m;
  }
};

// RMS norms over (t, x); time derivative by central differences
inline MacroResidual macroscopic_residual(const PotentialField& field, const SpatialGrid& xg, const MacroFields& mf) {
  const int T = static_cast<int>(mf.t.size()), d = xg.dim(), N = xg.size();
  require(T >= 2, "macroscopic fields need at least two time samples");
  require(static_cast<int>(mf.a.size()) == T && static_cast<int>(mf.b.size()) == T &&
              static_cast<int>(mf.c.size()) == T, "macroscopic field time count mismatch");
  for (int s = 0; s + 1 < T; ++s) require(mf.t[s + 1] > mf.t[s], "time samples must increase");
  std::vector<Vec> gphi(d, Vec(N));
  Vec x(d), g(d);
  for (int i = 0; i < N; ++i) {
    xg.point(i, x.data());
    field.gradient(x.data(), g.data());
    for (int k = 0; k < d; ++k) gphi[k][i] = g[k];
  }
  auto ddt = [&](const std::vector<Vec>& u, int s, std::size_t i) {
    if (s == 0) return (u[1][i] - u[0][i]) / (mf.t[1] - mf.t[0]);
    if (s == T - 1) return (u[T - 1][i] - u[T - 2][i]) / (mf.t[T - 1] - mf.t[T - 2]);
    return (u[s + 1][i] - u[s - 1][i]) / (mf.t[s + 1] - mf.t[s - 1]);
  };
  MacroResidual r;
  r.me3.assign(d, 0.0);
  Vec lap(d, 0.0), m4;
  double s1 = 0, s2 = 0, s4 = 0, s5 = 0;
  std::vector<double> s3(d, 0.0), sl(d, 0.0);
  for (int s = 0; s < T; ++s) {
    std::vector<Vec> bk(d, Vec(N));
    for (int k = 0; k < d; ++k)
      for (int i = 0; i < N; ++i) bk[k][i] = mf.b[s][static_cast<std::size_t>(i) * d + k];
    std::vector<std::vector<Vec>> db(d);  // db[k][j] = d_j b_k
    for (int k = 0; k < d; ++k)
      for (int j = 0; j < d; ++j) db[k].push_back(spectral_derivative(xg, bk[k], j));
    std::vector<Vec> ga(d), gc(d);
    for (int j = 0; j < d; ++j) {
      ga[j] = spectral_derivative(xg, mf.a[s], j);
      gc[j] = spectral_derivative(xg, mf.c[s], j);
    }
    for (int i = 0; i < N; ++i) {
      double e1 = ddt(mf.a, s, i);
      for (int k = 0; k < d; ++k) e1 -= gphi[k][i] * bk[k][i];
      s1 += e1 * e1;
      for (int k = 0; k < d; ++k) {
        double bt = (s == 0) ? (mf.b[1][i * d + k] - mf.b[0][i * d + k]) / (mf.t[1] - mf.t[0])
                    : (s == T - 1)
                        ? (mf.b[T - 1][i * d + k] - mf.b[T - 2][i * d + k]) / (mf.t[T - 1] - mf.t[T - 2])
                        : (mf.b[s + 1][i * d + k] - mf.b[s - 1][i * d + k]) / (mf.t[s + 1] - mf.t[s - 1]);
        double e2 = bt + ga[k][i] - 2.0 * mf.c[s][i] * gphi[k][i];
        s2 += e2 * e2;
        double e3 = ddt(mf.c, s, i) + db[k][k][i];
        s3[k] += e3 * e3;
        s5 += gc[k][i] * gc[k][i];
        for (int j = k + 1; j < d; ++j) s4 += sqr(db[k][j][i] + db[j][k][i]);
      }
    }
    for (int k = 0; k < d; ++k) {
      Vec acc(N, 0.0);
      for (int j = 0; j < d; ++j) {
        Vec dd = spectral_derivative(xg, db[k][j], j);
        for (int i = 0; i < N; ++i) acc[i] += dd[i];
      }
      for (int i = 0; i < N; ++i) sl[k] += acc[i] * acc[i];
    }
  }
  const double n = double(T) * N;
  r.me1 = std::sqrt(s1 / n);
  r.me2 = std::sqrt(s2 / n);
  for (int k = 0; k < d; ++k) {
    r.me3[k] = std::sqrt(s3[k] / n);
    r.laplace = std::max(r.laplace, std::sqrt(sl[k] / n));
  }
  r.me4 = std::sqrt(s4 / n);
  r.me5 = std::sqrt(s5 / n);
  return r;
}

// a = 2 c0 Phi + phi0, b = b0, c = c0 sampled at the given times
inline MacroFields null_family(const PotentialField& field, const SpatialGrid& xg, const Vec& times, double phi0,
                               const Vec& b0, double c0) {
  const int d = xg.dim(), N = xg.size();
  require(static_cast<int>(b0.size()) == d, "b0 dimension mismatch");
  Vec phi = phi_values(field, xg);
  MacroFields mf;
  mf.t = times;
  for (std::size_t s = 0; s < times.size(); ++s) {
    Vec a(N), c(N, c0), b(static_cast<std::size_t>(N) * d);
    for (int i = 0; i < N; ++i) {
      a[i] = 2.0 * c0 * phi[i] + phi0;
      for (int k = 0; k < d; ++k) b[static_cast<std::size_t>(i) * d + k] = b0[k];
    }
    mf.a.push_back(a);
    mf.b.push_back(b);
    mf.c.push_back(c);
  }
  return mf;
}

// ---------------- Gram nondegeneracy ----------------

struct NullSolutionResult {
  double G11 = 0.0, G12 = 0.0, G22 = 0.0;  // Gram of {sqrt mu_E, (Phi + |v|^2/2) sqrt mu_E}
  double determinant = 0.0;
  Vec degenerate_coeff;  // sum (e_k . v)^2 mu_E per degenerate direction
  bool pass = false;
};

inline NullSolutionResult null_solution_test(const PotentialField& field, const SpatialGrid& xg,
                                             const VelocityGrid& vg, const DegenerateSubspace& sub) {
  auto t = maxwellian_table(field, xg, vg);
  const int nx = xg.size(), d = vg.dim();
  NullSolutionResult r;
  r.degenerate_coeff.assign(sub.basis.size(), 0.0);
  for (int iv = 0; iv < vg.size(); ++iv) {
    const double w = xg.weight() * vg.weight(iv);
    double g11 = 0, g12 = 0, g22 = 0;
    for (int ix = 0; ix < nx; ++ix) {
      const double me = std::exp(t.log_mu_e[static_cast<std::size_t>(iv) * nx + ix]);
      const double e = t.phi[ix] + 0.5 * vg.v2(iv);
      g11 += me;
      g12 += e * me;
      g22 += e * e * me;
    }
    r.G11 += w * g11;
    r.G12 += w * g12;
    r.G22 += w * g22;
    for (std::size_t b = 0; b < sub.basis.size(); ++b) {
      double ev = 0.0;
      for (int k = 0; k < d; ++k) ev += sub.basis[b][k] * vg.coord(iv, k);
      r.degenerate_coeff[b] += w * ev * ev * g11;
    }
  }
  r.determinant = r.G11 * r.G22 - r.G12 * r.G12;
  r.pass = r.determinant > 0.0;
  for (double c : r.degenerate_coeff) r.pass = r.pass && c > 0.0;
  return r;
}

// ---------------- positivity constant ----------------

// one linear run sampled on [0, 1]
struct RayleighSeries {
  Vec t;
  Vec quad;     // <L f, f>
  Vec nu_norm;  // ||f||_nu^2
  double invariant_drift = 0.0;  // max |M|, |E|, |J| over the run
};

inline double trapezoid(const Vec& t, const Vec& y) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) s += 0.5 * (t[i + 1] - t[i]) * (y[i] + y[i + 1]);
  return s;
}

struct PositivityResult {
  double M_hat = 0.0;
  Vec ratios;
  int argmin = -1;
};

inline PositivityResult positivity_constant(const std::vector<RayleighSeries>& runs, double tol = 1e-8) {
  require(!runs.empty(), "positivity_constant needs at least one run");
  PositivityResult r;
  r.M_hat = INFINITY;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& s = runs[k];
    require(s.t.size() >= 2 && s.quad.size() == s.t.size() && s.nu_norm.size() == s.t.size(),
            "run series malformed");
    if (s.invariant_drift > tol)
      throw Error(ErrorKind::InvariantViolation,
                  "run " + std::to_string(k) + " invariant drift " + fmt(s.invariant_drift) + " > " + fmt(tol));
    double den = trapezoid(s.t, s.nu_norm);
    if (!(den > 0.0)) throw Error(ErrorKind::DegenerateRun, "run " + std::to_string(k) + " has zero norm");
    double q = trapezoid(s.t, s.quad) / den;
    r.ratios.push_back(q);
    if (q < r.M_hat) {
      r.M_hat = q;
      r.argmin = static_cast<int>(k);
    }
  }
  return r;
}

// ---------------- decay bootstrap ----------------

struct DecayFit {
  double lambda = 0.0, C = 0.0, r_squared = 0.0;
  double t_start = 0.0, t_end = 0.0;
  bool degenerate = false;  // log-norm constant over the window
};

// least squares of log y = log C - lambda t over t_start <= t <= t_end
inline DecayFit fit_decay(const Vec& t, const Vec& y, double t_start = -INFINITY, double t_end = INFINITY) {
  require(t.size() == y.size(), "series length mismatch");
  Vec X, Y;
  DecayFit f;
  f.t_start = INFINITY;
  f.t_end = -INFINITY;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_start || t[i] > t_end) continue;
    require(y[i] > 0.0, "decay fit needs positive norms");
    X.push_back(t[i]);
    Y.push_back(std::log(y[i]));
    f.t_start = std::min(f.t_start, t[i]);
    f.t_end = std::max(f.t_end, t[i]);
  }
  const int n = static_cast<int>(X.size());
  require(n >= 2, "decay fit needs at least two samples in the window");
  // centered sums, two passes
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += X[i];
    my += Y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0, ymax = 0;
  for (int i = 0; i < n; ++i) {
    vx += sqr(X[i] - mx);
    vy += sqr(Y[i] - my);
    cxy += (X[i] - mx) * (Y[i] - my);
    ymax = std::max(ymax, std::abs(Y[i]));
  }
  require(vx > 0.0, "decay fit needs distinct times");
  const double slope = cxy / vx;
  f.lambda = -slope;
  f.C = std::exp(my - slope * mx);
  // log-norm spread at rounding level
  if (vy <= n * sqr(1e-12 * std::max(1.0, ymax))) {
    f.degenerate = true;
    f.lambda = 0.0;
    f.C = std::exp(my);
    f.r_squared = 1.0;
  } else {
    f.r_squared = std::clamp(cxy * cxy / (vx * vy), 0.0, 1.0);
  }
  return f;
}

// root of lambda e^{2 lambda} = nu0 M_hat e^{-|Phi|_inf}
inline double lambda_admissible(double nu0, double M_hat, double phi_sup) {
  require(nu0 > 0.0 && M_hat > 0.0, "nu0 and M_hat must be positive");
  const double R = nu0 * M_hat * std::exp(-phi_sup);
  double lo = 0.0, hi = std::max(1.0, R);
  for (int it = 0; it < 200; ++it) {
    double m = 0.5 * (lo + hi);
    (m * std::exp(2.0 * m) < R ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

struct DecayResult {
  DecayFit fit;
  double lambda_discrete = 0.0;  // largest lambda with e^{2 lambda N}|f(N)|^2 <= |f(0)|^2 for all N
  double lambda_adm = 0.0;
  Vec unit_norms;                // |f(N)|, N = 0, 1, ...
  bool holds_at_adm = false;     // discrete inequality at lambda_adm
};

// value at time s by log-linear interpolation of the series
inline double series_at(const Vec& t, const Vec& y, double s) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i] - s) <= 1e-9 * std::max(1.0, std::abs(s))) return y[i];
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (t[i] < s && s < t[i + 1]) {
      double q = (s - t[i]) / (t[i + 1] - t[i]);
      if (y[i] > 0.0 && y[i + 1] > 0.0) return std::exp((1 - q) * std::log(y[i]) + q * std::log(y[i + 1]));
      return (1 - q) * y[i] + q * y[i + 1];
    }
  throw Error(ErrorKind::InvalidArgument, "time " + fmt(s) + " outside the series");
}

inline DecayResult decay_bootstrap(const Vec& t, const Vec& norms, double M_hat, double nu0, double phi_sup,
                                   double fit_start = -INFINITY, double monotone_tol = 1e-10) {
  require(t.size() == norms.size() && t.size() >= 2, "norm series malformed");
  require(t.back() - t.front() >= 5.0 - 1e-9, "norm series must cover at least 5 unit intervals");
  DecayResult r;
  const int units = static_cast<int>(std::floor(t.back() - t.front() + 1e-9));
  for (int N = 0; N <= units; ++N) r.unit_norms.push_back(series_at(t, norms, t.front() + N));
  for (int N = 1; N <= units; ++N)
    if (r.unit_norms[N] > r.unit_norms[N - 1] * (1.0 + monotone_tol) + monotone_tol * r.unit_norms[0])
      throw Error(ErrorKind::NonMonotone, "norm increases over unit interval " + std::to_string(N));
  r.lambda_discrete = INFINITY;
  for (int N = 1; N <= units; ++N) {
    double l = r.unit_norms[N] > 0.0 ? std::log(r.unit_norms[0] / r.unit_norms[N]) / N : INFINITY;
    r.lambda_discrete = std::min(r.lambda_discrete, l);
  }
  r.lambda_discrete = std::max(0.0, r.lambda_discrete);
  bool positive = true;
  for (double y : norms) positive = positive && y > 0.0;
  if (positive) r.fit = fit_decay(t, norms, fit_start);
  if (M_hat > 0.0 && nu0 > 0.0) {
    r.lambda_adm = lambda_admissible(nu0, M_hat, phi_sup);
    r.holds_at_adm = true;
    for (int N = 1; N <= units; ++N)
      if (std::exp(2.0 * r.lambda_adm * N) * sqr(r.unit_norms[N]) > sqr(r.unit_norms[0]) * (1.0 + 1e-12))
        r.holds_at_adm = false;
  }
  return r;
}

}  // namespace boltz

#endif  // BOLTZ_LINEAR_HPP
