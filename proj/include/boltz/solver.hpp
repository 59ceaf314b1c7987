#ifndef BOLTZ_SOLVER_HPP
#define BOLTZ_SOLVER_HPP

#include <iostream>
#include <optional>
#include <random>

#include "collision.hpp"
#include "equilibrium.hpp"
#include "flow.hpp"
#include "linear.hpp"

namespace boltz {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class SolverMode { Nonlinear, Linearized };

inline const char* to_string(SolverMode m) { return m == SolverMode::Nonlinear ? "nonlinear" : "linearized"; }
inline SolverMode parse_solver_mode(const std::string& s) {
  if (s == "nonlinear") return SolverMode::Nonlinear;
  if (s == "linearized") return SolverMode::Linearized;
  throw Error(ErrorKind::Parse, "unknown solver mode '" + s + "'");
}

struct SolverConfig {
  double dt = 0.025;
  double t_end = 1.0;
  SolverMode mode = SolverMode::Nonlinear;
  int interpolation_order = 1;
  bool spectral_x = false;  // trigonometric interpolation in x; not balanced
  bool balance = true;      // Sinkhorn balancing and invariant fixer (order 1 only)
  int collision_substeps = 1;
  int diagnostics_every = 1;
  std::uint64_t seed = 1;
  int flow_substeps = 4;
  bool collisions = true;
  double negative_tol = 1e-8;
  int workers = 1;

  void validate() const {
    require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
    require(std::isfinite(t_end) && t_end >= dt * (1.0 - 1e-12), "t_end must be >= dt");
    require(interpolation_order == 1 || interpolation_order == 3, "interpolation_order must be 1 or 3");
    require(collision_substeps >= 1, "collision_substeps must be >= 1");
    require(diagnostics_every >= 1, "diagnostics_every must be >= 1");
    require(flow_substeps >= 4, "flow_substeps must be >= 4");
  }
  int steps() const { return std::max(1, static_cast<int>(std::llround(t_end / dt))); }
};

// ---------------- batched collision pieces ----------------

// Gamma(f_x, f_x) for every column x of f (Nv x Nx)
class GammaBatch {
 public:
  explicit GammaBatch(const CollisionModel& M) : M_(&M) {
    const int N = M.size(), d = M.grid.dim();
    auto t = detail::pair_table(M.grid, M.rule, M.q0, M.spec.gamma);
    C_.resize(N, N);
    std::vector<int> a(d), b(d), D(d);
    for (int i = 0; i < N; ++i) {
      M.grid.multi(i, a.data());
      for (int j = 0; j < N; ++j) {
        M.grid.multi(j, b.data());
        for (int k = 0; k < d; ++k) D[k] = a[k] - b[k];
        C_(i, j) = t.base[t.index(D.data())];
      }
    }
    m_.resize(N);
    for (int i = 0; i < N; ++i) m_[i] = M.grid.weight(i) * M.sqrt_mu[i];
  }

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& f, int workers = 1) const {
    const CollisionModel& M = *M_;
    const int N = M.size(), nx = static_cast<int>(f.cols());
    Eigen::MatrixXd conv = C_ * (m_.asDiagonal() * f);
    Eigen::MatrixXd out(N, nx);
    parallel_for(nx, workers, [&](std::size_t lo, std::size_t hi) {
      Vec A(N), zero(N, 0.0), mv(m_.data(), m_.data() + N);
      for (std::size_t x = lo; x < hi; ++x) {
        for (int i = 0; i < N; ++i) A[i] = f(i, x);
        double kept = 0.0;
        Vec g = detail::gain_term(M, A, A, mv, kept, zero, zero);
        for (int i = 0; i < N; ++i) g[i] -= A[i] * conv(i, x);
        detail::project_out(M.grid, M.sqrt_mu, M.sqrt_mu, g.data());
        for (int i = 0; i < N; ++i) out(i, x) = g[i];
      }
    });
    return out;
  }

 private:
  const CollisionModel* M_;
  Eigen::MatrixXd C_;  // |v_i - v_j|^gamma
  Eigen::VectorXd m_;
};

namespace detail {

inline double phi1(double z) {
  if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}
inline double phi2(double z) {
  if (std::abs(z) < 1e-3) return 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
  return (std::expm1(z) - z) / (z * z);
}

}  // namespace detail

// df/dt = -e^{-Phi} L f + e^{-Phi/2} Gamma(f, f) over one step tau.  The
// linear part is exact through the eigenbasis of the symmetric L; the
// nonlinear part uses second-order exponential Runge-Kutta.
class CollisionStepper {
 public:
  CollisionStepper(const CollisionModel& M, const Vec& phi_x, double tau, bool nonlinear, int workers = 1)
      : M_(&M), tau_(tau), nonlinear_(nonlinear), workers_(workers), gamma_(M) {
    require(M.assembled(), "kernel table not assembled");
    const int N = M.size(), nx = static_cast<int>(phi_x.size());
    Eigen::MatrixXd Lh = -M.Khat;
    for (int i = 0; i < N; ++i) Lh(i, i) += M.nu[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lh);
    Q_ = es.eigenvectors();
    lam_ = es.eigenvalues();
    sw_ = Eigen::Map<const Eigen::VectorXd>(M.sqrt_w.data(), N);
    c_.resize(nx);
    s_.resize(nx);
    for (int x = 0; x < nx; ++x) {
      c_[x] = std::exp(-phi_x[x]);
      s_[x] = std::exp(-0.5 * phi_x[x]);
    }
    E_.resize(N, nx);
    P1_.resize(N, nx);
    P2_.resize(N, nx);
    for (int x = 0; x < nx; ++x)
      for (int k = 0; k < N; ++k) {
        double z = -c_[x] * tau * lam_[k];
        E_(k, x) = std::exp(z);
        P1_(k, x) = tau * detail::phi1(z);
        P2_(k, x) = tau * detail::phi2(z);
      }
  }

  const Eigen::VectorXd& eigenvalues() const { return lam_; }
  const Eigen::MatrixXd& eigenvectors() const { return Q_; }

  // f: Nv x Nx perturbation
  void advance(Eigen::MatrixXd& f) const {
    Eigen::MatrixXd Y = sw_.asDiagonal() * f;
    Eigen::MatrixXd Z = Q_.transpose() * Y;
    if (!nonlinear_) {
      Z = Z.cwiseProduct(E_);
    } else {
      Eigen::MatrixXd N0 = Q_.transpose() * nonlinear_term(f);
      Eigen::MatrixXd Za = Z.cwiseProduct(E_) + P1_.cwiseProduct(N0);
      Eigen::MatrixXd fa = sw_.cwiseInverse().asDiagonal() * (Q_ * Za);
      Eigen::MatrixXd Na = Q_.transpose() * nonlinear_term(fa);
      Z = Za + P2_.cwiseProduct(Na - N0);
    }
    f = sw_.cwiseInverse().asDiagonal() * (Q_ * Z);
  }

  // sum_v <L f_x, f_x> per column, symmetric frame
  Eigen::VectorXd quadratic_form(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd Z = Q_.transpose() * (sw_.asDiagonal() * f);
    Eigen::VectorXd q(f.cols());
    for (int x = 0; x < f.cols(); ++x) q[x] = (lam_.array() * Z.col(x).array().square()).sum();
    return q;
  }

  // sqrt(w) e^{-Phi/2} Gamma(f, f), symmetric frame
  Eigen::MatrixXd nonlinear_term(const Eigen::MatrixXd& f) const {
    Eigen::MatrixXd g = gamma_(f, workers_);
    return sw_.asDiagonal() * g * s_.asDiagonal();
  }

  const GammaBatch& gamma() const { return gamma_; }

 private:
  const CollisionModel* M_;
  double tau_;
  bool nonlinear_;
  int workers_;
  GammaBatch gamma_;
  Eigen::MatrixXd Q_;
  Eigen::VectorXd lam_, sw_, c_, s_;
  Eigen::MatrixXd E_, P1_, P2_;
};

// ---------------- characteristics and pullbacks ----------------

struct Feet {
  int d = 0;
  double tau = 0.0;
  Vec X, V;  // node k = iv * Nx + ix, wrapped X
  double max_speed = 0.0;
};

inline Feet compute_feet(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg, double tau,
                         int substeps, int workers = 1) {
  require(substeps >= 1, "substeps must be positive");
  const int d = xg.dim(), nx = xg.size(), nv = vg.size();
  require(vg.dim() == d, "velocity and spatial dimensions differ");
  Feet F;
  F.d = d;
  F.tau = tau;
  const std::size_t total = static_cast<std::size_t>(nx) * nv;
  F.X.resize(total * d);
  F.V.resize(total * d);
  std::vector<double> sp(total, 0.0);
  parallel_for(total, workers, [&](std::size_t lo, std::size_t hi) {
    FlowPropagator P(field, false);
    Vec x(d);
    for (std::size_t k = lo; k < hi; ++k) {
      const int iv = static_cast<int>(k / nx), ix = static_cast<int>(k % nx);
      xg.point(ix, x.data());
      P.reset(x.data(), vg.v(iv));
      double s = std::sqrt(vg.v2(iv));
      for (int q = 0; q < substeps; ++q) {
        P.step(-tau / substeps);
        s = std::max(s, norm2(P.v()));
      }
      for (int a = 0; a < d; ++a) {
        F.X[k * d + a] = field.torus().wrap(P.x()[a], a);
        F.V[k * d + a] = P.v()[a];
      }
      sp[k] = s;
    }
  });
  for (double s : sp) F.max_speed = std::max(F.max_speed, s);
  return F;
}

struct PullbackStats {
  std::int64_t clamped_nodes = 0;  // feet with V outside the velocity box
  double clamped_mass = 0.0;       // m-weighted share of those nodes
  double max_band_excess = 0.0;    // max over feet of |V_k| - V_max
  double balance_residual = 0.0;   // max |column sum / m - 1| after balancing
  int balance_iterations = 0;
  bool balanced = false;
};

namespace detail {

// Lagrange weights of order 1 or 3 at position s on an axis of n nodes
inline int axis_stencil(double s, int n, int order, bool periodic, int* idx, double* w) {
  double fl = std::floor(s);
  double f = s - fl;
  int i0 = static_cast<int>(fl);
  if (f < 1e-9) f = 0.0;
  if (f > 1.0 - 1e-9) {
    f = 0.0;
    ++i0;
  }
  if (!periodic && i0 >= n - 1) {
    i0 = n - 1;
    f = 0.0;
  }
  if (f == 0.0) {
    idx[0] = periodic ? ((i0 % n) + n) % n : i0;
    w[0] = 1.0;
    return 1;
  }
  if (order == 1) {
    idx[0] = i0;
    idx[1] = i0 + 1;
    w[0] = 1.0 - f;
    w[1] = f;
    if (periodic) {
      idx[0] = ((idx[0] % n) + n) % n;
      idx[1] = ((idx[1] % n) + n) % n;
    }
    return 2;
  }
  int b = i0 - 1;
  if (!periodic) b = std::clamp(b, 0, n - 4);
  const double p = s - b;  // position relative to node b
  for (int j = 0; j < 4; ++j) {
    double l = 1.0;
    for (int q = 0; q < 4; ++q)
      if (q != j) l *= (p - q) / double(j - q);
    w[j] = l;
    idx[j] = periodic ? (((b + j) % n) + n) % n : b + j;
  }
  return 4;
}

// real trigonometric interpolation kernel on n nodes, theta = 2 pi (X - x_j) / L
inline double dirichlet(double theta, int n) {
  theta = std::remainder(theta, 2.0 * kPi);
  const double s = std::sin(0.5 * theta);
  if (std::abs(s) < 1e-13) return 1.0;
  if (n % 2 == 1) return std::sin(0.5 * n * theta) / (n * s);
  return std::sin(0.5 * n * theta) * std::cos(0.5 * theta) / (n * s);
}

}  // namespace detail

// Backward semi-Lagrangian pullback: out(node) = in interpolated at the foot.
class Pullback {
 public:
  Pullback() = default;
  Pullback(const Feet& feet, const SpatialGrid& xg, const VelocityGrid& vg, int order, bool spectral_x)
      : nx_(xg.size()), nv_(vg.size()), d_(xg.dim()), spectral_(spectral_x) {
    require(order == 1 || order == 3, "interpolation order must be 1 or 3");
    require(vg.n() >= 4 || order == 1, "cubic interpolation needs >= 4 velocity nodes per axis");
    const std::size_t total = static_cast<std::size_t>(nx_) * nv_;
    const auto& counts = xg.counts();
    row_.assign(total + 1, 0);
    if (spectral_) {
      kstride_ = 0;
      for (int a = 0; a < d_; ++a) kstride_ += counts[a];
      kern_.resize(total * kstride_);
    }
    for (std::size_t k = 0; k < total; ++k) {
      const double* X = feet.X.data() + k * d_;
      const double* V = feet.V.data() + k * d_;
      // velocity stencil
      std::vector<std::vector<int>> vi(d_);
      std::vector<std::vector<double>> vw(d_);
      bool clamped = false;
      for (int a = 0; a < d_; ++a) {
        stats_.max_band_excess = std::max(stats_.max_band_excess, std::abs(V[a]) - vg.vmax());
        double s = (V[a] + vg.vmax()) / vg.h();
        if (s < 0.0 || s > vg.n() - 1) {
          clamped = true;
          s = std::clamp(s, 0.0, double(vg.n() - 1));
        }
        int idx[4];
        double w[4];
        int c = detail::axis_stencil(s, vg.n(), order, false, idx, w);
        vi[a].assign(idx, idx + c);
        vw[a].assign(w, w + c);
      }
      if (clamped) ++stats_.clamped_nodes;
      // spatial stencil
      std::vector<std::vector<int>> xi(d_);
      std::vector<std::vector<double>> xw(d_);
      if (spectral_) {
        double* kr = kern_.data() + k * kstride_;
        for (int a = 0; a < d_; ++a) {
          const int n = counts[a];
          const double L = xg.torus().period[a], dx = xg.dx(a);
          const double u = X[a] / dx;
          const double r = std::round(u);
          for (int j = 0; j < n; ++j) {
            if (std::abs(u - r) < 1e-12)
              kr[j] = (((static_cast<int>(r) % n) + n) % n == j) ? 1.0 : 0.0;
            else
              kr[j] = detail::dirichlet(2.0 * kPi * (X[a] - j * dx) / L, n);
          }
          kr += n;
        }
        xi.clear();
      } else {
        for (int a = 0; a < d_; ++a) {
          int idx[4];
          double w[4];
          int c = detail::axis_stencil(X[a] / xg.dx(a), counts[a], order, true, idx, w);
          xi[a].assign(idx, idx + c);
          xw[a].assign(w, w + c);
        }
      }
      // tensor product: velocity corners (x corners unless spectral)
      auto emit = [&](int vcol, double wv) {
        if (spectral_) {
          col_.push_back(vcol);
          val_.push_back(wv);
          return;
        }
        std::vector<int> m(d_, 0);
        while (true) {
          double w = wv;
          int xidx = 0;
          for (int a = 0; a < d_; ++a) {
            w *= xw[a][m[a]];
            xidx = xidx * counts[a] + xi[a][m[a]];
          }
          if (w != 0.0) {
            col_.push_back(vcol * nx_ + xidx);
            val_.push_back(w);
          }
          int a = d_ - 1;
          for (; a >= 0; --a) {
            if (++m[a] < static_cast<int>(xi[a].size())) break;
            m[a] = 0;
          }
          if (a < 0) break;
        }
      };
      std::vector<int> m(d_, 0);
      while (true) {
        double w = 1.0;
        int vidx = 0;
        for (int a = 0; a < d_; ++a) {
          w *= vw[a][m[a]];
          vidx = vidx * vg.n() + vi[a][m[a]];
        }
        if (w != 0.0) emit(vidx, w);
        int a = d_ - 1;
        for (; a >= 0; --a) {
          if (++m[a] < static_cast<int>(vi[a].size())) break;
          m[a] = 0;
        }
        if (a < 0) break;
      }
      row_[k + 1] = col_.size();
    }
    counts_ = counts;
  }

  bool spectral() const { return spectral_; }
  const PullbackStats& stats() const { return stats_; }

  void apply(const double* in, double* out) const {
    const std::size_t total = static_cast<std::size_t>(nx_) * nv_;
    if (!spectral_) {
      for (std::size_t k = 0; k < total; ++k) {
        double s = 0.0;
        for (std::size_t p = row_[k]; p < row_[k + 1]; ++p) s += val_[p] * in[col_[p]];
        out[k] = s;
      }
      return;
    }
    Vec prod(nx_);
    for (std::size_t k = 0; k < total; ++k) {
      const double* kr = kern_.data() + k * kstride_;
      // product kernel over the spatial grid, last axis fastest
      for (int j = 0; j < nx_; ++j) {
        int r = j, off = kstride_;
        double w = 1.0;
        for (int a = d_ - 1; a >= 0; --a) {
          off -= counts_[a];
          w *= kr[off + r % counts_[a]];
          r /= counts_[a];
        }
        prod[j] = w;
      }
      double s = 0.0;
      for (std::size_t p = row_[k]; p < row_[k + 1]; ++p) {
        const double* u = in + static_cast<std::size_t>(col_[p]) * nx_;
        double t = 0.0;
        for (int j = 0; j < nx_; ++j) t += prod[j] * u[j];
        s += val_[p] * t;
      }
      out[k] = s;
    }
  }
  Vec apply(const Vec& in) const {
    Vec out(in.size());
    apply(in.data(), out.data());
    return out;
  }

  // rescale to rows summing to one and m-weighted columns summing to m.
  // false (matrix untouched) when some node receives no weight from any foot
  bool balance(const Vec& m, int max_iter = 300, double tol = 1e-14) {
    require(!spectral_, "balancing applies to the sparse pullback only");
    const std::size_t total = static_cast<std::size_t>(nx_) * nv_;
    require(m.size() == total, "balance weights size mismatch");
    Vec r(total, 1.0), c(total, 1.0), cs(total, 0.0);
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t p = row_[i]; p < row_[i + 1]; ++p) cs[col_[p]] += val_[p];
    for (std::size_t j = 0; j < total; ++j)
      if (m[j] > 0.0 && !(cs[j] > 0.0)) return false;
    double res = INFINITY;
    int it = 0;
    for (; it < max_iter; ++it) {
      std::fill(cs.begin(), cs.end(), 0.0);
      for (std::size_t i = 0; i < total; ++i)
        for (std::size_t p = row_[i]; p < row_[i + 1]; ++p) cs[col_[p]] += m[i] * r[i] * val_[p] * c[col_[p]];
      res = 0.0;
      for (std::size_t j = 0; j < total; ++j) {
        if (m[j] <= 0.0) continue;
        res = std::max(res, std::abs(cs[j] / m[j] - 1.0));
        c[j] *= m[j] / cs[j];
      }
      for (std::size_t i = 0; i < total; ++i) {
        double s = 0.0;
        for (std::size_t p = row_[i]; p < row_[i + 1]; ++p) s += val_[p] * c[col_[p]];
        r[i] = 1.0 / s;
      }
      if (res < tol) break;
    }
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t p = row_[i]; p < row_[i + 1]; ++p) val_[p] *= r[i] * c[col_[p]];
    stats_.balance_residual = res;
    stats_.balance_iterations = it;
    stats_.balanced = true;
    return true;
  }

  void set_clamped_mass(const Vec& m, const Feet& feet, double vmax) {
    double tot = 0.0, cl = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      tot += m[k];
      bool out = false;
      for (int a = 0; a < d_; ++a) out = out || std::abs(feet.V[k * d_ + a]) > vmax;
      if (out) cl += m[k];
    }
    stats_.clamped_mass = tot > 0.0 ? cl / tot : 0.0;
  }

 private:
  int nx_ = 0, nv_ = 0, d_ = 0;
  bool spectral_ = false;
  std::vector<std::size_t> row_;
  std::vector<int> col_;
  Vec val_;
  int kstride_ = 0;
  Vec kern_;
  std::vector<int> counts_;
  PullbackStats stats_;
};

// ---------------- the split solver ----------------

class Solver {
 public:
  Solver(const PotentialField& field, const CollisionModel& M, const SpatialGrid& xg, const SolverConfig& cfg,
         const DegenerateSubspace* sub = nullptr)
      : field_(&field), M_(&M), xg_(xg), cfg_(cfg) {
    cfg.validate();
    require(field.dim() == xg.dim() && M.grid.dim() == xg.dim(), "grid dimensions differ");
    require(M.assembled(), "kernel table not assembled");
    const VelocityGrid& vg = M.grid;
    nx_ = xg.size();
    nv_ = vg.size();
    tab_ = maxwellian_table(field, xg, vg);
    const std::size_t total = static_cast<std::size_t>(nx_) * nv_;
    smue_.resize(total);
    m_.resize(total);
    e_.resize(total);
    for (int iv = 0; iv < nv_; ++iv)
      for (int ix = 0; ix < nx_; ++ix) {
        std::size_t k = static_cast<std::size_t>(iv) * nx_ + ix;
        smue_[k] = std::exp(0.5 * tab_.log_mu_e[k]);
        m_[k] = xg.weight() * vg.weight(iv) * std::exp(tab_.log_mu_e[k]);
        e_[k] = 0.5 * vg.v2(iv) + tab_.phi[ix];
      }
    if (sub) {
      deg_ = sub->basis;
    } else {
      deg_ = degenerate_subspace(field, 256).basis;
    }
    if (cfg.collisions)
      stepper_.emplace(M, tab_.phi, 0.5 * cfg.dt / cfg.collision_substeps, cfg.mode == SolverMode::Nonlinear,
                       cfg.workers);
    feet_ = compute_feet(field, xg, vg, cfg.dt, cfg.flow_substeps, cfg.workers);
    pull_ = Pullback(feet_, xg, vg, cfg.interpolation_order, cfg.spectral_x);
    pull_.set_clamped_mass(m_, feet_, vg.vmax());
    fix_ = cfg.balance && !cfg.spectral_x;
    if (fix_ && cfg.interpolation_order == 1 && !pull_.balance(m_))
      warnings_.push_back("BalanceSkipped: some grid node receives no pullback weight; using the invariant fixer only");
    double dxmin = INFINITY;
    for (int a = 0; a < xg.dim(); ++a) dxmin = std::min(dxmin, xg.dx(a));
    if (cfg.dt * feet_.max_speed > 4.0 * dxmin)
      warnings_.push_back("CFLAccuracy: dt * max|V| = " + fmt(cfg.dt * feet_.max_speed) + " > 4 dx = " +
                          fmt(4.0 * dxmin));
  }

  const SolverConfig& config() const { return cfg_; }
  const Pullback& pullback() const { return pull_; }
  const Feet& feet() const { return feet_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const MaxwellianTable& table() const { return tab_; }
  const std::optional<CollisionStepper>& stepper() const { return stepper_; }

  // one Strang step on perturbation values (layout iv * Nx + ix)
  void step(Vec& f) const {
    collide(f);
    transport(f);
    collide(f);
  }

  void collide(Vec& f) const {
    if (!stepper_) return;
    Eigen::Map<RowMat> F(f.data(), nv_, nx_);
    Eigen::MatrixXd G = F;
    for (int s = 0; s < cfg_.collision_substeps; ++s) stepper_->advance(G);
    F = G;
  }

  // g = f / sqrt(mu_E) is constant along characteristics
  void transport(Vec& f) const {
    const std::size_t total = f.size();
    Vec g(total), gn(total);
    for (std::size_t k = 0; k < total; ++k) g[k] = f[k] / smue_[k];
    Vec before;
    if (fix_) before = invariants_of(g);
    pull_.apply(g.data(), gn.data());
    if (fix_) fix_invariants(gn, before);
    for (std::size_t k = 0; k < total; ++k) f[k] = gn[k] * smue_[k];
  }

  // [M, E, J_b...] of g under the weight m = omega mu_E
  Vec invariants_of(const Vec& g) const {
    const int nb = static_cast<int>(deg_.size()), d = xg_.dim();
    Vec r(2 + nb, 0.0);
    for (int iv = 0; iv < nv_; ++iv) {
      Vec vb(nb, 0.0);
      for (int b = 0; b < nb; ++b)
        for (int a = 0; a < d; ++a) vb[b] += deg_[b][a] * M_->grid.coord(iv, a);
      for (int ix = 0; ix < nx_; ++ix) {
        std::size_t k = static_cast<std::size_t>(iv) * nx_ + ix;
        const double mg = m_[k] * g[k];
        r[0] += mg;
        r[1] += e_[k] * mg;
        for (int b = 0; b < nb; ++b) r[2 + b] += vb[b] * mg;
      }
    }
    return r;
  }

  double sqrt_mu_e(std::size_t k) const { return smue_[k]; }

 private:
  // restores M, E and J_b with dg in span{1, e, v.b, l}, l the entropy
  // gradient, at zero first-order entropy change
  void fix_invariants(Vec& g, const Vec& target) const {
    Vec now = invariants_of(g);
    const int nb = static_cast<int>(deg_.size()), d = xg_.dim(), K = 3 + nb;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(K);
    double mag = 0.0;
    for (int j = 0; j < 2 + nb; ++j) {
      rhs[j] = target[j] - now[j];
      mag = std::max(mag, std::abs(rhs[j]));
    }
    if (mag == 0.0) return;
    const std::size_t total = g.size();
    auto basis = [&](std::size_t k, double* b) {
      const int iv = static_cast<int>(k / nx_);
      b[0] = 1.0;
      b[1] = e_[k];
      for (int q = 0; q < nb; ++q) {
        double s = 0.0;
        for (int a = 0; a < d; ++a) s += deg_[q][a] * M_->grid.coord(iv, a);
        b[2 + q] = s;
      }
      b[2 + nb] = cfg_.mode == SolverMode::Nonlinear ? std::log(std::max(1.0 + g[k], kUnderflow)) : g[k];
    };
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(K, K);
    std::vector<double> b(K);
    for (std::size_t k = 0; k < total; ++k) {
      basis(k, b.data());
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) G(i, j) += m_[k] * b[i] * b[j];
    }
    Eigen::VectorXd alpha = G.completeOrthogonalDecomposition().solve(rhs);
    std::vector<double> bb(K);
    Vec dg(total);
    for (std::size_t k = 0; k < total; ++k) {
      basis(k, bb.data());
      double s = 0.0;
      for (int i = 0; i < K; ++i) s += alpha[i] * bb[i];
      dg[k] = s;
    }
    for (std::size_t k = 0; k < total; ++k) g[k] += dg[k];
  }

  const PotentialField* field_;
  const CollisionModel* M_;
  SpatialGrid xg_;
  SolverConfig cfg_;
  int nx_ = 0, nv_ = 0;
  MaxwellianTable tab_;
  Vec smue_, m_, e_;
  std::vector<Vec> deg_;
  std::optional<CollisionStepper> stepper_;
  Feet feet_;
  Pullback pull_;
  bool fix_ = true;
  std::vector<std::string> warnings_;
};

// step on a DistributionField in perturbation_f or absolute_F form
inline DistributionField step(const DistributionField& state, const PotentialField& field, const Solver& solver) {
  if (state.rep == Representation::PerturbationF) {
    DistributionField out = state;
    solver.step(out.values);
    return out;
  }
  require(state.rep == Representation::AbsoluteF, "step needs perturbation_f or absolute_F");
  ConversionReport rep;
  auto f = to_perturbation(field, state, &rep);
  solver.step(f.values);
  auto F = to_absolute(field, f);
  if (solver.config().mode == SolverMode::Nonlinear) {
    double mn = *std::min_element(F.values.begin(), F.values.end());
    if (mn < -solver.config().negative_tol)
      throw Error(ErrorKind::NegativeDensity, "min F = " + fmt(mn) + " after step");
  }
  return F;
}

// ---------------- initial data ----------------

enum class InitialKind { Generic, Microscopic, ZeroInvariant };

inline InitialKind parse_initial_kind(const std::string& s) {
  if (s == "generic") return InitialKind::Generic;
  if (s == "microscopic") return InitialKind::Microscopic;
  if (s == "zero_invariant") return InitialKind::ZeroInvariant;
  throw Error(ErrorKind::Parse, "unknown initial data kind '" + s + "'");
}

// removes span{sqrt mu_E, e sqrt mu_E, (b.v) sqrt mu_E} from f globally
inline void remove_invariants(const PotentialField& field, DistributionField& f, const DegenerateSubspace& sub) {
  auto t = maxwellian_table(field, f.xg, f.vg);
  const int d = f.vg.dim(), nb = static_cast<int>(sub.basis.size()), K = 2 + nb;
  const std::size_t total = f.values.size();
  std::vector<Vec> psi(K, Vec(total));
  for (int iv = 0; iv < f.nv(); ++iv)
    for (int ix = 0; ix < f.nx(); ++ix) {
      std::size_t k = static_cast<std::size_t>(iv) * f.nx() + ix;
      const double s = std::exp(0.5 * t.log_mu_e[k]);
      psi[0][k] = s;
      psi[1][k] = (0.5 * f.vg.v2(iv) + t.phi[ix]) * s;
      for (int b = 0; b < nb; ++b) {
        double vb = 0.0;
        for (int a = 0; a < d; ++a) vb += sub.basis[b][a] * f.vg.coord(iv, a);
        psi[2 + b][k] = vb * s;
      }
    }
  Eigen::MatrixXd G(K, K);
  Eigen::VectorXd r(K);
  for (int a = 0; a < K; ++a) {
    double ra = 0.0;
    for (std::size_t k = 0; k < total; ++k) ra += f.weight(static_cast<int>(k / f.nx())) * psi[a][k] * f.values[k];
    r[a] = ra;
    for (int b = 0; b < K; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < total; ++k) s += f.weight(static_cast<int>(k / f.nx())) * psi[a][k] * psi[b][k];
      G(a, b) = s;
    }
  }
  Eigen::VectorXd c = G.ldlt().solve(r);
  for (std::size_t k = 0; k < total; ++k)
    for (int a = 0; a < K; ++a) f.values[k] -= c[a] * psi[a][k];
}

// f = sqrt(mu_E) g with g a random combination of low spatial modes times
// low-degree polynomials damped by exp(-|v|^2/8); max |g| = amplitude
inline DistributionField random_perturbation(const PotentialField& field, const SpatialGrid& xg,
                                             const VelocityGrid& vg, const DegenerateSubspace& sub,
                                             std::uint64_t seed, double amplitude, InitialKind kind) {
  require(amplitude >= 0.0 && std::isfinite(amplitude), "amplitude must be finite and >= 0");
  const int d = xg.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01(0.0, 1.0);
  // spatial modes k in {-1, 0, 1}^d up to sign, cos and sin
  std::vector<std::vector<int>> modes;
  int tot = 1;
  for (int a = 0; a < d; ++a) tot *= 3;
  for (int q = 0; q < tot; ++q) {
    std::vector<int> k(d);
    int r = q;
    for (int a = 0; a < d; ++a) {
      k[a] = r % 3 - 1;
      r /= 3;
    }
    modes.push_back(k);
  }
  // velocity monomials of degree <= 2
  std::vector<std::vector<int>> polys = {{}};
  for (int a = 0; a < d; ++a) polys.push_back({a});
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) polys.push_back({a, b});
  const int P = static_cast<int>(polys.size()), Mo = static_cast<int>(modes.size());
  std::vector<double> cc(static_cast<std::size_t>(Mo) * P), cs(cc.size());
  for (auto& c : cc) c = N01(rng);
  for (auto& c : cs) c = N01(rng);
  auto t = maxwellian_table(field, xg, vg);
  DistributionField f(xg, vg, Representation::PerturbationF);
  Vec x(d);
  for (int ix = 0; ix < xg.size(); ++ix) {
    xg.point(ix, x.data());
    Vec cosm(Mo), sinm(Mo);
    for (int q = 0; q < Mo; ++q) {
      double th = 0.0;
      for (int a = 0; a < d; ++a) th += 2.0 * kPi * modes[q][a] * x[a] / xg.torus().period[a];
      cosm[q] = std::cos(th);
      sinm[q] = std::sin(th);
    }
    for (int iv = 0; iv < vg.size(); ++iv) {
      double g = 0.0;
      for (int p = 0; p < P; ++p) {
        double mono = 1.0;
        for (int a : polys[p]) mono *= vg.coord(iv, a);
        double s = 0.0;
        for (int q = 0; q < Mo; ++q) s += cc[q * P + p] * cosm[q] + cs[q * P + p] * sinm[q];
        g += mono * s;
      }
      g *= std::exp(-0.125 * vg.v2(iv));
      f.at(ix, iv) = g * t.sqrt_mu_e(ix, iv);
    }
  }
  if (kind == InitialKind::Microscopic) {
    f = project_P(field, f).residual;
  } else if (kind == InitialKind::ZeroInvariant) {
    remove_invariants(field, f, sub);
  }
  double gmax = 0.0;
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) gmax = std::max(gmax, std::abs(f.at(ix, iv)) / t.sqrt_mu_e(ix, iv));
  if (gmax > 0.0)
    for (double& v : f.values) v *= amplitude / gmax;
  return f;
}

// ---------------- run logs ----------------

struct LogEntry {
  double t = 0.0;
  ConservationReport cons;
  double l2 = 0.0;       // ||f||_2
  double hinf = 0.0;     // grid sup of |w f|
  double quad = 0.0;     // <L f, f>
  double nu_norm = 0.0;  // ||f||_nu^2
  Vec deviation_lhs, deviation_rhs;
};

struct RunLog {
  SolverConfig cfg;
  Vec deltas = {0.1, 0.5, 0.9};
  std::vector<LogEntry> entries;
  std::vector<std::string> warnings;
  PullbackStats pullback;
  DistributionField final_state;  // perturbation_f

  Vec times() const {
    Vec t;
    for (const auto& e : entries) t.push_back(e.t);
    return t;
  }
  template <class Fn>
  Vec series(Fn fn) const {
    Vec s;
    for (const auto& e : entries) s.push_back(fn(e));
    return s;
  }
};

struct RunSummary {
  double mass_drift = 0.0, energy_drift = 0.0;  // relative to the initial L1 scales
  Vec momentum_drift;                           // degenerate directions, relative
  Vec momentum_change;                          // all axes, absolute max |J_k(t) - J_k(0)|
  double max_entropy_increase = 0.0;            // over consecutive entries
  int deviation_violations = 0;
  double min_F = INFINITY;
};

inline RunSummary summarize(const RunLog& log, const DistributionField& F0) {
  require(!log.entries.empty(), "empty run log");
  RunSummary s;
  double m1 = 0.0, e1 = 0.0, j1 = 0.0;
  for (int iv = 0; iv < F0.nv(); ++iv)
    for (int ix = 0; ix < F0.nx(); ++ix) {
      const double a = F0.weight(iv) * std::abs(F0.at(ix, iv));
      m1 += a;
      e1 += 0.5 * F0.vg.v2(iv) * a;
      j1 += std::sqrt(F0.vg.v2(iv)) * a;
    }
  const auto& c0 = log.entries.front().cons;
  s.momentum_drift.assign(c0.J.size(), 0.0);
  s.momentum_change.assign(c0.J_full.size(), 0.0);
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    const auto& c = log.entries[i].cons;
    s.mass_drift = std::max(s.mass_drift, std::abs(c.M - c0.M) / m1);
    s.energy_drift = std::max(s.energy_drift, std::abs(c.E - c0.E) / (e1 + m1));
    for (std::size_t b = 0; b < c.J.size(); ++b)
      s.momentum_drift[b] = std::max(s.momentum_drift[b], std::abs(c.J[b] - c0.J[b]) / j1);
    for (std::size_t b = 0; b < c.J_full.size(); ++b)
      s.momentum_change[b] = std::max(s.momentum_change[b], std::abs(c.J_full[b] - c0.J_full[b]));
    if (i > 0) s.max_entropy_increase = std::max(s.max_entropy_increase, c.entropy - log.entries[i - 1].cons.entropy);
    for (std::size_t q = 0; q < log.entries[i].deviation_lhs.size(); ++q)
      if (log.entries[i].deviation_lhs[q] > log.entries[i].deviation_rhs[q] + 1e-12) ++s.deviation_violations;
    s.min_F = std::min(s.min_F, c.min_F);
  }
  return s;
}

inline LogEntry diagnose_state(const Vec& f, double t, const PotentialField& field, const CollisionModel& M,
                               const SpatialGrid& xg, const DegenerateSubspace& sub, const ConservationReport* c0,
                               const Vec& deltas, const CollisionStepper* stepper) {
  DistributionField fd(xg, M.grid, Representation::PerturbationF);
  fd.values = f;
  auto F = to_absolute(field, fd);
  LogEntry e;
  e.t = t;
  e.cons = conservation_report(field, F, sub, MomentumMode::MuE);
  Vec w = weight_values(field, xg, M.grid, M.beta);
  const int nx = xg.size();
  for (int iv = 0; iv < M.size(); ++iv)
    for (int ix = 0; ix < nx; ++ix) {
      std::size_t k = static_cast<std::size_t>(iv) * nx + ix;
      const double om = xg.weight() * M.grid.weight(iv);
      e.l2 += om * f[k] * f[k];
      e.nu_norm += om * M.nu[iv] * f[k] * f[k];
      e.hinf = std::max(e.hinf, std::abs(w[k] * f[k]));
    }
  e.l2 = std::sqrt(e.l2);
  if (stepper) {
    Eigen::Map<const RowMat> Fm(f.data(), M.size(), nx);
    Eigen::MatrixXd G = Fm;
    e.quad = xg.weight() * stepper->quadratic_form(G).sum();
  }
  const ConservationReport& r0 = c0 ? *c0 : e.cons;
  for (double dl : deltas) {
    auto db = deviation_check(r0, field, F, dl);
    e.deviation_lhs.push_back(db.lhs);
    e.deviation_rhs.push_back(db.rhs);
  }
  return e;
}

// f0 in perturbation_f or absolute_F
inline RunLog simulate(const DistributionField& init, const PotentialField& field, const CollisionModel& M,
                       const SolverConfig& cfg, const DegenerateSubspace& sub,
                       const std::function<void(int, double, const Vec&)>& on_epoch = {}) {
  cfg.validate();
  DistributionField f0;
  if (init.rep == Representation::AbsoluteF) {
    ConversionReport rep;
    f0 = to_perturbation(field, init, &rep);
  } else {
    require(init.rep == Representation::PerturbationF, "simulate needs perturbation_f or absolute_F");
    f0 = init;
  }
  for (double v : f0.values) require(std::isfinite(v), "initial data must be finite");
  require(f0.vg.n() == M.grid.n() && f0.vg.dim() == M.grid.dim() && f0.vg.vmax() == M.grid.vmax(),
          "initial data velocity grid differs from the collision model grid");
  Solver solver(field, M, f0.xg, cfg, &sub);
  RunLog log;
  log.cfg = cfg;
  log.warnings = solver.warnings();
  log.pullback = solver.pullback().stats();
  const CollisionStepper* st = solver.stepper() ? &*solver.stepper() : nullptr;
  // the Rayleigh quotient uses L without e^{-Phi}; fall back to an unscaled stepper without collisions
  std::optional<CollisionStepper> quad_stepper;
  if (!st) {
    quad_stepper.emplace(M, Vec(f0.nx(), 0.0), cfg.dt, false);
    st = &*quad_stepper;
  }
  Vec f = f0.values;
  log.entries.push_back(diagnose_state(f, 0.0, field, M, f0.xg, sub, nullptr, log.deltas, st));
  const ConservationReport c0 = log.entries.front().cons;
  if (on_epoch) on_epoch(0, 0.0, f);
  const int steps = cfg.steps();
  for (int n = 1; n <= steps; ++n) {
    solver.step(f);
    if (cfg.mode == SolverMode::Nonlinear) {
      double mn = INFINITY;
      for (int iv = 0; iv < M.size(); ++iv)
        for (int ix = 0; ix < f0.nx(); ++ix) {
          std::size_t k = static_cast<std::size_t>(iv) * f0.nx() + ix;
          mn = std::min(mn, solver.table().mu_e(ix, iv) + solver.sqrt_mu_e(k) * f[k]);
        }
      if (mn < -cfg.negative_tol)
        throw Error(ErrorKind::NegativeDensity, "min F = " + fmt(mn) + " at t = " + fmt(n * cfg.dt));
    }
    if (n % cfg.diagnostics_every == 0 || n == steps) {
      log.entries.push_back(diagnose_state(f, n * cfg.dt, field, M, f0.xg, sub, &c0, log.deltas, st));
      if (on_epoch) on_epoch(n, n * cfg.dt, f);
    }
  }
  log.final_state = f0;
  log.final_state.values = f;
  return log;
}

// ---------------- mild formulation ----------------

struct DuhamelOptions {
  bool gain = true;         // K and Gamma; false leaves absorption and transport
  bool spectral_x = true;   // trigonometric interpolation in x
  int interpolation_order = 1;
  int substeps = 8;         // Simpson substeps for the absorption integral (even)
  int workers = 1;
};

namespace detail {

// feet and A(tau) = int_0^tau e^{-Phi(X)} nu(V) along the backward trajectory of every node
inline void absorbed_feet(const PotentialField& field, const CollisionModel& M, const SpatialGrid& xg, double tau,
                          int substeps, Feet& feet, Vec& A, int workers) {
  const int d = xg.dim(), nx = xg.size(), nv = M.size();
  const std::size_t total = static_cast<std::size_t>(nx) * nv;
  const int ns = substeps + (substeps % 2);
  feet.d = d;
  feet.tau = tau;
  feet.X.resize(total * d);
  feet.V.resize(total * d);
  A.assign(total, 0.0);
  const bool flat = field.terms().empty();
  parallel_for(total, workers, [&](std::size_t lo, std::size_t hi) {
    FlowPropagator P(field, false);
    Vec x(d);
    for (std::size_t k = lo; k < hi; ++k) {
      const int iv = static_cast<int>(k / nx), ix = static_cast<int>(k % nx);
      xg.point(ix, x.data());
      P.reset(x.data(), M.grid.v(iv));
      auto rate = [&]() {
        double nu = flat ? M.nu[iv] : collision_frequency(M, P.v().data());
        return std::exp(-P.phi()) * nu;
      };
      double s = rate();
      for (int q = 1; q <= ns; ++q) {
        P.step(-tau / ns);
        s += (q == ns ? 1.0 : (q % 2 ? 4.0 : 2.0)) * rate();
      }
      A[k] = s * tau / (3.0 * ns);
      for (int a = 0; a < d; ++a) {
        feet.X[k * d + a] = field.torus().wrap(P.x()[a], a);
        feet.V[k * d + a] = P.v()[a];
      }
    }
  });
}

}  // namespace detail

// h(t) from h(t - dt) by the mild formula with the gain frozen at t - dt and
// two-point Gauss quadrature in time
inline DistributionField duhamel_step(const DistributionField& h, const PotentialField& field, const CollisionModel& M,
                                      double t, double dt, const DuhamelOptions& opt = {}) {
  require(h.rep == Representation::WeightedH, "duhamel_step needs weighted_h");
  require(std::isfinite(t) && std::isfinite(dt) && dt > 0.0, "dt must be positive");
  require(opt.substeps >= 2, "substeps must be >= 2");
  const SpatialGrid& xg = h.xg;
  const int nx = xg.size(), nv = M.size();
  const std::size_t total = h.values.size();
  Vec w = weight_values(field, xg, M.grid, M.beta);
  Vec phi = phi_values(field, xg);
  // frozen source G = w (e^{-Phi} K f + e^{-Phi/2} Gamma(f, f))
  Vec G(total, 0.0);
  if (opt.gain) {
    Eigen::MatrixXd f(nv, nx);
    for (int iv = 0; iv < nv; ++iv)
      for (int ix = 0; ix < nx; ++ix) f(iv, ix) = h.at(ix, iv) / w[static_cast<std::size_t>(iv) * nx + ix];
    Eigen::VectorXd sw = Eigen::Map<const Eigen::VectorXd>(M.sqrt_w.data(), nv);
    Eigen::MatrixXd Kf = sw.cwiseInverse().asDiagonal() * (M.Khat * (sw.asDiagonal() * f));
    GammaBatch gb(M);
    Eigen::MatrixXd Gm = gb(f, opt.workers);
    for (int iv = 0; iv < nv; ++iv)
      for (int ix = 0; ix < nx; ++ix) {
        std::size_t k = static_cast<std::size_t>(iv) * nx + ix;
        G[k] = w[k] * (std::exp(-phi[ix]) * Kf(iv, ix) + std::exp(-0.5 * phi[ix]) * Gm(iv, ix));
      }
  }
  auto pull = [&](double tau, Vec& A, const Vec& src) {
    Feet ft;
    detail::absorbed_feet(field, M, xg, tau, opt.substeps, ft, A, opt.workers);
    Pullback P(ft, xg, M.grid, opt.interpolation_order, opt.spectral_x);
    return P.apply(src);
  };
  DistributionField out(xg, M.grid, Representation::WeightedH);
  Vec A;
  Vec first = pull(dt, A, h.values);
  for (std::size_t k = 0; k < total; ++k) out.values[k] = std::exp(-A[k]) * first[k];
  if (opt.gain) {
    const double g = 0.5 / std::sqrt(3.0);
    for (double sigma : {dt * (0.5 - g), dt * (0.5 + g)}) {
      Vec Aq;
      Vec Gq = pull(sigma, Aq, G);
      for (std::size_t k = 0; k < total; ++k) out.values[k] += 0.5 * dt * std::exp(-Aq[k]) * Gq[k];
    }
  }
  return out;
}

// the splitting step on the weighted representation, for comparison with the mild step
inline DistributionField split_step_weighted(const DistributionField& h, const PotentialField& field,
                                             const CollisionModel& M, const SolverConfig& cfg,
                                             const DegenerateSubspace& sub) {
  require(h.rep == Representation::WeightedH, "split_step_weighted needs weighted_h");
  auto f = from_weighted(field, h, M.beta);
  Solver s(field, M, h.xg, cfg, &sub);
  s.step(f.values);
  return to_weighted(field, f, M.beta);
}

// ---------------- stability certificate ----------------

struct Certificate {
  double numerator = 0.0;    // sup_t ||h(t)||_inf
  double denominator = 0.0;  // ||h0||_inf + sqrt(excess0 + |M0| + |E0|)
  double C_measured = 0.0;
  bool zero_over_zero = false;
  bool finite = true;
  bool holds = false;
  double T0 = 0.0;
  double C_T0 = 0.0;  // measured over the first window
  Vec window_end_h;   // ||h(n T0)||_inf, n = 1..4
  Vec window_bound;   // 2^{-n} ||h0|| + 2 C_T0 sqrt(...)
  bool recursion_holds = false;
};

inline Certificate stability_certificate(const RunLog& log, const ConservationReport& r0, double ceiling = 1e3) {
  require(log.entries.size() >= 2, "certificate needs a logged run");
  Certificate c;
  const double h0 = log.entries.front().hinf;
  const double S = std::sqrt(std::max(0.0, r0.entropy_excess + std::abs(r0.M) + std::abs(r0.E)));
  c.denominator = h0 + S;
  for (const auto& e : log.entries) c.numerator = std::max(c.numerator, e.hinf);
  if (c.denominator == 0.0) {
    c.zero_over_zero = c.numerator == 0.0;
    c.C_measured = c.zero_over_zero ? 0.0 : INFINITY;
  } else {
    c.C_measured = c.numerator / c.denominator;
  }
  c.finite = std::isfinite(c.C_measured);
  c.holds = c.finite && c.C_measured <= ceiling;
  const double t0 = log.entries.front().t, t1 = log.entries.back().t;
  c.T0 = (t1 - t0) / 4.0;
  double sup1 = 0.0;
  for (const auto& e : log.entries)
    if (e.t <= t0 + c.T0 + 1e-12) sup1 = std::max(sup1, e.hinf);
  c.C_T0 = c.denominator > 0.0 ? sup1 / c.denominator : 0.0;
  c.recursion_holds = true;
  for (int n = 1; n <= 4; ++n) {
    const double tn = t0 + n * c.T0;
    const LogEntry* best = &log.entries.front();
    for (const auto& e : log.entries)
      if (std::abs(e.t - tn) < std::abs(best->t - tn)) best = &e;
    const double bound = std::ldexp(h0, -n) + 2.0 * c.C_T0 * S;
    c.window_end_h.push_back(best->hinf);
    c.window_bound.push_back(bound);
    if (best->hinf > bound * (1.0 + 1e-12)) c.recursion_holds = false;
  }
  return c;
}

// sup_t e^{lambda t} ||h(t)||_inf / ||h0||_inf
inline double weighted_decay_sup(const RunLog& log, double lambda) {
  const double h0 = log.entries.front().hinf;
  if (h0 == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& e : log.entries) s = std::max(s, std::exp(lambda * (e.t - log.entries.front().t)) * e.hinf / h0);
  return s;
}


// ---------------- run batteries ----------------

// <Lf, f> and ||f||_nu^2 over the first `window` time units
inline RayleighSeries rayleigh_series(const RunLog& log, double window = 1.0) {
  RayleighSeries s;
  const double t0 = log.entries.front().t;
  for (const auto& e : log.entries) {
    if (e.t > t0 + window + 1e-12) break;
    s.t.push_back(e.t);
    s.quad.push_back(e.quad);
    s.nu_norm.push_back(e.nu_norm);
    s.invariant_drift = std::max({s.invariant_drift, std::abs(e.cons.M), std::abs(e.cons.E)});
    for (double j : e.cons.J) s.invariant_drift = std::max(s.invariant_drift, std::abs(j));
  }
  return s;
}

struct Battery {
  std::vector<RunLog> logs;
  std::vector<RayleighSeries> series;
  PositivityResult positivity;
};

// independent runs from seeds seed0, seed0 + 1, ...; results in run order
inline Battery run_battery(const PotentialField& field, const CollisionModel& M, const SpatialGrid& xg,
                           const DegenerateSubspace& sub, const SolverConfig& cfg, int runs, std::uint64_t seed0,
                           double amplitude, InitialKind kind, double tol = 1e-8, int workers = 1) {
  require(runs >= 1, "battery needs at least one run");
  Battery b;
  b.logs.resize(runs);
  SolverConfig c = cfg;
  c.workers = 1;
  parallel_for(runs, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      auto f0 = random_perturbation(field, xg, M.grid, sub, seed0 + r, amplitude, kind);
      b.logs[r] = simulate(f0, field, M, c, sub);
    }
  });
  for (const auto& l : b.logs) b.series.push_back(rayleigh_series(l));
  b.positivity = positivity_constant(b.series, tol);
  return b;
}

inline double nu_min(const CollisionModel& M) { return *std::min_element(M.nu.begin(), M.nu.end()); }

}  // namespace boltz

#endif  // BOLTZ_SOLVER_HPP
