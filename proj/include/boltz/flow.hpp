#ifndef BOLTZ_FLOW_HPP
#define BOLTZ_FLOW_HPP

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <random>
#include <unordered_map>

#include "potential.hpp"

namespace boltz {

struct PhasePoint {
  Vec x;
  Vec v;
};

struct FlowSample {
  double s = 0.0;
  Vec X;       // wrapped
  Vec V;
  Vec Jxv;     // dX/dv, row-major
  Vec Jvv;     // dV/dv
  double det = 0.0;
  double H = 0.0;
};

struct PhaseFlowResult {
  std::vector<FlowSample> samples;
  double energy_drift = 0.0;
  double speed_band = 0.0;  // max ||V| - |v||
  Vec X_lift;                // unwrapped endpoint
};

enum class Integrator { Verlet, Yoshida4 };

inline double det_small(const double* A, int d) {
  switch (d) {
    case 1: return A[0];
    case 2: return A[0] * A[3] - A[1] * A[2];
    case 3:
      return A[0] * (A[4] * A[8] - A[5] * A[7]) - A[1] * (A[3] * A[8] - A[5] * A[6]) +
             A[2] * (A[3] * A[7] - A[4] * A[6]);
    default: {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(A, d, d);
      return M.partialPivLu().determinant();
    }
  }
}

inline void check_step(const PotentialField& field, double dt) {
  require(std::isfinite(dt) && dt > 0.0, "dt must be positive");
  if (dt * std::sqrt(field.hessian_bound()) > 0.5)
    throw Error(ErrorKind::StepTooLarge, "dt * ||hess Phi||^(1/2) = " + fmt(dt * std::sqrt(field.hessian_bound())) + " > 0.5");
}

// Symplectic propagation from time t to time s.  Tangent blocks start at
// Jx = 0, Jv = I and are the exact derivative of the discrete map.
class FlowPropagator {
 public:
  FlowPropagator(const PotentialField& field, bool with_tangent, Integrator scheme = Integrator::Yoshida4)
      : f_(field), d_(field.dim()), tangent_(with_tangent), scheme_(scheme),
        g_(d_), H_(d_ * d_), Jx_(d_ * d_), Jv_(d_ * d_), tmp_(d_ * d_) {}

  void reset(const double* x, const double* v) {
    x_.assign(x, x + d_);
    v_.assign(v, v + d_);
    if (tangent_) {
      std::fill(Jx_.begin(), Jx_.end(), 0.0);
      std::fill(Jv_.begin(), Jv_.end(), 0.0);
      for (int i = 0; i < d_; ++i) Jv_[i * d_ + i] = 1.0;
    }
    refresh();
  }

  void step(double h) {
    if (scheme_ == Integrator::Verlet) {
      verlet(h);
    } else {
      static const double c = std::cbrt(2.0);
      static const double w1 = 1.0 / (2.0 - c), w0 = -c / (2.0 - c);
      verlet(w1 * h);
      verlet(w0 * h);
      verlet(w1 * h);
    }
  }

  const Vec& x() const { return x_; }
  const Vec& v() const { return v_; }
  const Vec& Jx() const { return Jx_; }
  const Vec& Jv() const { return Jv_; }
  double phi() const { return phi_; }
  double energy() const { return 0.5 * dot(v_, v_) + phi_; }
  double det() const { return det_small(Jx_.data(), d_); }

 private:
  void refresh() { f_.eval(x_.data(), phi_, g_.data(), tangent_ ? H_.data() : nullptr); }

  // tmp = H * J
  void hmul(const Vec& J) {
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) {
        double s = 0.0;
        for (int k = 0; k < d_; ++k) s += H_[i * d_ + k] * J[k * d_ + j];
        tmp_[i * d_ + j] = s;
      }
  }

  void verlet(double h) {
    const double hh = 0.5 * h;
    for (int i = 0; i < d_; ++i) v_[i] -= hh * g_[i];
    if (tangent_) {
      hmul(Jx_);
      for (int k = 0; k < d_ * d_; ++k) Jv_[k] -= hh * tmp_[k];
    }
    for (int i = 0; i < d_; ++i) x_[i] += h * v_[i];
    if (tangent_)
      for (int k = 0; k < d_ * d_; ++k) Jx_[k] += h * Jv_[k];
    refresh();
    for (int i = 0; i < d_; ++i) v_[i] -= hh * g_[i];
    if (tangent_) {
      hmul(Jx_);
      for (int k = 0; k < d_ * d_; ++k) Jv_[k] -= hh * tmp_[k];
    }
  }

  const PotentialField& f_;
  int d_;
  bool tangent_;
  Integrator scheme_;
  Vec x_, v_, g_, H_, Jx_, Jv_, tmp_;
  double phi_ = 0.0;
};

inline int step_count(double span, double dt) {
  double n = std::ceil(std::abs(span) / dt - 1e-9);
  return std::max(1, static_cast<int>(n));
}

inline PhaseFlowResult integrate(const PotentialField& field, const PhasePoint& start, double t, double s, double dt,
                                 bool with_tangent, Integrator scheme = Integrator::Yoshida4) {
  const int d = field.dim();
  require(static_cast<int>(start.x.size()) == d && static_cast<int>(start.v.size()) == d, "phase point dimension mismatch");
  for (double c : start.x) require(std::isfinite(c), "non-finite x");
  for (double c : start.v) require(std::isfinite(c), "non-finite v");
  require(std::isfinite(t) && std::isfinite(s), "non-finite time");
  check_step(field, dt);

  FlowPropagator P(field, with_tangent, scheme);
  P.reset(start.x.data(), start.v.data());
  const double H0 = P.energy();
  const double speed0 = norm2(start.v);
  const int n = (s == t) ? 0 : step_count(s - t, dt);
  const double h = n ? (s - t) / n : 0.0;

  PhaseFlowResult out;
  out.samples.reserve(n + 1);
  auto record = [&](int k) {
    FlowSample fs;
    fs.s = (k == n) ? s : t + k * h;
    fs.X = P.x();
    field.torus().wrap(fs.X.data());
    fs.V = P.v();
    if (with_tangent) {
      fs.Jxv = P.Jx();
      fs.Jvv = P.Jv();
      fs.det = P.det();
    }
    fs.H = P.energy();
    out.energy_drift = std::max(out.energy_drift, std::abs(fs.H - H0));
    out.speed_band = std::max(out.speed_band, std::abs(norm2(fs.V) - speed0));
    out.samples.push_back(std::move(fs));
  };
  record(0);
  for (int k = 1; k <= n; ++k) {
    P.step(h);
    record(k);
  }
  out.X_lift = P.x();
  return out;
}

struct DetSeries {
  Vec s;
  Vec det;
  Vec H_drift;
};

// det(dX(s; T0, x, v)/dv) on s in [0, T0], ascending in s
inline DetSeries det_along(const PotentialField& field, const PhasePoint& start, double T0, double dt,
                           Integrator scheme = Integrator::Yoshida4) {
  require(T0 >= 0.0, "T0 must be nonnegative");
  check_step(field, dt);
  FlowPropagator P(field, true, scheme);
  P.reset(start.x.data(), start.v.data());
  const double H0 = P.energy();
  const int n = T0 == 0.0 ? 0 : step_count(T0, dt);
  const double h = n ? -T0 / n : 0.0;
  DetSeries out;
  out.s.resize(n + 1);
  out.det.resize(n + 1);
  out.H_drift.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    if (k) P.step(h);
    int m = n - k;
    out.s[m] = (k == n) ? 0.0 : T0 + k * h;
    out.det[m] = P.det();
    out.H_drift[m] = P.energy() - H0;
  }
  return out;
}

// det at a single time s (integrating T0 -> s), used by the audit
inline double det_at(const PotentialField& field, const double* x, const double* v, double T0, double s, double dt,
                     Integrator scheme = Integrator::Yoshida4) {
  FlowPropagator P(field, true, scheme);
  P.reset(x, v);
  if (s == T0) return P.det();
  int n = step_count(s - T0, dt);
  double h = (s - T0) / n;
  for (int k = 0; k < n; ++k) P.step(h);
  return P.det();
}

// ---------------- covering ----------------

struct CoveringSpec {
  int M1 = 16;         // time cells
  int M2 = 2;          // space cells per axis
  int M3 = 2;          // velocity cells per axis
  double dt = 1e-2;
  double zero_thresh_factor = 1e-3;
  int max_depth = 6;   // adaptive bisection levels
  int audit_samples = 10000;
  std::uint64_t audit_seed = 20240917ull;
  int workers = 1;
  Integrator scheme = Integrator::Yoshida4;
  std::function<void(int depth, std::size_t active, std::size_t points)> progress;
};

struct ZeroInterval {
  double lo = 0.0, hi = 0.0;
  double center = 0.0;
  int time_cell = 0;
};

struct CoveringCell {
  Vec lo, hi;  // 2d bounds: x then v
  int depth = 0;
  double zero_thresh = 0.0;
  double min_outside = 0.0;
  bool resolved = true;
  std::vector<ZeroInterval> intervals;
  double union_length() const {
    double s = 0.0;
    for (const auto& iv : intervals) s += iv.hi - iv.lo;
    return s;
  }
};

struct CoveringAudit {
  int samples = 0;
  int below_delta = 0;   // |det| < delta_star
  int inside = 0;        // of those, inside an interval
  int violations = 0;    // |det| < delta_star outside all intervals
  double min_abs_det_outside = 0.0;
};

struct CoveringReport {
  double T0 = 0.0, N = 0.0, epsilon = 0.0, pad = 0.0, delta_star = 0.0;
  int M1 = 0, M2 = 0, M3 = 0;
  std::vector<CoveringCell> cells;
  int sample_points = 0;
  int unresolved_cells = 0;
  double max_union_length = 0.0;
  CoveringAudit audit;
};

namespace detail {

struct LatticeKey {
  std::array<std::int64_t, 8> c{};
  bool operator==(const LatticeKey& o) const { return c == o.c; }
};
struct LatticeKeyHash {
  std::size_t operator()(const LatticeKey& k) const {
    Fnv1a h;
    h.bytes(k.c.data(), sizeof(std::int64_t) * k.c.size());
    return static_cast<std::size_t>(h.h);
  }
};

inline std::vector<double> events_of(const Vec& det, double h, double thresh) {
  std::vector<double> ev;
  const int n = static_cast<int>(det.size());
  for (int m = 0; m < n; ++m) {
    double a = det[m];
    if (a == 0.0) {
      ev.push_back(m * h);
      continue;
    }
    if (m + 1 < n) {
      double b = det[m + 1];
      if (b != 0.0 && ((a < 0) != (b < 0))) {
        ev.push_back(m * h + h * a / (a - b));
        continue;
      }
    }
    double aa = std::abs(a);
    if (aa < thresh) {
      bool left = (m == 0) || (aa <= std::abs(det[m - 1]));
      bool right = (m + 1 == n) || (aa <= std::abs(det[m + 1]));
      bool near_cross = (m > 0 && det[m - 1] != 0.0 && ((det[m - 1] < 0) != (a < 0)));
      if (left && right && !near_cross) ev.push_back(m * h);
    }
  }
  std::sort(ev.begin(), ev.end());
  return ev;
}

// cubic Lagrange interpolation of a uniformly sampled series
inline double interp_series(const Vec& y, double h, double s) {
  const int n = static_cast<int>(y.size());
  if (n == 1) return y[0];
  double u = s / h;
  int m = static_cast<int>(std::floor(u)) - 1;
  m = std::clamp(m, 0, std::max(0, n - 4));
  int w = std::min(4, n);
  double r = 0.0;
  for (int i = 0; i < w; ++i) {
    double li = 1.0;
    for (int j = 0; j < w; ++j)
      if (j != i) li *= (u - (m + j)) / static_cast<double>(i - j);
    r += li * y[m + i];
  }
  return r;
}

}  // namespace detail

inline CoveringReport build_covering(const PotentialField& field, double T0, double N, double epsilon,
                                     const CoveringSpec& spec) {
  const int d = field.dim();
  require(d <= 4, "covering supports d <= 4");
  require(T0 > 0.0 && std::isfinite(T0), "T0 must be positive");
  require(N >= 1.0 && std::isfinite(N), "N must be >= 1");
  require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
  require(spec.M1 >= 1 && spec.M2 >= 1 && spec.M3 >= 1, "cell counts must be positive");
  require(spec.max_depth >= 0 && spec.max_depth <= 20, "max_depth out of range");
  check_step(field, spec.dt);

  const int D2 = 2 * d;
  const double pad = epsilon / (4.0 * spec.M1);
  const int nsteps = step_count(T0, spec.dt);
  const double hs = T0 / nsteps;

  // lattice resolution: base cells times 2^(depth+1) so centers are lattice points
  const std::int64_t sub = std::int64_t(1) << (spec.max_depth + 1);
  std::vector<std::int64_t> R(D2);
  Vec lo0(D2), span(D2);
  for (int a = 0; a < D2; ++a) {
    bool is_x = a < d;
    R[a] = (is_x ? spec.M2 : spec.M3) * sub;
    lo0[a] = is_x ? 0.0 : -4.0 * N;
    span[a] = is_x ? field.torus().period[a] : 8.0 * N;
  }
  auto coord = [&](int a, std::int64_t idx) { return lo0[a] + span[a] * static_cast<double>(idx) / R[a]; };

  std::unordered_map<detail::LatticeKey, Vec, detail::LatticeKeyHash> cache;
  auto series_for = [&](const detail::LatticeKey& k) -> const Vec& { return cache.at(k); };

  struct LCell {
    std::array<std::int64_t, 8> lo{}, hi{};
    int depth = 0;
  };
  std::vector<LCell> active;
  {
    std::vector<int> counts(D2);
    for (int a = 0; a < D2; ++a) counts[a] = a < d ? spec.M2 : spec.M3;
    std::size_t total = 1;
    for (int a = 0; a < D2; ++a) total *= counts[a];
    for (std::size_t idx = 0; idx < total; ++idx) {
      LCell c;
      std::size_t r = idx;
      for (int a = 0; a < D2; ++a) {
        std::int64_t i = static_cast<std::int64_t>(r % counts[a]);
        r /= counts[a];
        c.lo[a] = i * sub;
        c.hi[a] = (i + 1) * sub;
      }
      active.push_back(c);
    }
  }

  auto cell_points = [&](const LCell& c) {
    std::vector<detail::LatticeKey> pts;
    for (int m = 0; m < (1 << D2); ++m) {
      detail::LatticeKey k;
      for (int a = 0; a < D2; ++a) k.c[a] = (m >> a) & 1 ? c.hi[a] : c.lo[a];
      pts.push_back(k);
    }
    detail::LatticeKey ctr;
    for (int a = 0; a < D2; ++a) ctr.c[a] = (c.lo[a] + c.hi[a]) / 2;
    pts.push_back(ctr);
    return pts;
  };

  auto compute_missing = [&](const std::vector<LCell>& cells) {
    std::vector<detail::LatticeKey> todo;
    std::unordered_map<detail::LatticeKey, int, detail::LatticeKeyHash> seen;
    for (const auto& c : cells)
      for (const auto& k : cell_points(c))
        if (!cache.count(k) && !seen.count(k)) {
          seen[k] = 1;
          todo.push_back(k);
        }
    std::vector<Vec> res(todo.size());
    parallel_for(todo.size(), spec.workers, [&](std::size_t b, std::size_t e) {
      Vec x(d), v(d);
      for (std::size_t i = b; i < e; ++i) {
        for (int a = 0; a < d; ++a) {
          x[a] = coord(a, todo[i].c[a]);
          v[a] = coord(d + a, todo[i].c[d + a]);
        }
        res[i] = det_along(field, PhasePoint{x, v}, T0, spec.dt, spec.scheme).det;
      }
    });
    for (std::size_t i = 0; i < todo.size(); ++i) cache.emplace(todo[i], std::move(res[i]));
  };

  struct Eval {
    double thresh = 0.0;
    std::vector<std::vector<double>> ev;  // per point
    std::vector<ZeroInterval> intervals;
    double union_len = 0.0;
    std::vector<double> sens;  // per axis; +inf on count mismatch
  };
  auto evaluate = [&](const LCell& c) {
    Eval E;
    auto pts = cell_points(c);
    std::vector<double> mags;
    for (const auto& k : pts)
      for (double x : series_for(k)) mags.push_back(std::abs(x));
    std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
    E.thresh = spec.zero_thresh_factor * mags[mags.size() / 2];
    std::vector<double> all;
    for (const auto& k : pts) {
      E.ev.push_back(detail::events_of(series_for(k), hs, E.thresh));
      all.insert(all.end(), E.ev.back().begin(), E.ev.back().end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size();) {
      std::size_t j = i;
      while (j + 1 < all.size() && all[j + 1] - all[j] <= 2.0 * pad) ++j;
      ZeroInterval iv;
      iv.lo = std::max(0.0, all[i] - pad);
      iv.hi = std::min(T0, all[j] + pad);
      iv.center = 0.5 * (all[i] + all[j]);
      iv.time_cell = std::min(spec.M1 - 1, static_cast<int>(std::floor(iv.center / (T0 / spec.M1))));
      E.intervals.push_back(iv);
      E.union_len += iv.hi - iv.lo;
      i = j + 1;
    }
    E.sens.assign(D2, 0.0);
    for (int a = 0; a < D2; ++a)
      for (int m = 0; m < (1 << D2); ++m) {
        if ((m >> a) & 1) continue;
        const auto& e0 = E.ev[m];
        const auto& e1 = E.ev[m | (1 << a)];
        if (e0.size() != e1.size()) {
          E.sens[a] = INFINITY;
          break;
        }
        for (std::size_t q = 0; q < e0.size(); ++q) E.sens[a] = std::max(E.sens[a], std::abs(e0[q] - e1[q]));
      }
    return E;
  };

  CoveringReport rep;
  rep.T0 = T0;
  rep.N = N;
  rep.epsilon = epsilon;
  rep.pad = pad;
  rep.M1 = spec.M1;
  rep.M2 = spec.M2;
  rep.M3 = spec.M3;

  // refinement tree for point location during the audit
  struct Node {
    LCell cell;
    int leaf = -1;
    std::vector<int> kids;
  };
  std::vector<Node> tree;
  std::vector<int> active_node;
  for (const auto& c : active) {
    tree.push_back(Node{c, -1, {}});
    active_node.push_back(static_cast<int>(tree.size()) - 1);
  }
  const int roots = static_cast<int>(tree.size());

  for (int level = 0; !active.empty(); ++level) {
    compute_missing(active);
    if (spec.progress) spec.progress(level, active.size(), cache.size());
    std::vector<LCell> next;
    std::vector<int> next_node;
    for (std::size_t ci = 0; ci < active.size(); ++ci) {
      const LCell& c = active[ci];
      Eval E = evaluate(c);
      bool over = E.union_len > epsilon;
      double worst = 0.0;
      for (double s : E.sens) worst = std::max(worst, s);
      bool want = over || worst > pad;
      if (want && c.depth < spec.max_depth) {
        std::vector<int> axes;
        for (int a = 0; a < D2; ++a)
          if (E.sens[a] > 0.5 * pad) axes.push_back(a);
        if (axes.empty())
          for (int a = 0; a < D2; ++a) axes.push_back(a);
        for (int m = 0; m < (1 << axes.size()); ++m) {
          LCell k = c;
          k.depth = c.depth + 1;
          for (std::size_t q = 0; q < axes.size(); ++q) {
            int a = axes[q];
            std::int64_t mid = (c.lo[a] + c.hi[a]) / 2;
            if ((m >> q) & 1) k.lo[a] = mid;
            else k.hi[a] = mid;
          }
          tree.push_back(Node{k, -1, {}});
          tree[active_node[ci]].kids.push_back(static_cast<int>(tree.size()) - 1);
          next.push_back(k);
          next_node.push_back(static_cast<int>(tree.size()) - 1);
        }
        continue;
      }
      if (over)
        throw Error(ErrorKind::CoverageBudgetExceeded,
                    "interval length " + fmt(E.union_len) + " > epsilon " + fmt(epsilon) + " in a cell at depth " +
                        std::to_string(c.depth) + " with lower corner " + [&] {
                          std::string r;
                          for (int a = 0; a < D2; ++a) r += (a ? " " : "") + fmt(coord(a, c.lo[a]));
                          return r;
                        }() + " and " + std::to_string(E.intervals.size()) + " intervals");
      CoveringCell cc;
      cc.lo.resize(D2);
      cc.hi.resize(D2);
      for (int a = 0; a < D2; ++a) {
        cc.lo[a] = coord(a, c.lo[a]);
        cc.hi[a] = coord(a, c.hi[a]);
      }
      cc.depth = c.depth;
      cc.zero_thresh = E.thresh;
      cc.resolved = !want;
      cc.intervals = E.intervals;
      // min |det| outside the intervals, samples plus interval edges
      double mn = INFINITY;
      bool any = false;
      auto inside = [&](double s) {
        for (const auto& iv : cc.intervals)
          if (s >= iv.lo && s <= iv.hi) return true;
        return false;
      };
      for (const auto& k : cell_points(c)) {
        const Vec& y = series_for(k);
        for (int m = 0; m <= nsteps; ++m) {
          double s = m * hs;
          if (inside(s)) continue;
          any = true;
          mn = std::min(mn, std::abs(y[m]));
        }
        for (const auto& iv : cc.intervals)
          for (double e : {iv.lo, iv.hi})
            if (e > 0.0 && e < T0) {
              any = true;
              mn = std::min(mn, std::abs(detail::interp_series(y, hs, e)));
            }
      }
      if (!any) throw Error(ErrorKind::NoSamplesOutside, "intervals cover [0, T0] in a cell");
      cc.min_outside = mn;
      tree[active_node[ci]].leaf = static_cast<int>(rep.cells.size());
      rep.unresolved_cells += cc.resolved ? 0 : 1;
      rep.max_union_length = std::max(rep.max_union_length, cc.union_length());
      rep.cells.push_back(std::move(cc));
    }
    active = std::move(next);
    active_node = std::move(next_node);
  }
  rep.sample_points = static_cast<int>(cache.size());
  rep.delta_star = INFINITY;
  for (const auto& c : rep.cells) rep.delta_star = std::min(rep.delta_star, c.min_outside);
  if (!(rep.delta_star > 0.0))
    throw Error(ErrorKind::NoSamplesOutside, "delta_star is zero: a sampled zero escaped the intervals");
  cache.clear();

  // independent audit
  std::mt19937_64 rng(spec.audit_seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto locate = [&](const Vec& lat) {
    // root index from base grid
    std::size_t idx = 0, mul = 1;
    for (int a = 0; a < D2; ++a) {
      int cnt = a < d ? spec.M2 : spec.M3;
      int i = std::clamp(static_cast<int>(std::floor(lat[a] / sub)), 0, cnt - 1);
      idx += i * mul;
      mul *= cnt;
    }
    int node = static_cast<int>(idx);
    while (tree[node].leaf < 0) {
      int found = -1;
      for (int k : tree[node].kids) {
        bool in = true;
        for (int a = 0; a < D2 && in; ++a) in = lat[a] >= tree[k].cell.lo[a] && lat[a] < tree[k].cell.hi[a];
        if (in) {
          found = k;
          break;
        }
      }
      if (found < 0) found = tree[node].kids.back();
      node = found;
    }
    return tree[node].leaf;
  };
  (void)roots;
  CoveringAudit au;
  au.samples = spec.audit_samples;
  au.min_abs_det_outside = INFINITY;
  Vec x(d), v(d), lat(D2);
  for (int q = 0; q < spec.audit_samples; ++q) {
    double s = U(rng) * T0;
    for (int a = 0; a < D2; ++a) {
      double u = U(rng);
      lat[a] = u * static_cast<double>(R[a]);
      if (a < d) x[a] = lo0[a] + span[a] * u;
      else v[a - d] = lo0[a] + span[a] * u;
    }
    const CoveringCell& cell = rep.cells[locate(lat)];
    double det = det_at(field, x.data(), v.data(), T0, s, spec.dt, spec.scheme);
    bool in = false;
    for (const auto& iv : cell.intervals)
      if (s >= iv.lo && s <= iv.hi) in = true;
    if (!in) au.min_abs_det_outside = std::min(au.min_abs_det_outside, std::abs(det));
    if (std::abs(det) < rep.delta_star) {
      ++au.below_delta;
      if (in) ++au.inside;
      else ++au.violations;
    }
  }
  rep.audit = au;
  return rep;
}

}  // namespace boltz

#endif  // BOLTZ_FLOW_HPP
