#ifndef BOLTZ_EQUILIBRIUM_HPP
#define BOLTZ_EQUILIBRIUM_HPP

#include <Eigen/Dense>

#include "grids.hpp"

namespace boltz {

enum class Representation { AbsoluteF, PerturbationF, WeightedH };

inline const char* to_string(Representation r) {
  switch (r) {
    case Representation::AbsoluteF: return "absolute_F";
    case Representation::PerturbationF: return "perturbation_f";
    case Representation::WeightedH: return "weighted_h";
  }
  return "?";
}

inline Representation parse_representation(const std::string& s) {
  if (s == "absolute_F") return Representation::AbsoluteF;
  if (s == "perturbation_f") return Representation::PerturbationF;
  if (s == "weighted_h") return Representation::WeightedH;
  throw Error(ErrorKind::Parse, "unknown representation '" + s + "'");
}

// values[iv * Nx + ix]: velocity-major, x contiguous
struct DistributionField {
  SpatialGrid xg;
  VelocityGrid vg;
  Representation rep = Representation::AbsoluteF;
  Vec values;

  DistributionField() = default;
  DistributionField(SpatialGrid x, VelocityGrid v, Representation r)
      : xg(std::move(x)), vg(std::move(v)), rep(r), values(static_cast<std::size_t>(xg.size()) * vg.size(), 0.0) {}

  int nx() const { return xg.size(); }
  int nv() const { return vg.size(); }
  double& at(int ix, int iv) { return values[static_cast<std::size_t>(iv) * nx() + ix]; }
  double at(int ix, int iv) const { return values[static_cast<std::size_t>(iv) * nx() + ix]; }
  // quadrature weight of node (ix, iv)
  double weight(int iv) const { return xg.weight() * vg.weight(iv); }
};

// Phi on the spatial grid
inline Vec phi_values(const PotentialField& field, const SpatialGrid& xg) {
  require(field.dim() == xg.dim(), "potential and spatial grid dimensions differ");
  Vec p(xg.size()), x(xg.dim());
  for (int i = 0; i < xg.size(); ++i) {
    xg.point(i, x.data());
    p[i] = field.value(x.data());
  }
  return p;
}

// log mu_E = -|v|^2/2 - Phi(x)
struct MaxwellianTable {
  Vec phi;       // per x
  Vec log_mu_e;  // per node, same layout as DistributionField
  int nx = 0;

  double mu_e(int ix, int iv) const { return std::exp(log_mu_e[static_cast<std::size_t>(iv) * nx + ix]); }
  double sqrt_mu_e(int ix, int iv) const { return std::exp(0.5 * log_mu_e[static_cast<std::size_t>(iv) * nx + ix]); }
};

inline MaxwellianTable maxwellian_table(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg) {
  MaxwellianTable t;
  t.phi = phi_values(field, xg);
  t.nx = xg.size();
  t.log_mu_e.resize(static_cast<std::size_t>(xg.size()) * vg.size());
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix)
      t.log_mu_e[static_cast<std::size_t>(iv) * t.nx + ix] = -0.5 * vg.v2(iv) - t.phi[ix];
  return t;
}

inline DistributionField local_maxwellian(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg) {
  auto t = maxwellian_table(field, xg, vg);
  DistributionField F(xg, vg, Representation::AbsoluteF);
  for (std::size_t k = 0; k < F.values.size(); ++k) F.values[k] = std::exp(t.log_mu_e[k]);
  return F;
}

// max |v . grad_x mu_E - grad Phi . grad_v mu_E| with grad_x by central
// differences on the spatial grid and grad_v mu_E = -v mu_E
inline double maxwellian_transport_residual(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg) {
  const int d = xg.dim(), nx = xg.size();
  auto mu = local_maxwellian(field, xg, vg);
  std::vector<int> m(d);
  Vec x(d), g(d);
  double r = 0.0;
  for (int ix = 0; ix < nx; ++ix) {
    xg.point(ix, x.data());
    field.gradient(x.data(), g.data());
    int rem = ix;
    for (int k = d - 1; k >= 0; --k) {
      m[k] = rem % xg.counts()[k];
      rem /= xg.counts()[k];
    }
    for (int iv = 0; iv < vg.size(); ++iv) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const int c = xg.counts()[k];
        auto mp = m, mm = m;
        mp[k] = (m[k] + 1) % c;
        mm[k] = (m[k] + c - 1) % c;
        double dxk = (mu.at(xg.index(mp.data()), iv) - mu.at(xg.index(mm.data()), iv)) / (2.0 * xg.dx(k));
        s += vg.coord(iv, k) * dxk - g[k] * (-vg.coord(iv, k) * mu.at(ix, iv));
      }
      r = std::max(r, std::abs(s));
    }
  }
  return r;
}

// ---------------- representations ----------------

struct ConversionReport {
  std::int64_t excluded_nodes = 0;  // mu(v) < 1e-300: quotients set to zero
  double excluded_mass = 0.0;
};

inline constexpr double kUnderflow = 1e-300;

inline DistributionField to_perturbation(const PotentialField& field, const DistributionField& F,
                                         ConversionReport* rep = nullptr) {
  require(F.rep == Representation::AbsoluteF, "to_perturbation needs absolute_F");
  auto t = maxwellian_table(field, F.xg, F.vg);
  DistributionField f(F.xg, F.vg, Representation::PerturbationF);
  const double lmin = std::log(kUnderflow);
  for (int iv = 0; iv < F.nv(); ++iv)
    for (int ix = 0; ix < F.nx(); ++ix) {
      std::size_t k = static_cast<std::size_t>(iv) * F.nx() + ix;
      if (-0.5 * F.vg.v2(iv) < lmin) {
        if (rep) {
          ++rep->excluded_nodes;
          rep->excluded_mass += F.weight(iv) * std::abs(F.values[k]);
        }
        f.values[k] = 0.0;
        continue;
      }
      f.values[k] = (F.values[k] - std::exp(t.log_mu_e[k])) / std::exp(0.5 * t.log_mu_e[k]);
    }
  return f;
}

inline DistributionField to_absolute(const PotentialField& field, const DistributionField& f) {
  require(f.rep == Representation::PerturbationF, "to_absolute needs perturbation_f");
  auto t = maxwellian_table(field, f.xg, f.vg);
  DistributionField F(f.xg, f.vg, Representation::AbsoluteF);
  for (std::size_t k = 0; k < f.values.size(); ++k)
    F.values[k] = std::exp(t.log_mu_e[k]) + std::exp(0.5 * t.log_mu_e[k]) * f.values[k];
  return F;
}

// w(x, v) = (|v|^2/2 + Phi(x))^{beta/2}, layout of DistributionField
inline Vec weight_values(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg, double beta) {
  Vec phi = phi_values(field, xg), w(static_cast<std::size_t>(xg.size()) * vg.size());
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix)
      w[static_cast<std::size_t>(iv) * xg.size() + ix] = std::pow(0.5 * vg.v2(iv) + phi[ix], 0.5 * beta);
  return w;
}

inline DistributionField to_weighted(const PotentialField& field, const DistributionField& f, double beta) {
  require(f.rep == Representation::PerturbationF, "to_weighted needs perturbation_f");
  Vec w = weight_values(field, f.xg, f.vg, beta);
  DistributionField h(f.xg, f.vg, Representation::WeightedH);
  for (std::size_t k = 0; k < w.size(); ++k) h.values[k] = w[k] * f.values[k];
  return h;
}

inline DistributionField from_weighted(const PotentialField& field, const DistributionField& h, double beta) {
  require(h.rep == Representation::WeightedH, "from_weighted needs weighted_h");
  Vec w = weight_values(field, h.xg, h.vg, beta);
  DistributionField f(h.xg, h.vg, Representation::PerturbationF);
  for (std::size_t k = 0; k < w.size(); ++k) f.values[k] = h.values[k] / w[k];
  return f;
}

// ---------------- hydrodynamic projection ----------------

struct Projection {
  DistributionField Pf, residual;
  Vec a_tilde, c_tilde;  // per x
  Vec b_tilde;           // per x, d entries each (x-major)
  Vec a, b, c;           // e^{Phi/2} rescaled: Pf = (a + v.b + |v|^2 c) sqrt(mu_E)
  double condition = 0.0;
};

// orthonormal (velocity quadrature) basis of span{sqrt mu, v_i sqrt mu, |v|^2 sqrt mu}
// plus the triangular map back to the raw basis
struct HydroBasis {
  Eigen::MatrixXd raw;  // Nv x (d+2)
  Eigen::MatrixXd G;    // Gram matrix under the velocity quadrature
  double condition = 0.0;
};

inline HydroBasis hydro_basis(const VelocityGrid& vg) {
  const int d = vg.dim(), N = vg.size(), m = d + 2;
  HydroBasis h;
  h.raw.resize(N, m);
  Vec smu = vg.sqrt_mu();
  for (int i = 0; i < N; ++i) {
    h.raw(i, 0) = smu[i];
    for (int k = 0; k < d; ++k) h.raw(i, 1 + k) = vg.coord(i, k) * smu[i];
    h.raw(i, d + 1) = vg.v2(i) * smu[i];
  }
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(vg.weights().data(), N);
  h.G = h.raw.transpose() * w.asDiagonal() * h.raw;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.G);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  h.condition = lo > 0.0 ? hi / lo : INFINITY;
  if (!(h.condition <= 1e8))
    throw Error(ErrorKind::GramIllConditioned,
                "hydrodynamic Gram condition number " + fmt(h.condition) + " > 1e8 on " + vg.describe());
  return h;
}

inline Projection project_P(const PotentialField& field, const DistributionField& f) {
  require(f.rep == Representation::PerturbationF, "project_P needs perturbation_f");
  const int d = f.vg.dim(), nx = f.nx(), nv = f.nv(), m = d + 2;
  auto hb = hydro_basis(f.vg);
  Eigen::LDLT<Eigen::MatrixXd> G(hb.G);
  Vec phi = phi_values(field, f.xg);
  Projection p;
  p.condition = hb.condition;
  p.Pf = DistributionField(f.xg, f.vg, f.rep);
  p.residual = DistributionField(f.xg, f.vg, f.rep);
  p.a_tilde.resize(nx);
  p.c_tilde.resize(nx);
  p.b_tilde.resize(static_cast<std::size_t>(nx) * d);
  p.a.resize(nx);
  p.c.resize(nx);
  p.b.resize(static_cast<std::size_t>(nx) * d);
  Eigen::VectorXd r(m);
  for (int ix = 0; ix < nx; ++ix) {
    r.setZero();
    for (int iv = 0; iv < nv; ++iv) r += f.vg.weight(iv) * f.at(ix, iv) * hb.raw.row(iv).transpose();
    Eigen::VectorXd c = G.solve(r);
    for (int iv = 0; iv < nv; ++iv) {
      double v = hb.raw.row(iv).dot(c);
      p.Pf.at(ix, iv) = v;
      p.residual.at(ix, iv) = f.at(ix, iv) - v;
    }
    const double s = std::exp(0.5 * phi[ix]);
    p.a_tilde[ix] = c[0];
    p.c_tilde[ix] = c[d + 1];
    p.a[ix] = s * c[0];
    p.c[ix] = s * c[d + 1];
    for (int k = 0; k < d; ++k) {
      p.b_tilde[static_cast<std::size_t>(ix) * d + k] = c[1 + k];
      p.b[static_cast<std::size_t>(ix) * d + k] = s * c[1 + k];
    }
  }
  return p;
}

// <f, g> under the product quadrature
inline double inner(const DistributionField& f, const DistributionField& g) {
  double s = 0.0;
  for (int iv = 0; iv < f.nv(); ++iv) {
    double t = 0.0;
    for (int ix = 0; ix < f.nx(); ++ix) t += f.at(ix, iv) * g.at(ix, iv);
    s += f.weight(iv) * t;
  }
  return s;
}

// ---------------- conservation and entropy ----------------

enum class MomentumMode { Mu, MuE };  // subtract mu (literal) or mu_E

struct ConservationReport {
  double M = 0.0, E = 0.0;
  Vec J;       // along the degenerate basis
  Vec J_full;  // all axes
  double entropy = 0.0;
  double entropy_excess = 0.0;
  std::int64_t negative_nodes = 0;  // F < -neg_tol
  double min_F = 0.0;
};

inline ConservationReport conservation_report(const PotentialField& field, const DistributionField& F,
                                              const DegenerateSubspace& sub, MomentumMode mode = MomentumMode::Mu,
                                              double neg_tol = 1e-12) {
  require(F.rep == Representation::AbsoluteF, "conservation_report needs absolute_F");
  const int d = F.vg.dim(), nx = F.nx(), nv = F.nv();
  require(field.dim() == F.xg.dim(), "potential and spatial grid dimensions differ");
  for (const auto& e : sub.basis) require(static_cast<int>(e.size()) == d, "degenerate basis dimension mismatch");
  auto t = maxwellian_table(field, F.xg, F.vg);
  ConservationReport r;
  r.J.assign(sub.basis.size(), 0.0);
  r.J_full.assign(d, 0.0);
  r.min_F = INFINITY;
  for (int iv = 0; iv < nv; ++iv) {
    const double w = F.weight(iv), mu = std::exp(-0.5 * F.vg.v2(iv));
    double m = 0.0, e = 0.0, jm = 0.0, ent = 0.0, exc = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t k = static_cast<std::size_t>(iv) * nx + ix;
      const double Fk = F.values[k], lme = t.log_mu_e[k], me = std::exp(lme);
      const double dF = Fk - me;
      m += dF;
      e += (0.5 * F.vg.v2(iv) + t.phi[ix]) * dF;
      jm += Fk - (mode == MomentumMode::Mu ? mu : me);
      if (Fk < -neg_tol) ++r.negative_nodes;
      r.min_F = std::min(r.min_F, Fk);
      const double Fc = std::max(Fk, kUnderflow);
      ent += Fc * std::log(Fc);
      // F ln F - mu_E ln mu_E without cancellation: with g = dF/mu_E,
      // mu_E g ln mu_E + F log1p(g)
      const double g = (Fc - me) / me;
      exc += (Fc - me) * lme + Fc * std::log1p(g);
    }
    r.M += w * m;
    r.E += w * e;
    r.entropy += w * ent;
    r.entropy_excess += w * exc;
    for (int k = 0; k < d; ++k) r.J_full[k] += w * F.vg.coord(iv, k) * jm;
    for (std::size_t b = 0; b < sub.basis.size(); ++b) {
      double ev = 0.0;
      for (int k = 0; k < d; ++k) ev += sub.basis[b][k] * F.vg.coord(iv, k);
      r.J[b] += w * ev * jm;
    }
  }
  return r;
}

struct DeviationBound {
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
};

// lhs = sum |F - mu_E| 1{|F - mu_E| >= delta mu_E}, rhs = (4/delta)(H excess + |M0| + |E0|)
inline DeviationBound deviation_check(const ConservationReport& r0, const PotentialField& field, const DistributionField& F,
                                 double delta, double slack = 1e-12) {
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  require(F.rep == Representation::AbsoluteF, "deviation_check needs absolute_F");
  auto t = maxwellian_table(field, F.xg, F.vg);
  DeviationBound res;
  for (int iv = 0; iv < F.nv(); ++iv) {
    double s = 0.0;
    for (int ix = 0; ix < F.nx(); ++ix) {
      const std::size_t k = static_cast<std::size_t>(iv) * F.nx() + ix;
      const double me = std::exp(t.log_mu_e[k]), dev = std::abs(F.values[k] - me);
      if (dev >= delta * me) s += dev;
    }
    res.lhs += F.weight(iv) * s;
  }
  res.rhs = 4.0 / delta * (r0.entropy_excess + std::abs(r0.M) + std::abs(r0.E));
  res.holds = res.lhs <= res.rhs + slack;
  return res;
}

}  // namespace boltz

#endif  // BOLTZ_EQUILIBRIUM_HPP
