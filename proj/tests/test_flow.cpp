#include <gtest/gtest.h>

#include <random>

#include "boltz/flow.hpp"

using namespace boltz;

namespace {

PhasePoint random_start(std::mt19937_64& rng, int d, double vmax) {
  std::uniform_real_distribution<double> U(0.0, 1.0), V(-vmax, vmax);
  PhasePoint p;
  for (int i = 0; i < d; ++i) {
    p.x.push_back(U(rng));
    p.v.push_back(V(rng));
  }
  return p;
}

// fine-step plain Verlet oracle, bisection on det(s) between a and b
double bisect_zero(const PotentialField& f, const PhasePoint& p, double T0, double a, double b) {
  const double dt = 1e-5;
  double fa = det_at(f, p.x.data(), p.v.data(), T0, a, dt, Integrator::Verlet);
  for (int it = 0; it < 40 && b - a > 1e-10; ++it) {
    double m = 0.5 * (a + b);
    double fm = det_at(f, p.x.data(), p.v.data(), T0, m, dt, Integrator::Verlet);
    if ((fm < 0) == (fa < 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(Flow, FreeFlightExample) {
  auto f = PotentialField::constant(3, 1.0);
  auto r = integrate(f, PhasePoint{{0, 0, 0}, {1, 0, 0}}, 0.0, 0.5, 1e-3, true);
  const auto& last = r.samples.back();
  EXPECT_NEAR(last.X[0], 0.5, 1e-12);
  EXPECT_EQ(last.V, (Vec{1, 0, 0}));
  EXPECT_NEAR(last.det, 0.125, 1e-12);
  EXPECT_EQ(last.s, 0.5);
}

TEST(Flow, EnergyDriftCosine) {
  auto f = PotentialField::cosine(3, 2);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    auto p = random_start(rng, 3, 3.0);
    auto r = integrate(f, p, 0.0, 10.0, 1e-3, false);
    EXPECT_LE(r.energy_drift, 1e-6);
  }
}

TEST(Flow, PlainVerletDriftIsLarger) {
  // the reason the default scheme is the fourth-order composition
  auto f = PotentialField::cosine(1, 0);
  auto r = integrate(f, PhasePoint{{0.1}, {1.0}}, 0.0, 10.0, 1e-3, false, Integrator::Verlet);
  auto y = integrate(f, PhasePoint{{0.1}, {1.0}}, 0.0, 10.0, 1e-3, false);
  EXPECT_GT(r.energy_drift, 1e-6);
  EXPECT_LT(y.energy_drift, 1e-9);
}

TEST(Flow, SelfConvergenceAgainstFineStep) {
  auto f = PotentialField::cosine(2, 1);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 3; ++k) {
    auto p = random_start(rng, 2, 2.0);
    auto a = integrate(f, p, 0.0, 2.0, 1e-3, false);
    auto b = integrate(f, p, 0.0, 2.0, 1e-5, false, Integrator::Verlet);
    for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(a.X_lift[i] - b.X_lift[i]), 1e-4);
  }
}

TEST(Flow, StepTooLarge) {
  auto f = PotentialField::cosine(2, 1);
  EXPECT_THROW(integrate(f, PhasePoint{{0, 0}, {1, 0}}, 0, 1, 0.2, false), Error);
}

TEST(Flow, DetFreeFlight) {
  for (int d = 1; d <= 3; ++d) {
    auto f = PotentialField::constant(d, 1.0);
    auto ds = det_along(f, PhasePoint{Vec(d, 0.3), Vec(d, -1.7)}, 1.0, 1e-3);
    for (std::size_t m = 0; m < ds.s.size(); ++m) EXPECT_NEAR(ds.det[m], std::pow(ds.s[m] - 1.0, d), 1e-12);
    EXPECT_EQ(ds.det.back(), 0.0);
  }
}

TEST(Flow, DetOnInvariantPlaneIsHyperbolicOrTrigonometric) {
  // x3 frozen at a critical point of Phi: the x3 Jacobi field solves
  // J'' = -Phi''(x3) J, so it is sinh at the maximum and sin at the minimum
  auto f = PotentialField::cosine(3, 2);
  const double T0 = 1.5, w = 2 * kPi;
  auto top = det_along(f, PhasePoint{{0.2, 0.7, 0.0}, {0.4, -0.3, 0.0}}, T0, 1e-3);
  auto bot = det_along(f, PhasePoint{{0.2, 0.7, 0.5}, {0.4, -0.3, 0.0}}, T0, 1e-3);
  for (std::size_t m = 0; m < top.s.size(); m += 37) {
    double u = top.s[m] - T0;
    EXPECT_NEAR(top.det[m], u * u * std::sinh(w * u) / w, 1e-8 * (1 + std::abs(top.det[m])));
    EXPECT_NEAR(bot.det[m], u * u * std::sin(w * u) / w, 1e-9);
  }
}

TEST(Flow, SignChangesMatchBisectionOracle) {
  auto f = PotentialField::cosine(2, 1);
  PhasePoint p{{0.31, 0.43}, {0.6, 0.9}};
  const double T0 = 2.0;
  auto ds = det_along(f, p, T0, 1e-3);
  int found = 0;
  for (std::size_t m = 0; m + 1 < ds.s.size(); ++m) {
    double a = ds.det[m], b = ds.det[m + 1];
    if (a == 0.0 || b == 0.0 || (a < 0) == (b < 0)) continue;
    double s_lin = ds.s[m] + (ds.s[m + 1] - ds.s[m]) * a / (a - b);
    double s_ref = bisect_zero(f, p, T0, ds.s[m], ds.s[m + 1]);
    EXPECT_NEAR(s_lin, s_ref, 1e-4);
    ++found;
  }
  EXPECT_GE(found, 2);
}

TEST(FlowProperty, SpeedBandAndEnergy) {
  std::mt19937_64 rng(7);
  std::vector<FourierTerm> ts{{{1, 0}, 0.7, 0.1}, {{1, 1}, 0.4, 0.0}, {{0, 2}, 0.3, 0.5}};
  PotentialField f(Torus(2), 2.5, ts);
  for (int k = 0; k < 20; ++k) {
    auto p = random_start(rng, 2, 4.0);
    auto r = integrate(f, p, 0.0, 3.0, 1e-3, false);
    EXPECT_LE(r.speed_band, 2.0 * std::sqrt(f.sup_norm()));
    EXPECT_LE(r.energy_drift, 1e-6);
  }
}

TEST(FlowProperty, GroupProperty) {
  auto f = PotentialField::cosine(2, 1);
  std::mt19937_64 rng(8);
  const double dt = 1e-3;
  for (int k = 0; k < 5; ++k) {
    auto p = random_start(rng, 2, 2.0);
    auto a = integrate(f, p, 0.0, 0.5, dt, false);
    auto b = integrate(f, PhasePoint{a.X_lift, a.samples.back().V}, 0.5, 1.2, dt, false);
    auto c = integrate(f, p, 0.0, 1.2, dt, false);
    // one-step local error estimate: one step vs two half steps
    auto one = integrate(f, p, 0.0, dt, dt, false);
    auto two = integrate(f, p, 0.0, dt, dt / 2, false);
    double local = 0.0;
    for (int i = 0; i < 2; ++i) local = std::max(local, std::abs(one.X_lift[i] - two.X_lift[i]));
    for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(b.X_lift[i] - c.X_lift[i]), 10 * local + 1e-13);
  }
}

TEST(FlowProperty, TangentMatchesFiniteDifferences) {
  std::vector<FourierTerm> ts{{{1, 0}, 0.5, 0.0}, {{1, 1}, 0.5, 0.3}};
  PotentialField f(Torus(2), 2.5, ts);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 5; ++k) {
    auto p = random_start(rng, 2, 2.0);
    auto r = integrate(f, p, 0.0, 1.3, 1e-3, true);
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
      PhasePoint pp = p, pm = p;
      pp.v[j] += h;
      pm.v[j] -= h;
      auto a = integrate(f, pp, 0.0, 1.3, 1e-3, false);
      auto b = integrate(f, pm, 0.0, 1.3, 1e-3, false);
      for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(r.samples.back().Jxv[i * 2 + j], (a.X_lift[i] - b.X_lift[i]) / (2 * h), 1e-6);
    }
  }
}

TEST(FlowProperty, TimeReversal) {
  auto f = PotentialField::cosine(3, 2);
  std::mt19937_64 rng(10);
  for (int k = 0; k < 10; ++k) {
    auto p = random_start(rng, 3, 3.0);
    auto a = integrate(f, p, 0.0, 2.0, 1e-3, false);
    auto b = integrate(f, PhasePoint{a.X_lift, a.samples.back().V}, 2.0, 0.0, 1e-3, false);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(b.X_lift[i], p.x[i], 1e-10);
      EXPECT_NEAR(b.samples.back().V[i], p.v[i], 1e-10);
    }
  }
}

TEST(Covering, FreeFlight) {
  auto f = PotentialField::constant(2, 1.0);
  CoveringSpec spec;
  spec.M1 = 4;
  spec.M2 = 2;
  spec.M3 = 2;
  spec.audit_samples = 2000;
  const double eps = 0.4;
  auto rep = build_covering(f, 1.0, 1.0, eps, spec);
  const double pad = eps / (4 * spec.M1);
  EXPECT_NEAR(rep.delta_star, pad * pad, 1e-12);
  for (const auto& c : rep.cells) {
    ASSERT_EQ(c.intervals.size(), 1u);
    EXPECT_NEAR(c.intervals[0].lo, 1.0 - pad, 1e-12);
    EXPECT_EQ(c.intervals[0].hi, 1.0);
    EXPECT_EQ(c.depth, 0);
  }
  EXPECT_EQ(rep.audit.violations, 0);

  auto rep2 = build_covering(f, 2.0, 1.0, eps, spec);
  EXPECT_NEAR(rep2.delta_star, rep.delta_star, 1e-12);
  ASSERT_EQ(rep2.cells.size(), rep.cells.size());
  for (std::size_t i = 0; i < rep.cells.size(); ++i) {
    EXPECT_NEAR(rep2.cells[i].intervals[0].lo, rep.cells[i].intervals[0].lo + 1.0, 1e-12);
    EXPECT_NEAR(rep2.cells[i].intervals[0].hi, rep.cells[i].intervals[0].hi + 1.0, 1e-12);
  }
}

TEST(Covering, BudgetExceeded) {
  auto f = PotentialField::cosine(1, 0);
  CoveringSpec spec;
  spec.M1 = 1;
  spec.max_depth = 0;
  spec.audit_samples = 10;
  EXPECT_THROW(build_covering(f, 4.0, 1.0, 0.05, spec), Error);
}

TEST(Covering, CosineSmallAudit) {
  auto f = PotentialField::cosine(1, 0);
  CoveringSpec spec;
  spec.M1 = 8;
  spec.M2 = 4;
  spec.M3 = 8;
  spec.max_depth = 5;
  spec.audit_samples = 3000;
  auto rep = build_covering(f, 2.0, 1.0, 1.0, spec);
  EXPECT_GT(rep.delta_star, 0.0);
  EXPECT_EQ(rep.audit.violations, 0);
  EXPECT_LE(rep.max_union_length, 1.0);
}
