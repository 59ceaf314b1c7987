#include <gtest/gtest.h>

#include <random>

#include "boltz/solver.hpp"

using namespace boltz;

namespace {

const CollisionModel& model(int n = 13) {
  static std::map<int, CollisionModel> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    CollisionSpec s;
    s.d = 2;
    s.n = n;
    it = cache.emplace(n, build_model(s)).first;
  }
  return it->second;
}

// sqrt(mu_E) * (sin 2 pi x1 + 0.5 cos 2 pi x2) * exp(-|v|^2/8), shifted by -v t
DistributionField smooth_bump(const PotentialField& field, const SpatialGrid& xg, const VelocityGrid& vg, double t) {
  auto tab = maxwellian_table(field, xg, vg);
  DistributionField f(xg, vg, Representation::PerturbationF);
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) {
      Vec x = xg.point(ix);
      double y1 = x[0] - vg.coord(iv, 0) * t, y2 = x[1] - vg.coord(iv, 1) * t;
      double g = (std::sin(2 * kPi * y1) + 0.5 * std::cos(2 * kPi * y2)) * std::exp(-0.125 * vg.v2(iv));
      f.at(ix, iv) = 0.1 * g * tab.sqrt_mu_e(ix, iv);
    }
  return f;
}

double max_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

Vec run_free(const PotentialField& field, const SpatialGrid& xg, const CollisionModel& M, SolverConfig cfg) {
  cfg.collisions = false;
  cfg.balance = false;
  Solver s(field, M, xg, cfg);
  Vec f = smooth_bump(field, xg, M.grid, 0.0).values;
  for (int n = 0; n < cfg.steps(); ++n) s.step(f);
  return f;
}

}  // namespace

TEST(Transport, FreeFlightSpectralIsExactTranslation) {
  auto field = PotentialField::constant(2, 2.0);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {8, 8});
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.4;
  cfg.spectral_x = true;
  Vec f = run_free(field, xg, M, cfg);
  EXPECT_LE(max_diff(f, smooth_bump(field, xg, M.grid, 0.4).values), 1e-12);
}

TEST(Transport, FreeFlightMultilinearIsSpatiallyLimited) {
  auto field = PotentialField::constant(2, 2.0);
  const auto& M = model();
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.4;
  Vec err;
  for (int nx : {16, 32}) {
    SpatialGrid xg(field.torus(), {nx, nx});
    err.push_back(max_diff(run_free(field, xg, M, cfg), smooth_bump(field, xg, M.grid, 0.4).values));
  }
  EXPECT_GT(err[0] / err[1], 2.5);
  SpatialGrid xg(field.torus(), {16, 16});
  cfg.dt = 0.025;
  double half = max_diff(run_free(field, xg, M, cfg), smooth_bump(field, xg, M.grid, 0.4).values);
  EXPECT_GT(half, 0.8 * err[0]);
}

TEST(Transport, FeetRespectSpeedBand) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  SolverConfig cfg;
  cfg.dt = 0.1;
  Solver s(field, M, xg, cfg);
  const auto& ft = s.feet();
  const double band = 2.0 * std::sqrt(field.sup_norm());
  for (std::size_t k = 0; k < ft.V.size() / 2; ++k) {
    const int iv = static_cast<int>(k / xg.size());
    double V = std::hypot(ft.V[2 * k], ft.V[2 * k + 1]);
    EXPECT_LE(std::abs(V - std::sqrt(M.grid.v2(iv))), band);
  }
  EXPECT_GE(s.pullback().stats().clamped_mass, 0.0);
  EXPECT_LT(s.pullback().stats().clamped_mass, 1e-3);
}

TEST(Solver, MaxwellianIsFixedPoint) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  SolverConfig cfg;
  cfg.dt = 0.05;
  Solver s(field, M, xg, cfg);
  auto mu = local_maxwellian(field, xg, M.grid);
  auto F = mu;
  for (int n = 0; n < 5; ++n) F = step(F, field, s);
  EXPECT_LE(max_diff(F.values, mu.values), 1e-15);
}

TEST(Solver, ZeroPerturbationStaysZero) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  for (auto mode : {SolverMode::Linearized, SolverMode::Nonlinear}) {
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.t_end = 0.25;
    cfg.mode = mode;
    auto log = simulate(DistributionField(xg, M.grid, Representation::PerturbationF), field, M, cfg, sub);
    for (const auto& e : log.entries) {
      EXPECT_EQ(e.l2, 0.0);
      EXPECT_EQ(e.hinf, 0.0);
    }
    auto cert = stability_certificate(log, log.entries.front().cons);
    EXPECT_TRUE(cert.zero_over_zero);
    EXPECT_EQ(cert.C_measured, 0.0);
    EXPECT_TRUE(cert.holds);
  }
}

TEST(Solver, MicroscopicLinearNormDecreases) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 1.0;
  cfg.mode = SolverMode::Linearized;
  auto f0 = random_perturbation(field, xg, M.grid, sub, 2, 0.05, InitialKind::Microscopic);
  auto log = simulate(f0, field, M, cfg, sub);
  for (std::size_t i = 1; i < log.entries.size(); ++i)
    EXPECT_LE(log.entries[i].l2, log.entries[i - 1].l2 * (1 + 1e-12)) << "t = " << log.entries[i].t;
}

TEST(Solver, NonlinearConservationAndEntropy) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.5;
  auto f0 = random_perturbation(field, xg, M.grid, sub, 7, 0.05, InitialKind::Generic);
  auto log = simulate(f0, field, M, cfg, sub);
  auto S = summarize(log, to_absolute(field, f0));
  EXPECT_LE(S.mass_drift, 1e-8);
  EXPECT_LE(S.energy_drift, 1e-8);
  ASSERT_EQ(S.momentum_drift.size(), 1u);
  EXPECT_LE(S.momentum_drift[0], 1e-8);
  EXPECT_GT(S.momentum_change[1], 1e-5);
  EXPECT_LE(S.max_entropy_increase, 1e-9);
  EXPECT_EQ(S.deviation_violations, 0);
  EXPECT_GT(S.min_F, 0.0);
  auto cert = stability_certificate(log, log.entries.front().cons);
  EXPECT_TRUE(cert.finite);
  EXPECT_GT(cert.C_measured, 0.0);
  EXPECT_EQ(cert.window_end_h.size(), 4u);
}

TEST(Solver, NegativeDensityRaised) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.1;
  auto f0 = random_perturbation(field, xg, M.grid, sub, 1, 3.0, InitialKind::Generic);
  try {
    simulate(f0, field, M, cfg, sub);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NegativeDensity);
  }
}

TEST(Solver, CflWarning) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {16, 16});
  SolverConfig cfg;
  cfg.dt = 0.5;
  Solver s(field, M, xg, cfg);
  bool cfl = false;
  for (const auto& w : s.warnings()) cfl = cfl || w.rfind("CFLAccuracy", 0) == 0;
  EXPECT_TRUE(cfl);
}

TEST(Solver, WorkerCountDoesNotChangeResults) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.2;
  auto f0 = random_perturbation(field, xg, M.grid, sub, 3, 0.05, InitialKind::Generic);
  auto a = simulate(f0, field, M, cfg, sub);
  cfg.workers = 3;
  auto b = simulate(f0, field, M, cfg, sub);
  EXPECT_EQ(a.final_state.values, b.final_state.values);
}

TEST(Solver, ConfigValidation) {
  SolverConfig c;
  c.dt = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = SolverConfig{};
  c.interpolation_order = 2;
  EXPECT_THROW(c.validate(), Error);
  c = SolverConfig{};
  c.t_end = 0.01;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(parse_solver_mode("implicit"), Error);
}

// Phi constant and spectral x: transport is exact, so the error against a dt/8
// reference is the splitting error
TEST(SolverProperty, StrangSplittingIsSecondOrder) {
  auto field = PotentialField::constant(2, 2.0);
  const auto& M = model(11);
  SpatialGrid xg(field.torus(), {4, 4});
  auto sub = degenerate_subspace(field, 16);
  auto f0 = random_perturbation(field, xg, M.grid, sub, 5, 0.05, InitialKind::Generic);
  auto run = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.t_end = 0.2;
    cfg.mode = SolverMode::Linearized;
    cfg.spectral_x = true;
    Solver s(field, M, xg, cfg);
    Vec f = f0.values;
    for (int n = 0; n < cfg.steps(); ++n) s.step(f);
    return f;
  };
  Vec ref = run(0.0125 / 8);
  auto err = [&](const Vec& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f0.weight(static_cast<int>(k / f0.nx())) * sqr(f[k] - ref[k]);
    return std::sqrt(s);
  };
  double e1 = err(run(0.05)), e2 = err(run(0.025));
  EXPECT_NEAR(e1 / e2, 4.0, 0.6);
}

TEST(Duhamel, PureAbsorptionMatchesExponentialFactor) {
  auto field = PotentialField::constant(2, 2.0);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {8, 8});
  auto h0 = to_weighted(field, smooth_bump(field, xg, M.grid, 0.0), M.beta);
  const double dt = 0.02;
  DuhamelOptions o;
  o.gain = false;
  auto h = duhamel_step(h0, field, M, dt, dt, o);
  auto shifted = to_weighted(field, smooth_bump(field, xg, M.grid, dt), M.beta);
  for (int iv = 0; iv < M.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) {
      double expect = std::exp(-M.nu[iv] * std::exp(-2.0) * dt) * shifted.at(ix, iv);
      EXPECT_NEAR(h.at(ix, iv), expect, 1e-12 * (1 + std::abs(expect)));
    }
}

TEST(Duhamel, ZeroMapsToZero) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 4});
  DistributionField h(xg, M.grid, Representation::WeightedH);
  auto out = duhamel_step(h, field, M, 0.01, 0.01);
  EXPECT_EQ(max_abs(out.values), 0.0);
  EXPECT_THROW(duhamel_step(to_absolute(field, DistributionField(xg, M.grid, Representation::PerturbationF)), field,
                            M, 0.01, 0.01),
               Error);
}

TEST(InitialData, ZeroInvariantAndAmplitude) {
  auto field = PotentialField::cosine(2, 1);
  const auto& M = model();
  SpatialGrid xg(field.torus(), {4, 8});
  auto sub = degenerate_subspace(field, 64);
  auto f = random_perturbation(field, xg, M.grid, sub, 9, 0.02, InitialKind::ZeroInvariant);
  auto tab = maxwellian_table(field, xg, M.grid);
  double gmax = 0.0;
  for (int iv = 0; iv < M.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) gmax = std::max(gmax, std::abs(f.at(ix, iv)) / tab.sqrt_mu_e(ix, iv));
  EXPECT_NEAR(gmax, 0.02, 1e-15);
  // linear invariants of f: sum f sqrt(mu_E) {1, e, v.b}
  double m = 0, e = 0, j = 0, scale = 0;
  for (int iv = 0; iv < M.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) {
      double w = f.weight(iv) * tab.sqrt_mu_e(ix, iv) * f.at(ix, iv);
      m += w;
      e += w * (0.5 * M.grid.v2(iv) + tab.phi[ix]);
      j += w * (sub.basis[0][0] * M.grid.coord(iv, 0) + sub.basis[0][1] * M.grid.coord(iv, 1));
      scale += std::abs(w) * (1 + M.grid.v2(iv));
    }
  EXPECT_LE(std::abs(m), 1e-14 * scale);
  EXPECT_LE(std::abs(e), 1e-14 * scale);
  EXPECT_LE(std::abs(j), 1e-14 * scale);
  EXPECT_THROW(parse_initial_kind("bump"), Error);
}
