#include <gtest/gtest.h>
#include <gsl/gsl_sf_bessel.h>

#include <random>

#include "boltz/linear.hpp"
#include "boltz/solver.hpp"

using namespace boltz;

namespace {

// 1-D trapezoid sums of v^k exp(-v^2/2) on the velocity axis
Vec axis_moments(const VelocityGrid& vg) {
  Vec s(5, 0.0);
  const double h = vg.h();
  for (int i = 0; i < vg.n(); ++i) {
    double w = (i == 0 || i == vg.n() - 1) ? 0.5 * h : h, v = vg.axis()[i];
    for (int k = 0; k < 5; ++k) s[k] += w * std::pow(v, k) * std::exp(-0.5 * v * v);
  }
  return s;
}

}  // namespace

TEST(SpectralDerivative, ExactOnTrigonometricModes) {
  Torus T(2, {1.0, 2.0});
  SpatialGrid xg(T, {8, 12});
  Vec u(xg.size()), du1(xg.size()), du2(xg.size());
  for (int i = 0; i < xg.size(); ++i) {
    Vec x = xg.point(i);
    double a = 2 * kPi * 3 * x[0], b = 2 * kPi * 2 * x[1] / 2.0;
    u[i] = std::sin(a) * std::cos(b) + 0.5;
    du1[i] = 2 * kPi * 3 * std::cos(a) * std::cos(b);
    du2[i] = -2 * kPi * std::sin(a) * std::sin(b);
  }
  Vec g1 = spectral_derivative(xg, u, 0), g2 = spectral_derivative(xg, u, 1);
  for (int i = 0; i < xg.size(); ++i) {
    EXPECT_NEAR(g1[i], du1[i], 1e-11);
    EXPECT_NEAR(g2[i], du2[i], 1e-11);
  }
}

TEST(Macroscopic, NullFamilyHasZeroResiduals) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {8, 16});
  auto mf = null_family(f, xg, {0.0, 0.1, 0.2, 0.3}, -0.2, {0.7, 0.0}, 0.3);
  auto r = macroscopic_residual(f, xg, mf);
  EXPECT_LE(r.max(), 1e-10);
  EXPECT_LE(r.laplace, 1e-10);
}

TEST(Macroscopic, BAlongGradientIsDetected) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {8, 16});
  auto mf = null_family(f, xg, {0.0, 0.1, 0.2}, 0.0, {0.0, 0.5}, 0.0);
  auto r = macroscopic_residual(f, xg, mf);
  EXPECT_GT(r.me1, 0.1);
  EXPECT_LE(r.me2, 1e-10);
}

TEST(Macroscopic, RandomSmoothFieldsAreNotSolutions) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {8, 16});
  std::mt19937_64 rng(21);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    MacroFields mf;
    double ca[3], cb[6], cc[3];
    for (double& x : ca) x = N(rng);
    for (double& x : cb) x = N(rng);
    for (double& x : cc) x = N(rng);
    for (double t : {0.0, 0.05, 0.1}) {
      Vec a(xg.size()), c(xg.size()), b(2 * xg.size());
      for (int i = 0; i < xg.size(); ++i) {
        Vec x = xg.point(i);
        double s1 = std::sin(2 * kPi * x[0]), s2 = std::cos(2 * kPi * x[1]);
        a[i] = ca[0] * s1 + ca[1] * s2 + ca[2] * t;
        c[i] = cc[0] * s2 + cc[1] * s1 * s2 + cc[2] * t;
        b[2 * i] = cb[0] * s1 + cb[1] * s2 + cb[2] * t;
        b[2 * i + 1] = cb[3] * s1 * s2 + cb[4] * s2 + cb[5] * t;
      }
      mf.t.push_back(t);
      mf.a.push_back(a);
      mf.b.push_back(b);
      mf.c.push_back(c);
    }
    EXPECT_GT(macroscopic_residual(f, xg, mf).max(), 0.1);
  }
}

// b = (sin 2 pi x1, 0) makes d1 b2 + d2 b1 vanish but not d1 b1
TEST(Macroscopic, SymmetricGradientNullPerturbation) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {16, 16});
  auto mf = null_family(f, xg, {0.0, 0.1, 0.2}, 0.1, {0.4, 0.0}, 0.2);
  for (auto& b : mf.b)
    for (int i = 0; i < xg.size(); ++i) b[2 * i] += std::sin(2 * kPi * xg.point(i)[0]);
  auto r = macroscopic_residual(f, xg, mf);
  EXPECT_LE(r.me4, 1e-10);
  EXPECT_NEAR(r.me3[0], 2 * kPi / std::sqrt(2.0), 1e-9);
  EXPECT_LE(r.me3[1], 1e-10);
}

TEST(Macroscopic, NeedsTwoTimes) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {4, 4});
  EXPECT_THROW(macroscopic_residual(f, xg, null_family(f, xg, {0.0}, 0, {0, 0}, 0)), Error);
}

// Gram entries against Bessel-function x-integrals times factorized velocity sums
TEST(NullSolution, GramMatchesBesselOracle) {
  auto f = PotentialField::cosine(2, 1);
  SpatialGrid xg(f.torus(), {4, 16});
  VelocityGrid vg(2, 6.0, 15);
  auto sub = degenerate_subspace(f, 64);
  auto r = null_solution_test(f, xg, vg, sub);
  const double I0 = gsl_sf_bessel_I0(1.0), I1 = gsl_sf_bessel_I1(1.0), I2 = I0 - 2.0 * I1;
  const double e2 = std::exp(-2.0);
  const double X0 = e2 * I0, X1 = e2 * (2 * I0 - I1), X2 = e2 * (4 * I0 - 4 * I1 + 0.5 * (I0 + I2));
  Vec s = axis_moments(vg);
  const double S0 = s[0] * s[0], S2 = 2 * s[2] * s[0], S4 = 2 * s[4] * s[0] + 2 * s[2] * s[2];
  EXPECT_NEAR(r.G11, X0 * S0, 1e-12 * r.G11);
  EXPECT_NEAR(r.G12, X1 * S0 + 0.5 * X0 * S2, 1e-12 * r.G12);
  EXPECT_NEAR(r.G22, X2 * S0 + X1 * S2 + 0.25 * X0 * S4, 1e-12 * r.G22);
  EXPECT_GT(r.determinant, 0.0);
  ASSERT_EQ(r.degenerate_coeff.size(), 1u);
  EXPECT_NEAR(r.degenerate_coeff[0], X0 * s[2] * s[0], 1e-12 * r.degenerate_coeff[0]);
  EXPECT_TRUE(r.pass);
  // b0 along the degenerate axis: coeff * b0 = 0 forces b0 = 0
  EXPECT_EQ(0.0 / r.degenerate_coeff[0], 0.0);
}

TEST(NullSolution, ConstantPotentialVarianceForm) {
  const double c = 1.5;
  auto f = PotentialField::constant(2, c);
  SpatialGrid xg(f.torus(), {3, 3});
  VelocityGrid vg(2, 6.0, 13);
  auto r = null_solution_test(f, xg, vg, degenerate_subspace(f, 16));
  Vec s = axis_moments(vg);
  const double S0 = s[0] * s[0], S2 = 2 * s[2] * s[0], S4 = 2 * s[4] * s[0] + 2 * s[2] * s[2];
  const double det = std::exp(-2 * c) * 0.25 * (S0 * S4 - S2 * S2);
  EXPECT_NEAR(r.determinant, det, 1e-10 * det);
  EXPECT_EQ(r.degenerate_coeff.size(), 2u);
  EXPECT_TRUE(r.pass);
}

TEST(NullSolution, SuitePotentialsPositive) {
  std::vector<PotentialField> suite = {PotentialField::cosine(2, 1), PotentialField::cosine(2, 0, 3.0, 2.0),
                                       PotentialField::constant(2, 1.0),
                                       PotentialField(Torus(2), 3.0, {{{1, 0}, 1.0, 0.0}, {{1, 1}, 0.5, 0.25}})};
  for (const auto& f : suite) {
    double prev = 0.0;
    for (int n : {11, 21}) {
      auto r = null_solution_test(f, SpatialGrid(f.torus(), {8, 8}), VelocityGrid(2, 6.0, n),
                                  degenerate_subspace(f, 64));
      EXPECT_TRUE(r.pass);
      EXPECT_GT(r.determinant, 0.0);
      if (prev > 0.0) {
        EXPECT_NEAR(r.determinant / prev, 1.0, 1e-3);
      }
      prev = r.determinant;
    }
  }
}

TEST(Positivity, MinimumOverRuns) {
  std::vector<RayleighSeries> runs(3);
  for (int k = 0; k < 3; ++k) {
    runs[k].t = {0.0, 0.5, 1.0};
    runs[k].nu_norm = {2.0, 2.0, 2.0};
    runs[k].quad = {0.2 * (k + 1), 0.2 * (k + 1), 0.2 * (k + 1)};
  }
  auto p = positivity_constant(runs);
  EXPECT_NEAR(p.M_hat, 0.1, 1e-15);
  EXPECT_EQ(p.argmin, 0);
  for (double r : p.ratios) EXPECT_GE(r, p.M_hat);
  runs[1].invariant_drift = 1e-6;
  try {
    positivity_constant(runs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvariantViolation);
  }
  runs[1].invariant_drift = 0.0;
  runs[2].nu_norm = {0.0, 0.0, 0.0};
  runs[2].quad = {0.0, 0.0, 0.0};
  try {
    positivity_constant(runs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateRun);
  }
}

TEST(Decay, ExactExponential) {
  Vec t, y;
  for (int i = 0; i <= 60; ++i) {
    t.push_back(0.1 * i);
    y.push_back(3.0 * std::exp(-0.7 * 0.1 * i));
  }
  auto f = fit_decay(t, y);
  EXPECT_NEAR(f.lambda, 0.7, 1e-12);
  EXPECT_NEAR(f.C, 3.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  auto r = decay_bootstrap(t, y, 0.2, 7.7, 3.0);
  EXPECT_NEAR(r.lambda_discrete, 0.7, 1e-12);
  EXPECT_EQ(r.unit_norms.size(), 7u);
  EXPECT_TRUE(r.holds_at_adm);
  const double R = 7.7 * 0.2 * std::exp(-3.0);
  EXPECT_NEAR(r.lambda_adm * std::exp(2 * r.lambda_adm), R, 1e-14);
}

TEST(Decay, ConstantSeriesIsDegenerateNotNonMonotone) {
  Vec t, y;
  for (int i = 0; i <= 50; ++i) {
    t.push_back(0.1 * i);
    y.push_back(2.0);
  }
  auto r = decay_bootstrap(t, y, 0.2, 7.7, 3.0);
  EXPECT_TRUE(r.fit.degenerate);
  EXPECT_EQ(r.fit.lambda, 0.0);
  EXPECT_EQ(r.lambda_discrete, 0.0);
  EXPECT_FALSE(r.holds_at_adm);
}

TEST(Decay, IncreaseRaisesNonMonotone) {
  Vec t, y;
  for (int i = 0; i <= 50; ++i) {
    t.push_back(0.1 * i);
    y.push_back(i < 25 ? 1.0 : 1.1);
  }
  try {
    decay_bootstrap(t, y, 0.2, 7.7, 3.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonMonotone);
  }
  Vec ts(t.begin(), t.begin() + 30), ys(y.begin(), y.begin() + 30);
  EXPECT_THROW(decay_bootstrap(ts, ys, 0.2, 7.7, 3.0), Error);
}

TEST(Decay, AdmissibleRateBisection) {
  for (double R : {1e-3, 0.1, 1.0, 20.0}) {
    double l = lambda_admissible(R, 1.0, 0.0);
    EXPECT_NEAR(l * std::exp(2 * l), R, 1e-12 * R);
  }
  EXPECT_THROW(lambda_admissible(1.0, 0.0, 1.0), Error);
}

// small linearized run: positive Rayleigh ratio, the fitted rate sits above the admissible one
TEST(DecayProperty, SimulatedLinearRun) {
  auto field = PotentialField::cosine(2, 1);
  CollisionSpec cs;
  cs.d = 2;
  cs.n = 13;
  auto M = build_model(cs);
  SpatialGrid xg(field.torus(), {2, 8});
  auto sub = degenerate_subspace(field, 64);
  SolverConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 6.0;
  cfg.mode = SolverMode::Linearized;
  auto f0 = random_perturbation(field, xg, M.grid, sub, 4, 0.02, InitialKind::ZeroInvariant);
  auto log = simulate(f0, field, M, cfg, sub);
  auto pos = positivity_constant({rayleigh_series(log)});
  EXPECT_GT(pos.M_hat, 0.0);
  Vec t = log.times(), y = log.series([](const LogEntry& e) { return e.l2; });
  auto r = decay_bootstrap(t, y, pos.M_hat, nu_min(M), field.sup_norm(), 2.0);
  EXPECT_GT(r.fit.lambda, 0.0);
  EXPECT_LE(r.lambda_adm, r.lambda_discrete);
  EXPECT_TRUE(r.holds_at_adm);
}
