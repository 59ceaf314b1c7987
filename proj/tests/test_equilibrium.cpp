#include <gtest/gtest.h>

#include <random>

#include "boltz/equilibrium.hpp"

using namespace boltz;

namespace {

struct Setup {
  PotentialField field;
  SpatialGrid xg;
  VelocityGrid vg;
};

Setup cosine2(int nx = 6, int n = 15) {
  auto f = PotentialField::cosine(2, 1);
  return {f, SpatialGrid(f.torus(), {nx, nx}), VelocityGrid(2, 6.0, n)};
}

DistributionField random_f(const Setup& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  DistributionField f(s.xg, s.vg, Representation::PerturbationF);
  for (int iv = 0; iv < f.nv(); ++iv)
    for (int ix = 0; ix < f.nx(); ++ix) f.at(ix, iv) = N(rng) * std::exp(-0.1 * s.vg.v2(iv));
  return f;
}

}  // namespace

TEST(Maxwellian, ZeroPotentialGivesGlobalMaxwellian) {
  auto f = PotentialField::constant(2, 0.0, false);
  SpatialGrid xg(f.torus(), {3, 4});
  VelocityGrid vg(2, 5.0, 9);
  auto mu = local_maxwellian(f, xg, vg);
  Vec m = vg.mu();
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) EXPECT_EQ(mu.at(ix, iv), m[iv]);
}

TEST(Maxwellian, MaximumIsExpOfMinusMinPhi) {
  auto s = cosine2(8, 9);  // x2 = 1/2 is a node, Phi = 1 there
  auto mu = local_maxwellian(s.field, s.xg, s.vg);
  double mx = *std::max_element(mu.values.begin(), mu.values.end());
  EXPECT_NEAR(mx, std::exp(-1.0), 1e-15);
  int iv0 = 0;
  for (int iv = 0; iv < s.vg.size(); ++iv)
    if (s.vg.v2(iv) == 0.0) iv0 = iv;
  double at0 = 0.0;
  for (int ix = 0; ix < s.xg.size(); ++ix) at0 = std::max(at0, mu.at(ix, iv0));
  EXPECT_EQ(at0, mx);
}

// v . grad_x mu_E - grad Phi . grad_v mu_E = 0; the central-difference residual is O(dx^2)
TEST(Maxwellian, TransportResidualConvergesSecondOrder) {
  auto f = PotentialField::cosine(2, 1);
  VelocityGrid vg(2, 6.0, 9);
  double prev = 0.0;
  for (int nx : {32, 64, 128}) {
    double r = maxwellian_transport_residual(f, SpatialGrid(f.torus(), {4, nx}), vg);
    if (prev > 0.0) {
      EXPECT_NEAR(prev / r, 4.0, 0.2);
    }
    prev = r;
  }
}

TEST(Representation, RoundTrip) {
  auto s = cosine2();
  auto F = to_absolute(s.field, random_f(s, 1));
  auto f = to_perturbation(s.field, F);
  auto h = to_weighted(s.field, f, 2.0);
  auto F2 = to_absolute(s.field, from_weighted(s.field, h, 2.0));
  for (std::size_t k = 0; k < F.values.size(); ++k) EXPECT_NEAR(F2.values[k], F.values[k], 1e-12);
  EXPECT_THROW(to_weighted(s.field, F, 2.0), Error);
}

TEST(Representation, UnderflowNodesExcluded) {
  auto f = PotentialField::constant(1, 1.0);
  SpatialGrid xg(f.torus(), {2});
  VelocityGrid vg(1, 40.0, 5);  // |v| = 40: exp(-800) underflows
  DistributionField F(xg, vg, Representation::AbsoluteF);
  for (double& x : F.values) x = 1e-3;
  ConversionReport rep;
  auto p = to_perturbation(f, F, &rep);
  EXPECT_EQ(rep.excluded_nodes, 4);
  for (double x : p.values) EXPECT_TRUE(std::isfinite(x));
}

TEST(Projection, SpanElementsAreFixed) {
  auto s = cosine2();
  DistributionField f(s.xg, s.vg, Representation::PerturbationF);
  Vec smu = s.vg.sqrt_mu();
  for (int iv = 0; iv < f.nv(); ++iv)
    for (int ix = 0; ix < f.nx(); ++ix)
      f.at(ix, iv) = smu[iv] * (std::sin(ix + 1.0) + 0.3 * ix * s.vg.coord(iv, 0) - 0.1 * s.vg.v2(iv));
  auto P = project_P(s.field, f);
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    EXPECT_NEAR(P.Pf.values[k], f.values[k], 1e-12);
    EXPECT_NEAR(P.residual.values[k], 0.0, 1e-12);
  }
  // coefficients: a~ = sin(ix + 1), rescaled a = e^{Phi/2} a~
  Vec phi = phi_values(s.field, s.xg);
  for (int ix = 0; ix < f.nx(); ++ix) {
    EXPECT_NEAR(P.a_tilde[ix], std::sin(ix + 1.0), 1e-10);
    EXPECT_NEAR(P.c_tilde[ix], -0.1, 1e-10);
    EXPECT_NEAR(P.a[ix], std::exp(0.5 * phi[ix]) * P.a_tilde[ix], 1e-12);
  }
}

TEST(ProjectionProperty, IdempotentSelfAdjointPythagoras) {
  auto s = cosine2();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = random_f(s, seed), g = random_f(s, seed + 100);
    auto Pf = project_P(s.field, f), Pg = project_P(s.field, g);
    auto PPf = project_P(s.field, Pf.Pf);
    for (std::size_t k = 0; k < f.values.size(); ++k) EXPECT_NEAR(PPf.Pf.values[k], Pf.Pf.values[k], 1e-12);
    double a = inner(Pf.Pf, g), b = inner(f, Pg.Pf);
    EXPECT_NEAR(a, b, 1e-10 * (std::abs(a) + std::abs(b)));
    // direct quadrature of the three squared norms
    double nf = 0, np = 0, nr = 0;
    for (int iv = 0; iv < f.nv(); ++iv)
      for (int ix = 0; ix < f.nx(); ++ix) {
        double w = s.xg.weight() * s.vg.weight(iv);
        nf += w * sqr(f.at(ix, iv));
        np += w * sqr(Pf.Pf.at(ix, iv));
        nr += w * sqr(Pf.residual.at(ix, iv));
      }
    EXPECT_NEAR(nf, np + nr, 1e-10 * nf);
  }
}

TEST(Projection, CoarseGridIsIllConditioned) {
  auto f = PotentialField::cosine(2, 1);
  DistributionField p(SpatialGrid(f.torus(), {2, 2}), VelocityGrid(2, 12.0, 3), Representation::PerturbationF);
  try {
    project_P(f, p);
    FAIL() << "expected GramIllConditioned";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GramIllConditioned);
  }
}

TEST(Conservation, MaxwellianHasZeroExcess) {
  auto s = cosine2();
  auto sub = degenerate_subspace(s.field, 64);
  auto mu = local_maxwellian(s.field, s.xg, s.vg);
  for (auto mode : {MomentumMode::Mu, MomentumMode::MuE}) {
    auto r = conservation_report(s.field, mu, sub, mode);
    EXPECT_EQ(r.M, 0.0);
    EXPECT_EQ(r.E, 0.0);
    EXPECT_EQ(r.entropy_excess, 0.0);
    for (double j : r.J_full) EXPECT_NEAR(j, 0.0, 1e-15);
    EXPECT_EQ(r.negative_nodes, 0);
  }
}

// J_1 of mu_E + eps v_1 mu_E against a factorized quadrature: (sum_x e^{-Phi}) * (sum_v v_1^2 mu)
TEST(Conservation, DegenerateMomentumMatchesFactorizedOracle) {
  auto field = PotentialField::cosine(3, 2);
  SpatialGrid xg(field.torus(), {2, 2, 8});
  VelocityGrid vg(3, 6.0, 11);
  auto sub = degenerate_subspace(field, 128);
  ASSERT_EQ(sub.n, 2);
  const double eps = 1e-3;
  auto F = local_maxwellian(field, xg, vg);
  for (int iv = 0; iv < vg.size(); ++iv)
    for (int ix = 0; ix < xg.size(); ++ix) F.at(ix, iv) *= 1.0 + eps * vg.coord(iv, 0);
  auto r = conservation_report(field, F, sub, MomentumMode::MuE);

  double sx = 0.0;
  for (int k = 0; k < 8; ++k) sx += 0.125 * std::exp(-(2.0 + std::cos(2 * kPi * k / 8.0)));
  const double h = vg.h();
  double s2 = 0.0, s0 = 0.0;
  for (int i = 0; i < vg.n(); ++i) {
    double w = (i == 0 || i == vg.n() - 1) ? 0.5 * h : h, v = vg.axis()[i];
    s2 += w * v * v * std::exp(-0.5 * v * v);
    s0 += w * std::exp(-0.5 * v * v);
  }
  const double oracle = eps * sx * s2 * s0 * s0;
  EXPECT_NEAR(r.J_full[0], oracle, 1e-8 * oracle);
  EXPECT_NEAR(r.J_full[1], 0.0, 1e-14);
  double along = 0.0;
  for (std::size_t b = 0; b < sub.basis.size(); ++b) along += sqr(r.J[b]);
  EXPECT_NEAR(std::sqrt(along), oracle, 1e-8 * oracle);
}

// remainder of the second-order entropy expansion scales like eps^3
TEST(EntropyProperty, TaylorRemainderIsCubic) {
  auto s = cosine2(4, 11);
  auto sub = degenerate_subspace(s.field, 64);
  auto mu = local_maxwellian(s.field, s.xg, s.vg);
  auto t = maxwellian_table(s.field, s.xg, s.vg);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec g(mu.values.size());
  for (double& x : g) x = U(rng);
  Vec rem;
  for (double eps : {1e-3, 5e-4, 2.5e-4}) {
    auto F = mu;
    double lin = 0.0, quad = 0.0;
    for (int iv = 0; iv < F.nv(); ++iv)
      for (int ix = 0; ix < F.nx(); ++ix) {
        std::size_t k = static_cast<std::size_t>(iv) * F.nx() + ix;
        double d = mu.values[k] * eps * g[k];
        F.values[k] += d;
        lin += F.weight(iv) * (t.log_mu_e[k] + 1.0) * d;
        quad += F.weight(iv) * d * d / (2.0 * mu.values[k]);
      }
    auto r = conservation_report(s.field, F, sub);
    rem.push_back(std::abs(r.entropy_excess - lin - quad));
  }
  EXPECT_NEAR(rem[0] / rem[1], 8.0, 1.0);
  EXPECT_NEAR(rem[1] / rem[2], 8.0, 1.0);
}

TEST(Deviation, MaxwellianHasEmptyLhs) {
  auto s = cosine2();
  auto sub = degenerate_subspace(s.field, 64);
  auto mu = local_maxwellian(s.field, s.xg, s.vg);
  auto r0 = conservation_report(s.field, mu, sub);
  for (double d : {0.1, 0.5, 0.9}) {
    auto b = deviation_check(r0, s.field, mu, d);
    EXPECT_EQ(b.lhs, 0.0);
    EXPECT_TRUE(b.holds);
  }
  EXPECT_THROW(deviation_check(r0, s.field, mu, 1.0), Error);
}

// F = (1 +- 0.2) mu_E on the two halves in x1 (Phi does not depend on x1)
TEST(Deviation, HalfTorusConstruction) {
  auto s = cosine2(8, 15);
  auto sub = degenerate_subspace(s.field, 64);
  auto F = local_maxwellian(s.field, s.xg, s.vg);
  double total = 0.0;
  for (int iv = 0; iv < F.nv(); ++iv)
    for (int ix = 0; ix < F.nx(); ++ix) {
      total += F.weight(iv) * F.at(ix, iv);
      int i1 = ix / 8;
      F.at(ix, iv) *= i1 < 4 ? 1.2 : 0.8;
    }
  auto r0 = conservation_report(s.field, F, sub);
  EXPECT_NEAR(r0.M, 0.0, 1e-15);
  EXPECT_NEAR(r0.E, 0.0, 1e-14);
  const double excess = 0.5 * total * (1.2 * std::log(1.2) + 0.8 * std::log(0.8));
  EXPECT_NEAR(r0.entropy_excess, excess, 1e-12);
  auto b = deviation_check(r0, s.field, F, 0.1);
  EXPECT_NEAR(b.lhs, 0.2 * total, 1e-14);
  EXPECT_NEAR(b.rhs, 40.0 * excess, 1e-11);
  EXPECT_TRUE(b.holds);
  // threshold above the perturbation empties the indicator
  EXPECT_EQ(deviation_check(r0, s.field, F, 0.3).lhs, 0.0);
}

TEST(Deviation, SmallPerturbationNearOne) {
  auto s = cosine2();
  auto sub = degenerate_subspace(s.field, 64);
  auto F = to_absolute(s.field, random_f(s, 3));
  auto mu = local_maxwellian(s.field, s.xg, s.vg);
  for (std::size_t k = 0; k < F.values.size(); ++k) F.values[k] = mu.values[k] * (1.0 + 1e-3 * std::sin(double(k)));
  auto r0 = conservation_report(s.field, F, sub);
  EXPECT_EQ(deviation_check(r0, s.field, F, 0.999).lhs, 0.0);
}
