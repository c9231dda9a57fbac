#include <surfflow/errors.hpp>
#include <surfflow/harness.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace surfflow;

TEST(CompareDensities, Identical) {
  XGrid x{10, 1.0, true};
  std::vector<double> a(10, 0.3);
  auto e = compare_densities(a, a, x);
  EXPECT_EQ(e.L1, 0.0);
  EXPECT_EQ(e.Linf, 0.0);
}

TEST(CompareDensities, UnitShift) {
  XGrid x{20, 1.0, true};
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = std::sin(0.3 * i);
    b[i] = a[i] + 1.0;
  }
  auto e = compare_densities(a, b, x);
  EXPECT_NEAR(e.L1, 1.0, 1e-14);
  EXPECT_NEAR(e.Linf, 1.0, 1e-14);
}

TEST(CompareDensities, GridWeighted) {
  XGrid x{4, 2.0, true};
  auto e = compare_densities({0, 0, 0, 0}, {1, 0, 0, -3}, x);
  EXPECT_DOUBLE_EQ(e.L1, 2.0);
  EXPECT_DOUBLE_EQ(e.Linf, 3.0);
}

TEST(CompareDensities, SymmetricOnRandomInputs) {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  XGrid x{33, 1.7, true};
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(33), b(33);
    for (int i = 0; i < 33; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    auto e1 = compare_densities(a, b, x), e2 = compare_densities(b, a, x);
    EXPECT_EQ(e1.L1, e2.L1);
    EXPECT_EQ(e1.Linf, e2.Linf);
  }
}

TEST(CompareDensities, SizeMismatch) {
  XGrid x{4, 1.0, true};
  EXPECT_THROW(compare_densities({1, 2, 3}, {1, 2, 3, 4}, x), GridMismatch);
  EXPECT_THROW(compare_densities({1, 2, 3}, {1, 2, 3}, x), GridMismatch);
}

TEST(ConvergenceReport, OrderAndMonotonicity) {
  ConvergenceReport r;
  r.values = {0.1, 0.05, 0.025};
  r.L1 = {4e-2, 1e-2, 2.5e-3};
  r.required_order = 0.8;
  r.finalize();
  EXPECT_TRUE(r.monotone);
  EXPECT_NEAR(r.order, 2.0, 1e-12);
  ASSERT_EQ(r.pair_order.size(), 2u);
  EXPECT_NEAR(r.pair_order[0], 2.0, 1e-12);
  EXPECT_TRUE(r.pass);

  r.L1 = {4e-2, 1e-2, 1.1e-2};
  r.finalize();
  EXPECT_FALSE(r.monotone);
  EXPECT_FALSE(r.pass);

  r.L1 = {4e-2, 3.9e-2, 3.8e-2};
  r.finalize();
  EXPECT_TRUE(r.monotone);
  EXPECT_LT(r.order, 0.8);
  EXPECT_FALSE(r.pass);
  r.required_order = 0.0;
  r.finalize();
  EXPECT_TRUE(r.pass);
}

namespace {

DiffusionLimitScenario small_limit() {
  DiffusionLimitScenario sc;
  sc.nx = 16;
  sc.nv = 8;
  sc.ne = 8;
  sc.v_max = 5.0;
  sc.t_final = 0.02;
  return sc;
}

}  // namespace

TEST(DiffusionLimitStudy, SelfTestIsExact) {
  auto sc = small_limit();
  sc.self_test = true;
  auto r = run_diffusion_limit_study({0.1, 0.05, 0.025}, sc);
  ASSERT_EQ(r.L1.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(r.L1[k], 0.0);
    EXPECT_EQ(r.Linf[k], 0.0);
  }
  EXPECT_EQ(r.parameter, "epsilon");
}

TEST(DiffusionLimitStudy, ConstantDataStaysAtFloor) {
  auto sc = small_limit();
  sc.initial = [](double) { return 1.7; };
  auto r = run_diffusion_limit_study({0.1, 0.05, 0.025}, sc);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(r.L1[k], 1e-12);
    EXPECT_LE(r.mass_drift[k], 1e-12);
  }
}

TEST(DiffusionLimitStudy, ErrorShrinksWithEpsilon) {
  auto sc = small_limit();
  sc.t_final = 0.05;
  auto r = run_diffusion_limit_study({0.2, 0.1, 0.05}, sc);
  EXPECT_TRUE(r.monotone) << r.L1[0] << " " << r.L1[1] << " " << r.L1[2];
  for (double d : r.mass_drift) EXPECT_LE(d, 1e-12);
}

TEST(DiffusionLimitStudy, RejectsBadSweep) {
  auto sc = small_limit();
  EXPECT_ANY_THROW(run_diffusion_limit_study({0.1, 0.05}, sc));
  EXPECT_ANY_THROW(run_diffusion_limit_study({0.1, 0.05, 0.0}, sc));
}

namespace {

HomogenizationScenario small_homog() {
  HomogenizationScenario sc;
  sc.length = 0.4;
  sc.nex = 8;
  sc.nez = 8;
  sc.t_final = 0.02;
  return sc;
}

}  // namespace

TEST(HomogenizationStudy, FlatPotentialAtFloor) {
  auto sc = small_homog();
  sc.U = [](double d) { return TangentialPotential::flat(d); };
  auto r = run_homogenization_study({0.1, 0.05, 0.025}, sc);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(r.L1[k], 1e-12) << "delta " << r.values[k];
    EXPECT_LE(r.mass_drift[k], 1e-12);
  }
  EXPECT_EQ(r.parameter, "delta");
}

TEST(HomogenizationStudy, RejectsIncommensurateLength) {
  auto sc = small_homog();
  EXPECT_ANY_THROW(run_homogenization_study({0.1, 0.03, 0.025}, sc));
  sc.cells_per_delta = 8;
  EXPECT_THROW(run_homogenization_study({0.1, 0.05, 0.025}, sc), ResolutionError);
}

namespace {

CouplingScenario small_coupling() {
  CouplingScenario sc;
  sc.W = NormalPotential::parabolic(1.0, 0.5);
  sc.nx = 2;
  sc.nv = 16;
  sc.ne = 16;
  sc.t_final = 0.2;
  return sc;
}

}  // namespace

TEST(CouplingStudy, StrongRegimeCollapsesAndSumsMatch) {
  auto sc = small_coupling();
  auto r = run_coupling_regime_study({Regime::Strong, Regime::Moderate}, sc);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].regime, Regime::Strong);
  EXPECT_LT(r[0].collapse_gap, 1e-3);
  EXPECT_TRUE(r[0].pass);
  EXPECT_TRUE(r[1].pass);
  for (const auto& d : r) {
    EXPECT_LE(d.sum_error, 1e-12);
    EXPECT_NEAR(d.gap.front(), (sc.n1 - sc.n2) / (sc.n1 + sc.n2), 1e-12);
    EXPECT_EQ(d.times.size(), d.gap.size());
  }
}

TEST(CouplingStudy, ModulatedLayersKeepSumExact) {
  auto sc = small_coupling();
  sc.nx = 8;
  sc.modulation = 0.3;
  sc.t_final = 0.05;
  for (const auto& d : run_coupling_regime_study({Regime::Strong, Regime::Moderate, Regime::Weak}, sc))
    EXPECT_LE(d.sum_error, 1e-12) << regime_name(d.regime);
}

TEST(CouplingStudy, RejectsDegenerateInput) {
  auto sc = small_coupling();
  sc.n2 = sc.n1;
  EXPECT_ANY_THROW(run_coupling_regime_study({Regime::Weak}, sc));
  sc = small_coupling();
  sc.W = NormalPotential::flat();
  EXPECT_ANY_THROW(run_coupling_regime_study({Regime::Weak}, sc));
}
