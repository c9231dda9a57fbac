#include <surfflow/diffusion.hpp>
#include <surfflow/errors.hpp>
#include <surfflow/kinetic.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace surfflow;

namespace {

const double kTwoPi = 2.0 * std::numbers::pi;

struct Setup {
  QuadratureSpec q;
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  CollisionModel m = CollisionModel::build(W, CellGrid::uniform(12, 5.0), CellGrid::aligned(12, 5.0, 2.0), 1.0, q);
  XGrid x{16, 1.0, true};
};

const Setup& su() {
  static const Setup s;
  return s;
}

PhaseGrid grid_for(const CollisionModel& m, const XGrid& x, double eps, double frac = 0.5) {
  PhaseGrid g;
  g.x = x;
  g.epsilon = eps;
  g.dt = 1.0;
  g.dt = frac * kinetic_dt_limit(m, g);
  return g;
}

std::vector<double> bump(const XGrid& x) {
  std::vector<double> N(x.n);
  for (int i = 0; i < x.n; ++i) N[i] = 1.0 + 0.5 * std::sin(kTwoPi * x.center(i) / x.length);
  return N;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_change(const StepReport& r) { return std::abs(r.mass_after - r.mass_before) / r.mass_before; }

}  // namespace

TEST(TrappedOnly, ConservesMass) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.3);
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  for (double& v : st.g) v *= 1.0 + 0.2 * std::sin(0.37 * (&v - st.g.data()));
  const double m0 = total_mass(st, s.m, s.x);
  for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_trapped_only(st, s.m, pg)), 1e-12);
  EXPECT_NEAR(total_mass(st, s.m, s.x), m0, 1e-11 * m0);
}

TEST(TrappedOnly, ConservesMassWithForce) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.3);
  pg.u_prime.resize(s.x.n);
  for (int i = 0; i < s.x.n; ++i) pg.u_prime[i] = 0.8 * std::sin(kTwoPi * s.x.center(i));
  pg.dt = 0.5 * kinetic_dt_limit(s.m, pg);
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_trapped_only(st, s.m, pg)), 1e-12);
}

TEST(TrappedOnly, EquilibriumStationary) {
  const auto& s = su();
  for (double eps : {1.0, 0.1, 0.01}) {
    auto pg = grid_for(s.m, s.x, eps);
    auto st = SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 1.3));
    const auto g0 = st.g;
    for (int k = 0; k < 100; ++k) step_trapped_only(st, s.m, pg);
    EXPECT_LE(sup_diff(st.g, g0), 1e-10);
  }
}

TEST(TrappedOnly, EquilibriumHasZeroFlux) {
  const auto& s = su();
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  for (double f : flux_moment(st, s.m)) EXPECT_NEAR(f, 0.0, 1e-14);
  auto N = density_moment(st, s.m);
  EXPECT_LE(sup_diff(N, bump(s.x)), 1e-13);
}

TEST(TrappedOnly, RejectsBadSteps) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.5);
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  auto big = pg;
  big.dt = 10.0 * kinetic_dt_limit(s.m, pg, 1.0);
  EXPECT_THROW(step_trapped_only(st, s.m, big), CFLViolation);
  auto bad = pg;
  bad.u_prime.assign(3, 0.0);
  EXPECT_THROW(step_trapped_only(st, s.m, bad), GridMismatch);
  auto other = pg;
  other.x.n = 8;
  EXPECT_THROW(step_trapped_only(st, s.m, other), GridMismatch);
  auto zero = pg;
  zero.epsilon = 0.0;
  EXPECT_ANY_THROW(step_trapped_only(st, s.m, zero));
}

TEST(TwoGroup, ClosedConservesAndIsStationary) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.3);
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  for (int k = 0; k < 1000; ++k)
    EXPECT_LE(rel_change(step_surface_two_group(st, AmbientBoundary::closed(), s.m, pg)), 1e-12);
  auto eq = SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 1.0));
  const auto g0 = eq.g;
  for (int k = 0; k < 100; ++k) step_surface_two_group(eq, AmbientBoundary::closed(), s.m, pg);
  EXPECT_LE(sup_diff(eq.g, g0), 1e-10);
}

TEST(TwoGroup, MatchingMaxwellianAmbientIsInDetailedBalance) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.3);
  auto eq = SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 0.7));
  const auto g0 = eq.g;
  OutfluxRecord rec;
  for (int k = 0; k < 100; ++k) {
    auto r = step_surface_two_group(eq, AmbientBoundary::maxwellian(0.7), s.m, pg, &rec);
    EXPECT_NEAR(rec.mass_in, rec.mass_out, 1e-12 * rec.mass_out);
    EXPECT_NEAR(r.mass_after - r.mass_before, rec.mass_in - rec.mass_out, 1e-13);
  }
  EXPECT_LE(sup_diff(eq.g, g0), 1e-10);
}

TEST(TwoGroup, EmptyAmbientDrainsMonotonically) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.3);
  auto st = SurfaceState::equilibrium(s.m, bump(s.x));
  auto empty = AmbientBoundary::prescribed([](double, double) { return 0.0; });
  OutfluxRecord rec;
  double prev = total_mass(st, s.m, s.x);
  for (int k = 0; k < 100; ++k) {
    auto r = step_surface_two_group(st, empty, s.m, pg, &rec);
    EXPECT_EQ(rec.mass_in, 0.0);
    EXPECT_GT(rec.mass_out, 0.0);
    EXPECT_NEAR(r.mass_after - r.mass_before, -rec.mass_out, 1e-13);
    const double now = total_mass(st, s.m, s.x);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(TwoGroup, DeepWellLeakageBoundedByFreeFraction) {
  QuadratureSpec q;
  auto W = NormalPotential::parabolic(6.0, 0.5);
  auto m = CollisionModel::build(W, CellGrid::uniform(12, 5.0), CellGrid::aligned(12, 5.0, std::sqrt(6.0)), 1.0, q);
  XGrid x{8, 1.0, true};
  auto pg = grid_for(m, x, 0.3);
  auto st = SurfaceState::equilibrium(m, std::vector<double>(x.n, 1.0));
  for (int i = 0; i < x.n; ++i)
    for (int k = 0; k < m.nv(); ++k)
      for (int j = 0; j < m.ne(); ++j)
        if (m.z.free[j]) st.g[st.index(i, k, j)] = 0.0;
  const double m0 = total_mass(st, m, x);
  auto empty = AmbientBoundary::prescribed([](double, double) { return 0.0; });
  const int steps = 100;
  for (int k = 0; k < steps; ++k) step_surface_two_group(st, empty, m, pg);
  // Free molecules are refilled at most at the equilibrium free fraction and leave at
  // most at the fastest exchange rate.
  double free_frac = 0.0, total = 0.0;
  auto eq = m.equilibrium(1.0);
  auto rates = exchange_rates(m.z);
  double rmax = *std::max_element(rates.begin(), rates.end());
  for (int k = 0; k < m.nv(); ++k)
    for (int j = 0; j < m.ne(); ++j) {
      const double w = m.v.widths[k] * m.z.e.widths[j] / m.z.l[j];
      total += eq[k * m.ne() + j] * w;
      if (m.z.free[j]) free_frac += eq[k * m.ne() + j] * w;
    }
  free_frac /= total;
  const double bound = free_frac * rmax * steps * pg.dt / (pg.epsilon * pg.epsilon0);
  EXPECT_LE((m0 - total_mass(st, m, x)) / m0, bound);
  EXPECT_GT(m0, total_mass(st, m, x));
}

TEST(Channel, ConservesInEveryRegime) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.2);
  for (auto reg : {Regime::Strong, Regime::Moderate, Regime::Weak}) {
    ChannelState c{SurfaceState::equilibrium(s.m, bump(s.x)),
                   SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 0.4)), regime_kappa(reg, pg.epsilon)};
    for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_channel_two_layer(c, s.m, pg)), 1e-12);
  }
}

TEST(Channel, SumMatchesSingleLayerAndSymmetryPersists) {
  const auto& s = su();
  auto pg = grid_for(s.m, s.x, 0.2);
  for (auto reg : {Regime::Strong, Regime::Moderate, Regime::Weak}) {
    ChannelState c{SurfaceState::equilibrium(s.m, bump(s.x)),
                   SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 0.4)), regime_kappa(reg, pg.epsilon)};
    auto ref = c.g1;
    for (std::size_t n = 0; n < ref.g.size(); ++n) ref.g[n] += c.g2.g[n];
    for (int k = 0; k < 200; ++k) {
      step_channel_two_layer(c, s.m, pg);
      step_trapped_only(ref, s.m, pg);
      double err = 0.0;
      for (std::size_t n = 0; n < ref.g.size(); ++n) err = std::max(err, std::abs(c.g1.g[n] + c.g2.g[n] - ref.g[n]));
      ASSERT_LE(err, 1e-12) << regime_name(reg) << " step " << k;
    }
    ChannelState sym{SurfaceState::equilibrium(s.m, bump(s.x)), SurfaceState::equilibrium(s.m, bump(s.x)),
                     regime_kappa(reg, pg.epsilon)};
    for (int k = 0; k < 200; ++k) step_channel_two_layer(sym, s.m, pg);
    EXPECT_LE(sup_diff(sym.g1.g, sym.g2.g), 1e-12);
  }
}

TEST(Channel, RegimeScaling) {
  EXPECT_DOUBLE_EQ(regime_kappa(Regime::Strong, 0.1), 10.0);
  EXPECT_DOUBLE_EQ(regime_kappa(Regime::Moderate, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(regime_kappa(Regime::Weak, 0.1), 0.1);
  EXPECT_EQ(parse_regime("weak"), Regime::Weak);
  EXPECT_EQ(regime_name(Regime::Strong), "strong");
  EXPECT_ANY_THROW(parse_regime("medium"));
}

TEST(Channel, UniformGapDecaysAtExchangeRate) {
  QuadratureSpec q;
  auto W = NormalPotential::parabolic(1.0, 0.5);
  auto m = CollisionModel::build(W, CellGrid::uniform(16, 6.0), CellGrid::aligned(16, 6.0, 1.0), 1.0, q);
  XGrid x{2, 1.0, true};
  auto pg = grid_for(m, x, 0.05, 0.9);
  const double c = compute_exchange_c(W, m.gamma, q);
  ChannelState ch{SurfaceState::equilibrium(m, std::vector<double>(2, 1.5)),
                  SurfaceState::equilibrium(m, std::vector<double>(2, 0.5)), regime_kappa(Regime::Weak, 0.05)};
  const double t_end = 0.5;
  const int n = static_cast<int>(std::ceil(t_end / pg.dt));
  pg.dt = t_end / n;
  for (int k = 0; k < n; ++k) step_channel_two_layer(ch, m, pg);
  const double gap = density_moment(ch.g1, m)[0] - density_moment(ch.g2, m)[0];
  const double rate = std::log(1.0 / gap) / t_end;
  EXPECT_NEAR(rate / c, 1.0, 0.05) << "rate " << rate << " c " << c;
}

namespace {

struct MesoSetup {
  QuadratureSpec q;
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  MesoModel m = MesoModel::build(W, TangentialPotential::harmonic(1.0), CellGrid::aligned(12, 4.0, 1.0),
                                 CellGrid::aligned(12, 4.0, 2.0), 1.0, q);
  XGrid x{16, 1.0, true};
};

const MesoSetup& ms() {
  static const MesoSetup s;
  return s;
}

PhaseGrid meso_grid(const MesoModel& m, const XGrid& x, double eps) {
  PhaseGrid g;
  g.x = x;
  g.epsilon = eps;
  double smax = 0.0;
  for (double v : m.speed) smax = std::max(smax, std::abs(v));
  g.dt = 0.5 * eps * x.dx() / smax;
  return g;
}

}  // namespace

TEST(Mesoscopic, ConservesMass) {
  const auto& s = ms();
  auto pg = meso_grid(s.m, s.x, 0.3);
  auto st = MesoState::equilibrium(s.m, bump(s.x));
  for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_mesoscopic(st, s.m, pg)), 1e-12);
}

TEST(Mesoscopic, EquilibriumStationary) {
  const auto& s = ms();
  auto pg = meso_grid(s.m, s.x, 0.3);
  auto st = MesoState::equilibrium(s.m, std::vector<double>(s.x.n, 2.0));
  const auto h0 = st.h;
  for (int k = 0; k < 100; ++k) step_mesoscopic(st, s.m, pg);
  EXPECT_LE(sup_diff(st.h, h0), 1e-10);
  for (double f : flux_moment(st, s.m)) EXPECT_NEAR(f, 0.0, 1e-13);
}

TEST(Mesoscopic, BoundCellsDoNotMoveWithoutCollisions) {
  const auto& s = ms();
  auto pg = meso_grid(s.m, s.x, 1.0);
  auto m = s.m;
  m.tau_ms = 1e12;
  auto st = MesoState::equilibrium(m, bump(s.x));
  const auto h0 = st.h;
  for (int k = 0; k < 50; ++k) step_mesoscopic(st, m, pg);
  for (int i = 0; i < s.x.n; ++i)
    for (int a = 0; a < m.nex(); ++a)
      for (int j = 0; j < m.nez() && !m.x.unbound[a]; ++j)
        EXPECT_NEAR(st.h[st.index(i, a, j)], h0[st.index(i, a, j)], 1e-13);
}

TEST(Mesoscopic, FlatTangentialTracksVelocityModel) {
  QuadratureSpec q;
  auto W = NormalPotential::parabolic(4.0, 0.5);
  auto v = CellGrid::uniform(16, 4.0);
  auto e = CellGrid::aligned(16, 4.0, 2.0);
  auto meso = MesoModel::build(W, TangentialPotential::flat(), v, e, 1.0, q);
  auto kin = CollisionModel::build(W, v, e, 1.0, q);
  XGrid x{32, 1.0, true};
  auto pg = meso_grid(meso, x, 0.5);
  pg.dt = std::min(pg.dt, 0.5 * kinetic_dt_limit(kin, pg, 1.0));
  auto N0 = bump(x);
  auto h = MesoState::equilibrium(meso, N0);
  auto g = SurfaceState::equilibrium(kin, N0);
  const double scale = density_moment(h, meso)[0] / density_moment(g, kin)[0];
  for (int k = 0; k < 40; ++k) {
    step_mesoscopic(h, meso, pg);
    step_trapped_only(g, kin, pg);
  }
  auto a = density_moment(h, meso), b = density_moment(g, kin);
  for (double& y : b) y *= scale;
  double err = 0.0, change = 0.0;
  for (int i = 0; i < x.n; ++i) {
    err = std::max(err, std::abs(a[i] - b[i]));
    change = std::max(change, std::abs(b[i] - scale * N0[i]));
  }
  EXPECT_LT(err, 0.05 * change);
}

namespace {

struct FineSetup {
  QuadratureSpec q;
  double delta = 0.125;
  XGrid x{128, 1.0, true};
  FineModel m = FineModel::build(NormalPotential::parabolic(4.0, 0.5), TangentialPotential::harmonic(1.0, 0.125),
                                 CellGrid::aligned(12, 4.0, 1.0), CellGrid::aligned(12, 4.0, 2.0), x, 0.125, 1.0, q);
};

const FineSetup& fs() {
  static const FineSetup s;
  return s;
}

}  // namespace

TEST(FineTangential, ConservesMass) {
  const auto& s = fs();
  PhaseGrid pg;
  pg.x = s.x;
  pg.epsilon = 0.5;
  pg.dt = 1.0;
  pg.dt = 0.5 * fine_dt_limit(s.m, pg);
  auto st = FineTangentialState::equilibrium(s.m, bump(s.x));
  for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_fine_tangential(st, s.m, pg)), 1e-12);
}

TEST(FineTangential, BoltzmannProfileStationary) {
  const auto& s = fs();
  PhaseGrid pg;
  pg.x = s.x;
  pg.epsilon = 0.5;
  pg.dt = 1.0;
  pg.dt = 0.5 * fine_dt_limit(s.m, pg);
  auto st = FineTangentialState::equilibrium(s.m, std::vector<double>(s.x.n, 1.0));
  const auto h0 = st.h;
  auto N0 = density_moment(st, s.m);
  EXPECT_GT(*std::max_element(N0.begin(), N0.end()) / *std::min_element(N0.begin(), N0.end()), 1.5);
  for (int k = 0; k < 100; ++k) step_fine_tangential(st, s.m, pg);
  EXPECT_LE(sup_diff(st.h, h0), 1e-10);
  for (double f : flux_moment(st, s.m)) EXPECT_NEAR(f, 0.0, 1e-12);
}

TEST(FineTangential, RequiresResolvedPeriod) {
  QuadratureSpec q;
  XGrid coarse{16, 1.0, true};
  EXPECT_THROW(FineModel::build(NormalPotential::parabolic(4.0, 0.5), TangentialPotential::harmonic(1.0, 0.125),
                                CellGrid::aligned(12, 4.0, 1.0), CellGrid::aligned(12, 4.0, 2.0), coarse, 0.125, 1.0,
                                q),
               ResolutionError);
}

TEST(MicroMacro, ConservesAndIsStationary) {
  const auto& s = su();
  for (double eps : {0.5, 0.05, 0.005}) {
    PhaseGrid pg;
    pg.x = s.x;
    pg.epsilon = eps;
    pg.dt = 1.0;
    pg.dt = micro_macro_dt_limit(s.m, pg);
    auto st = MicroMacroState::equilibrium(s.m, bump(s.x));
    for (int k = 0; k < 1000; ++k) EXPECT_LE(rel_change(step_micro_macro(st, s.m, pg)), 1e-12);
    auto eq = MicroMacroState::equilibrium(s.m, std::vector<double>(s.x.n, 1.0));
    for (int k = 0; k < 100; ++k) step_micro_macro(eq, s.m, pg);
    for (double N : eq.N) EXPECT_NEAR(N, 1.0, 1e-12);
    for (double r : eq.r) EXPECT_NEAR(r, 0.0, 1e-12);
  }
}

TEST(MicroMacro, StepDoesNotDegenerateAsEpsilonShrinks) {
  const auto& s = su();
  PhaseGrid a, b;
  a.x = b.x = s.x;
  a.epsilon = 1e-3;
  b.epsilon = 1e-6;
  a.dt = b.dt = 1.0;
  const double da = micro_macro_dt_limit(s.m, a), db = micro_macro_dt_limit(s.m, b);
  EXPECT_GT(db, 0.5 * da);
}
