#include <surfflow/collision.hpp>
#include <surfflow/diffusion.hpp>
#include <surfflow/harness.hpp>
#include <surfflow/kinetic.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace surfflow;

namespace {

const double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail: " << what << "]";
    }
  }
};

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> sine(const XGrid& x, double base, double amp) {
  std::vector<double> N(x.n);
  for (int i = 0; i < x.n; ++i) N[i] = base + amp * std::sin(2.0 * kPi * x.center(i) / x.length);
  return N;
}

double step_change(const StepReport& r) { return std::abs(r.mass_after - r.mass_before) / r.mass_before; }

struct Models {
  QuadratureSpec q;
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  CollisionModel m = CollisionModel::build(W, CellGrid::uniform(12, 5.0), CellGrid::aligned(12, 5.0, 2.0), 1.0, q);
  MesoModel meso = MesoModel::build(W, TangentialPotential::harmonic(1.0), CellGrid::aligned(12, 4.0, 1.0),
                                    CellGrid::aligned(12, 4.0, 2.0), 1.0, q);
  XGrid x{16, 1.0, true};
  XGrid xf{128, 1.0, true};
  FineModel fine = FineModel::build(W, TangentialPotential::harmonic(1.0, 0.125), CellGrid::aligned(12, 4.0, 1.0),
                                    CellGrid::aligned(12, 4.0, 2.0), xf, 0.125, 1.0, q);
};

const Models& models() {
  static const Models s;
  return s;
}

PhaseGrid velocity_grid(const CollisionModel& m, const XGrid& x, double eps) {
  PhaseGrid g;
  g.x = x;
  g.epsilon = eps;
  g.dt = 1.0;
  g.dt = 0.5 * kinetic_dt_limit(m, g);
  return g;
}

PhaseGrid meso_grid(const MesoModel& m, const XGrid& x, double eps) {
  PhaseGrid g;
  g.x = x;
  g.epsilon = eps;
  double wmax = 0.0;
  for (double w : m.speed) wmax = std::max(wmax, std::abs(w));
  g.dt = 0.5 * eps * x.dx() / wmax;
  return g;
}

PhaseGrid fine_grid(const FineModel& m, double eps) {
  PhaseGrid g;
  g.x = m.x;
  g.epsilon = eps;
  g.dt = 1.0;
  g.dt = 0.5 * fine_dt_limit(m, g);
  return g;
}

PhaseGrid micro_macro_grid(const CollisionModel& m, const XGrid& x, double eps) {
  PhaseGrid g;
  g.x = x;
  g.epsilon = eps;
  g.dt = 1.0;
  g.dt = micro_macro_dt_limit(m, g);
  return g;
}

// Perturbs a state away from equilibrium while keeping it positive.
void perturb(std::vector<double>& g) {
  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 + 0.2 * std::sin(0.37 * static_cast<double>(k));
}

void kernel_stochasticity(Outcome& o) {
  QuadratureSpec q;
  auto W = NormalPotential::parabolic(4.0, 0.5);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double e = -3.9 + 7.8 * (k + 0.5) / 20.0;
    worst = std::max(worst, std::abs(kernel_khat_row_integral(W, e, q) - 1.0));
  }
  o.detail << "max |row integral - 1| = " << worst;
  o.require(worst <= 1e-8, "row integral");
}

void theta_fixed_point(Outcome& o) {
  const auto& s = models();
  double worst = 0.0, worst_bar = 0.0;
  for (double beta : {0.5, 1.0, 3.0}) {
    std::vector<double> g(static_cast<std::size_t>(s.m.nv()) * s.m.ne());
    for (int k = 0; k < s.m.nv(); ++k)
      for (int j = 0; j < s.m.ne(); ++j) g[k * s.m.ne() + j] = beta * s.m.Mx[k] * s.m.z.lM[j];
    for (double t : theta_apply(g, s.m)) worst = std::max(worst, std::abs(t - beta));
    for (double t : theta_bar_apply(s.meso.equilibrium(beta), s.meso)) worst_bar = std::max(worst_bar, std::abs(t - beta));
  }
  o.detail << "Theta " << worst << ", Theta-bar " << worst_bar;
  o.require(worst <= 1e-8, "Theta");
  o.require(worst_bar <= 1e-8, "Theta-bar");
}

void conservation(Outcome& o) {
  const auto& s = models();
  const int steps = 1000;
  auto track = [&](const char* name, const std::function<double()>& step, double tol) {
    double worst = 0.0;
    for (int k = 0; k < steps; ++k) worst = std::max(worst, step());
    o.detail << name << ' ' << worst << "; ";
    o.require(worst <= tol, name);
  };
  {
    auto pg = velocity_grid(s.m, s.x, 0.3);
    pg.u_prime = sine(s.x, 0.0, 0.8);
    pg.dt = 0.5 * kinetic_dt_limit(s.m, pg);
    auto st = SurfaceState::equilibrium(s.m, sine(s.x, 1.0, 0.5));
    perturb(st.g);
    track("trapped", [&] { return step_change(step_trapped_only(st, s.m, pg)); }, 1e-12);
  }
  {
    auto pg = velocity_grid(s.m, s.x, 0.3);
    auto st = SurfaceState::equilibrium(s.m, sine(s.x, 1.0, 0.5));
    perturb(st.g);
    const auto amb = AmbientBoundary::closed();
    track("two-group", [&] { return step_change(step_surface_two_group(st, amb, s.m, pg)); }, 1e-12);
  }
  for (Regime r : {Regime::Strong, Regime::Moderate, Regime::Weak}) {
    auto pg = velocity_grid(s.m, s.x, 0.1);
    ChannelState c{SurfaceState::equilibrium(s.m, sine(s.x, 1.5, 0.3)), SurfaceState::equilibrium(s.m, sine(s.x, 0.5, -0.1)),
                   regime_kappa(r, 0.1)};
    perturb(c.g1.g);
    const std::string name = "channel-" + regime_name(r);
    track(name.c_str(), [&] { return step_change(step_channel_two_layer(c, s.m, pg)); }, 1e-12);
  }
  {
    auto pg = meso_grid(s.meso, s.x, 0.3);
    auto st = MesoState::equilibrium(s.meso, sine(s.x, 1.0, 0.5));
    perturb(st.h);
    track("mesoscopic", [&] { return step_change(step_mesoscopic(st, s.meso, pg)); }, 1e-12);
  }
  {
    auto pg = fine_grid(s.fine, 0.5);
    auto st = FineTangentialState::equilibrium(s.fine, sine(s.xf, 1.0, 0.5));
    perturb(st.h);
    track("fine", [&] { return step_change(step_fine_tangential(st, s.fine, pg)); }, 1e-12);
  }
  for (double eps : {0.5, 0.005}) {
    auto pg = micro_macro_grid(s.m, s.x, eps);
    auto st = MicroMacroState::equilibrium(s.m, sine(s.x, 1.0, 0.5));
    track(eps > 0.1 ? "micro-macro(0.5)" : "micro-macro(0.005)",
          [&] { return step_change(step_micro_macro(st, s.m, pg)); }, 1e-12);
  }

  XGrid x{64, 1.0, true};
  const auto up = sine(x, 0.0, 1.0);
  auto diffusion = [&](const char* name, const std::function<void(std::vector<double>&)>& step,
                       std::vector<double> N) {
    track(name, [&] {
      const double m0 = total_mass(N, x);
      step(N);
      return std::abs(total_mass(N, x) - m0) / m0;
    }, 1e-13);
  };
  IsoDiffusion rk(x, 0.5, 1.0, up), cn(x, 0.5, 1.0, up, TimeScheme::CrankNicolson);
  diffusion("iso-rk2", [&](auto& N) { step_diffusion_iso(N, rk, rk.dt_limit()); }, sine(x, 1.0, 0.5));
  diffusion("iso-cn", [&](auto& N) { step_diffusion_iso(N, cn, 4.0 * rk.dt_limit()); }, sine(x, 1.0, 0.5));
  std::vector<double> T(x.n);
  for (int i = 0; i < x.n; ++i) T[i] = 1.0 + 0.3 * std::cos(2.0 * kPi * x.center(i));
  NonIsoDiffusion ni(x, s.W, s.m.gamma, T, s.q, up);
  diffusion("noniso", [&](auto& N) { step_diffusion_noniso(N, ni, ni.dt_limit()); }, sine(x, 1.0, 0.5));
  auto N1 = sine(x, 1.5, 0.4), N2 = sine(x, 0.5, -0.2);
  track("coupled", [&] {
    const double m0 = total_mass(N1, x) + total_mass(N2, x);
    step_coupled_layers(N1, N2, rk, 0.3, rk.dt_limit());
    return std::abs(total_mass(N1, x) + total_mass(N2, x) - m0) / m0;
  }, 1e-13);
}

void stationarity(Outcome& o) {
  const auto& s = models();
  const int steps = 100;
  auto report = [&](const std::string& name, double drift) {
    o.detail << name << ' ' << drift << "; ";
    o.require(drift <= 1e-8, name);
  };
  for (double eps : {1.0, 0.1, 0.01}) {
    const std::string tag = "(eps " + std::to_string(eps).substr(0, 4) + ")";
    {
      auto pg = velocity_grid(s.m, s.x, eps);
      auto st = SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 1.3));
      const auto g0 = st.g;
      for (int k = 0; k < steps; ++k) step_trapped_only(st, s.m, pg);
      report("trapped" + tag, sup_diff(st.g, g0));
    }
    {
      auto pg = velocity_grid(s.m, s.x, eps);
      ChannelState c{SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 1.3)),
                     SurfaceState::equilibrium(s.m, std::vector<double>(s.x.n, 1.3)), regime_kappa(Regime::Moderate, eps)};
      const auto g0 = c.g1.g;
      for (int k = 0; k < steps; ++k) step_channel_two_layer(c, s.m, pg);
      report("channel" + tag, std::max(sup_diff(c.g1.g, g0), sup_diff(c.g2.g, g0)));
    }
    {
      auto pg = meso_grid(s.meso, s.x, eps);
      auto st = MesoState::equilibrium(s.meso, std::vector<double>(s.x.n, 1.3));
      const auto h0 = st.h;
      for (int k = 0; k < steps; ++k) step_mesoscopic(st, s.meso, pg);
      report("mesoscopic" + tag, sup_diff(st.h, h0));
    }
    {
      auto pg = fine_grid(s.fine, eps);
      auto st = FineTangentialState::equilibrium(s.fine, std::vector<double>(s.xf.n, 1.3));
      const auto h0 = st.h;
      for (int k = 0; k < steps; ++k) step_fine_tangential(st, s.fine, pg);
      report("fine" + tag, sup_diff(st.h, h0));
    }
    {
      auto pg = micro_macro_grid(s.m, s.x, eps);
      auto st = MicroMacroState::equilibrium(s.m, std::vector<double>(s.x.n, 1.3));
      for (int k = 0; k < steps; ++k) step_micro_macro(st, s.m, pg);
      double drift = 0.0;
      for (double N : st.N) drift = std::max(drift, std::abs(N - 1.3));
      for (double r : st.r) drift = std::max(drift, std::abs(r));
      report("micro-macro" + tag, drift);
    }
  }
}

void geometry_oracles(Outcome& o) {
  QuadratureSpec q;
  double tau_err = 0.0, w_err = 0.0;
  bool bound_zero = true;
  for (double Wm : {1.0, 4.0, 9.0}) {
    auto W = NormalPotential::parabolic(Wm, 0.5);
    const double exact = kPi / (2.0 * std::sqrt(Wm));
    for (int k = 1; k < 40; ++k) {
      const double e = std::sqrt(Wm) * k / 40.0;
      tau_err = std::max({tau_err, rel(crossing_time_tau_z(W, e, q), exact), rel(crossing_time_tau_z(W, -e, q), exact)});
    }
  }
  for (double Um : {0.5, 1.0, 2.0}) {
    auto U = TangentialPotential::harmonic(Um);
    for (int k = 1; k <= 40; ++k) {
      const double e = std::sqrt(Um) * (1.0 + 0.1 * k);
      const double a = std::sqrt(Um) / e;
      const double exact = e * a / std::asin(a);
      w_err = std::max({w_err, rel(mean_tangential_velocity(U, e, q), exact),
                        rel(mean_tangential_velocity(U, -e, q), -exact)});
    }
    for (int k = 0; k <= 20; ++k) {
      const double e = std::sqrt(Um) * (-1.0 + 0.1 * k);
      bound_zero = bound_zero && mean_tangential_velocity(U, e, q) == 0.0;
    }
  }
  o.detail << "tau_z rel " << tau_err << ", w_x rel " << w_err << ", bound w_x zero " << (bound_zero ? "yes" : "no");
  o.require(tau_err <= 1e-6, "tau_z");
  o.require(w_err <= 1e-6, "w_x");
  o.require(bound_zero, "bound w_x");
}

CollisionModel coefficient_model(const NormalPotential& W, const QuadratureSpec& q) {
  return CollisionModel::build(W, CellGrid::uniform(32, 6.0), CellGrid::aligned(32, 6.0, std::sqrt(W.W_m())), 1.0, q);
}

// Adaptive quadrature of the exchange denominator, independent of the solver's rules.
double denominator_oracle(const NormalPotential& W) {
  QuadratureSpec q;
  auto f = [&](double e) { return trap_length_l(W, e, q) * std::exp(-e * e); };
  const double s = std::sqrt(W.W_m());
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  return 2.0 * (GK::integrate(f, 1e-12, s, 12, 1e-13) + GK::integrate(f, s, 9.0, 12, 1e-13));
}

void coefficient_oracles(Outcome& o) {
  QuadratureSpec q;
  double d_err = 0.0;
  for (const auto& W : {NormalPotential::flat(), NormalPotential::parabolic(4.0, 0.5), NormalPotential::morse(2.0, 0.4, 6.0)}) {
    const auto m = coefficient_model(W, q);
    d_err = std::max(d_err, std::abs(compute_D0n(W, m.gamma, q) - 0.5));
  }
  double num_err = 0.0;
  std::vector<double> c, den;
  for (double Wm : {1.0, 2.0, 4.0, 8.0}) {
    auto W = NormalPotential::parabolic(Wm, 0.5);
    num_err = std::max(num_err, std::abs(exchange_numerator(W, q) - std::exp(-Wm)));
    c.push_back(compute_exchange_c(W, coefficient_model(W, q).gamma, q));
    den.push_back(denominator_oracle(W));
  }
  bool decreasing = true;
  for (std::size_t k = 0; k + 1 < c.size(); ++k) decreasing = decreasing && c[k] > c[k + 1];
  const double ratio = c[3] / c[0], bound = std::exp(-6.0) * den[0] / den[3];
  o.detail << "|D0n - tau/2| " << d_err << ", numerator " << num_err << ", c(8)/c(1) " << ratio << " < " << bound;
  o.require(d_err <= 1e-10, "D0n");
  o.require(num_err <= 1e-10, "numerator");
  o.require(decreasing, "c decreasing");
  o.require(ratio < bound, "c ratio");
}

void describe(Outcome& o, const ConvergenceReport& r) {
  o.detail << r.parameter << " ";
  for (std::size_t k = 0; k < r.values.size(); ++k) o.detail << r.values[k] << ":" << r.L1[k] << " ";
  o.detail << "order " << r.order;
}

void diffusion_limit(Outcome& o) {
  const auto r = run_diffusion_limit_study({0.1, 0.05, 0.025}, DiffusionLimitScenario{});
  describe(o, r);
  o.require(r.monotone, "monotone");
  o.require(r.order >= 0.8, "order");
}

void homogenization(Outcome& o) {
  const auto r = run_homogenization_study({0.04, 0.02, 0.01}, HomogenizationScenario{});
  describe(o, r);
  o.require(r.monotone, "monotone");
}

void channel_algebra(Outcome& o) {
  CouplingScenario sc;
  sc.nv = 16;
  sc.ne = 16;
  sc.modulation = 0.3;
  sc.t_final = 0.1;
  for (const auto& d : run_coupling_regime_study({Regime::Strong, Regime::Moderate, Regime::Weak}, sc)) {
    o.detail << regime_name(d.regime) << " sum " << d.sum_error << "; ";
    o.require(d.sum_error <= 1e-12, regime_name(d.regime) + " sum");
  }
  const auto& s = models();
  for (Regime r : {Regime::Strong, Regime::Moderate, Regime::Weak}) {
    auto pg = velocity_grid(s.m, s.x, 0.05);
    const auto N = sine(s.x, 1.0, 0.4);
    ChannelState c{SurfaceState::equilibrium(s.m, N), SurfaceState::equilibrium(s.m, N), regime_kappa(r, 0.05)};
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
      step_channel_two_layer(c, s.m, pg);
      worst = std::max(worst, sup_diff(density_moment(c.g1, s.m), density_moment(c.g2, s.m)));
    }
    o.detail << regime_name(r) << " symmetry " << worst << "; ";
    o.require(worst <= 1e-12, regime_name(r) + " symmetry");
  }
}

void regimes(Outcome& o) {
  CouplingScenario strong;
  strong.W = NormalPotential::parabolic(1.0, 0.5);
  const auto s = run_coupling_regime_study({Regime::Strong}, strong).front();
  CouplingScenario weak;
  weak.W = NormalPotential::parabolic(4.0, 0.5);
  const auto w = run_coupling_regime_study({Regime::Weak}, weak).front();
  o.detail << "strong (W_m 1) gap at 5 eps tau " << s.collapse_gap << ", weak (W_m 4) max rel deviation from exp(-2ct) "
           << w.ode_error;
  o.require(s.collapse_gap < 1e-3, "strong collapse");
  o.require(w.ode_error <= 0.1, "weak ODE");
}

void noniso_reduction(Outcome& o) {
  const auto& s = models();
  QuadratureSpec q;
  const auto m = coefficient_model(s.W, q);
  XGrid x{128, 1.0, true};
  NonIsoDiffusion ni(x, s.W, m.gamma, std::vector<double>(x.n, 1.0), q);
  IsoDiffusion iso(x, compute_D0n(s.W, m.gamma, q), 1.0);
  auto A = sine(x, 1.0, 0.5), B = A;
  const double dt = std::min(ni.dt_limit(), iso.dt_limit());
  for (int k = 0; k < 200; ++k) {
    step_diffusion_noniso(A, ni, dt);
    step_diffusion_iso(B, iso, dt);
  }
  const double red = sup_diff(A, B);

  std::vector<double> T(x.n), p(x.n);
  for (int i = 0; i < x.n; ++i) T[i] = 1.0 + 0.3 * std::cos(2.0 * kPi * x.center(i));
  NonIsoDiffusion nt(x, s.W, m.gamma, T, q);
  const auto N = sine(x, 1.0, 0.5);
  for (int i = 0; i < x.n; ++i) p[i] = N[i] * T[i];
  const double pf = sup_diff(nt.face_flux(N), nt.face_flux_pressure(p));
  o.detail << "constant-T vs iso " << red << ", pressure vs density flux " << pf;
  o.require(red <= 1e-12, "reduction");
  o.require(pf <= 1e-8, "pressure form");
}

void heat_kernel(Outcome& o) {
  XGrid x{256, 1.0, true};
  for (auto scheme : {TimeScheme::RK2, TimeScheme::CrankNicolson}) {
    IsoDiffusion s(x, 0.5, 1.0, {}, scheme);
    std::vector<double> N(x.n);
    for (int i = 0; i < x.n; ++i) N[i] = periodic_gaussian_solution(x.center(i), 0.0, 0.5, 1.0, 0.5, 0.1, 1.0, 1.0);
    const double base = scheme == TimeScheme::RK2 ? s.dt_limit() : 1e-3;
    const int n = static_cast<int>(std::ceil(0.1 / base));
    for (int k = 0; k < n; ++k) step_diffusion_iso(N, s, 0.1 / n);
    double err = 0.0, peak = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const double ex = periodic_gaussian_solution(x.center(i), 0.1, 0.5, 1.0, 0.5, 0.1, 1.0, 1.0);
      err = std::max(err, std::abs(N[i] - ex));
      peak = std::max(peak, std::abs(ex));
    }
    const char* name = scheme == TimeScheme::RK2 ? "rk2" : "crank-nicolson";
    o.detail << name << " rel Linf " << err / peak << "; ";
    o.require(err / peak <= 1e-4, name);
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"kernel stochasticity", kernel_stochasticity},
      {"redistribution fixed point", theta_fixed_point},
      {"mass conservation", conservation},
      {"equilibrium stationarity", stationarity},
      {"geometry oracles", geometry_oracles},
      {"coefficient oracles", coefficient_oracles},
      {"diffusion-limit convergence", diffusion_limit},
      {"homogenization convergence", homogenization},
      {"channel algebra", channel_algebra},
      {"coupling regimes", regimes},
      {"non-isothermal reduction", noniso_reduction},
      {"heat kernel", heat_kernel},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
