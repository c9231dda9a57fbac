#include <surfflow/harness.hpp>

#include <surfflow/diffusion.hpp>
#include <surfflow/errors.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace surfflow {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

CollisionModel velocity_model(const NormalPotential& W, int nv, int ne, double v_max, double tau_ms,
                              const QuadratureSpec& q) {
  return CollisionModel::build(W, CellGrid::uniform(nv, v_max), CellGrid::aligned(ne, v_max, std::sqrt(W.W_m())),
                               tau_ms, q);
}

std::vector<double> sample(const std::function<double(double)>& f, const XGrid& x) {
  std::vector<double> v(x.n);
  for (int i = 0; i < x.n; ++i) v[i] = f(x.center(i));
  return v;
}

std::vector<double> block_average(const std::vector<double>& v, int block, double scale) {
  std::vector<double> out(v.size() / block, 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (int k = 0; k < block; ++k) s += v[b * block + k];
    out[b] = scale * s / block;
  }
  return out;
}

int steps_for(double t_final, double dt_max) { return std::max(1, static_cast<int>(std::ceil(t_final / dt_max - 1e-9))); }

}  // namespace

DensityError compare_densities(const std::vector<double>& a, const std::vector<double>& b, const XGrid& x) {
  if (a.size() != b.size() || static_cast<int>(a.size()) != x.n)
    throw GridMismatch("compare_densities: profiles of size " + std::to_string(a.size()) + " and " +
                       std::to_string(b.size()) + " on a grid of " + std::to_string(x.n) + " cells");
  DensityError e;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    e.L1 += d;
    e.Linf = std::max(e.Linf, d);
  }
  e.L1 *= x.dx();
  return e;
}

void ConvergenceReport::finalize() {
  pair_order.clear();
  monotone = values.size() >= 2;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    pair_order.push_back(std::log(L1[k] / L1[k + 1]) / std::log(values[k] / values[k + 1]));
    if (!(L1[k + 1] < L1[k])) monotone = false;
  }
  order = values.size() >= 2
              ? std::log(L1.front() / L1.back()) / std::log(values.front() / values.back())
              : std::numeric_limits<double>::quiet_NaN();
  pass = monotone && (required_order <= 0.0 || order >= required_order);
}

ConvergenceReport run_diffusion_limit_study(const std::vector<double>& epsilons, const DiffusionLimitScenario& sc) {
  if (epsilons.size() < 3) throw std::invalid_argument("diffusion-limit study needs at least 3 epsilon values");
  for (double e : epsilons)
    if (!(e > 0.0 && e <= 1.0)) throw std::invalid_argument("epsilon must be in (0,1]");
  if (!(sc.t_final > 0.0)) throw std::invalid_argument("t_final must be > 0");
  const XGrid x{sc.nx, sc.length, true};
  const auto init = sc.initial ? sc.initial : [L = sc.length](double xc) {
    const double d = xc - 0.5 * L;
    return 1.0 + std::exp(-d * d / (2.0 * 0.2 * 0.2));
  };
  const auto N0 = sample(init, x);
  const auto m = velocity_model(sc.W, sc.nv, sc.ne, sc.v_max, sc.tau_ms, sc.q);
  const double D = compute_D0n(sc.W, m.gamma, sc.q);

  auto diffuse = [&](double& drift) {
    const IsoDiffusion solver(x, D, sc.tau_ms);
    const double dx = x.dx();
    const int n = steps_for(sc.t_final, std::min(sc.reference_dt_factor * dx * dx / D, solver.dt_limit()));
    const double dt = sc.t_final / n;
    auto N = N0;
    const double m0 = total_mass(N, x);
    for (int k = 0; k < n; ++k) solver.step(N, dt);
    drift = std::abs(total_mass(N, x) - m0) / m0;
    return N;
  };
  double ref_drift = 0.0;
  const auto Nd = diffuse(ref_drift);

  ConvergenceReport rep;
  rep.parameter = "epsilon";
  rep.required_order = 0.8;
  for (double eps : epsilons) {
    const auto t0 = Clock::now();
    std::vector<double> Nk;
    double drift = 0.0;
    if (sc.self_test) {
      Nk = diffuse(drift);
    } else {
      PhaseGrid g;
      g.x = x;
      g.epsilon = eps;
      g.dt = 1.0;
      const int n = steps_for(sc.t_final, micro_macro_dt_limit(m, g, sc.cfl));
      g.dt = sc.t_final / n;
      auto s = MicroMacroState::equilibrium(m, N0);
      const double m0 = total_mass(s.N, x);
      for (int k = 0; k < n; ++k) step_micro_macro(s, m, g);
      drift = std::abs(total_mass(s.N, x) - m0) / m0;
      Nk = s.N;
    }
    const auto err = compare_densities(Nk, Nd, x);
    rep.values.push_back(eps);
    rep.L1.push_back(err.L1);
    rep.Linf.push_back(err.Linf);
    rep.runtime.push_back(seconds_since(t0));
    rep.mass_drift.push_back(std::max(drift, ref_drift));
  }
  rep.finalize();
  return rep;
}

ConvergenceReport run_homogenization_study(const std::vector<double>& deltas, const HomogenizationScenario& sc) {
  if (deltas.size() < 3) throw std::invalid_argument("homogenization study needs at least 3 delta values");
  if (!(sc.t_final > 0.0)) throw std::invalid_argument("t_final must be > 0");
  if (sc.cells_per_delta < 16) throw ResolutionError("homogenization study needs at least 16 cells per delta");
  const auto init = sc.initial ? sc.initial : [L = sc.length](double xc) {
    return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * xc / L);
  };
  const auto Uhat = sc.U(1.0);
  const auto ex = CellGrid::aligned(sc.nex, sc.e_max, std::sqrt(std::max(Uhat.U_m(), 0.0)));
  const auto ez = CellGrid::aligned(sc.nez, sc.e_max, std::sqrt(sc.W.W_m()));
  const auto meso = MesoModel::build(sc.W, Uhat, ex, ez, sc.tau_ms, sc.q);
  double wmax = 0.0;
  for (double w : meso.speed) wmax = std::max(wmax, std::abs(w));

  ConvergenceReport rep;
  rep.parameter = "delta";
  for (double delta : deltas) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
    const double periods = sc.length / (2.0 * delta);
    if (std::abs(periods - std::round(periods)) > 1e-9 * periods)
      throw std::invalid_argument("length must be a whole number of periods 2 delta");
    const int block = 2 * sc.cells_per_delta;
    const XGrid x{static_cast<int>(std::lround(periods)) * block, sc.length, true};
    const auto t0 = Clock::now();
    const auto fine = FineModel::build(sc.W, sc.U(delta), ex, ez, x, delta, sc.tau_ms, sc.q);

    // identical block densities at t = 0: rescale the fine data by the unit-density ratio
    const auto unit_fine = density_moment(FineTangentialState::equilibrium(fine, std::vector<double>(x.n, 1.0)), fine);
    double unit_block = 0.0;
    for (double v : unit_fine) unit_block += v;
    unit_block = 2.0 * unit_block / x.n;
    const double unit_meso = meso.mass(meso.equilibrium(1.0));
    auto beta = sample(init, x);
    auto beta_fine = beta;
    for (double& b : beta_fine) b *= unit_meso / unit_block;

    PhaseGrid g;
    g.x = x;
    g.epsilon = sc.epsilon;
    const double dt_max = std::min(fine_dt_limit(fine, g), 0.9 * sc.epsilon * x.dx() / wmax);
    const int n = steps_for(sc.t_final, dt_max);
    g.dt = sc.t_final / n;
    auto f = FineTangentialState::equilibrium(fine, beta_fine);
    auto h = MesoState::equilibrium(meso, beta);
    const double mf0 = total_mass(f, fine), mh0 = total_mass(h, meso, x);
    for (int k = 0; k < n; ++k) {
      step_fine_tangential(f, fine, g);
      step_mesoscopic(h, meso, g);
    }
    const double drift =
        std::max(std::abs(total_mass(f, fine) - mf0) / mf0, std::abs(total_mass(h, meso, x) - mh0) / mh0);
    const auto Nf = block_average(density_moment(f, fine), block, 2.0);
    const auto Nm = block_average(density_moment(h, meso), block, 1.0);
    const auto err = compare_densities(Nf, Nm, XGrid{static_cast<int>(Nf.size()), sc.length, true});
    rep.values.push_back(delta);
    rep.L1.push_back(err.L1);
    rep.Linf.push_back(err.Linf);
    rep.runtime.push_back(seconds_since(t0));
    rep.mass_drift.push_back(drift);
  }
  rep.finalize();
  return rep;
}

std::vector<RegimeDiagnostics> run_coupling_regime_study(const std::vector<Regime>& regimes,
                                                         const CouplingScenario& sc) {
  if (!(sc.epsilon > 0.0 && sc.epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in (0,1]");
  if (!(sc.W.W_m() > 0.0)) throw std::invalid_argument("coupling study needs W_m > 0");
  if (sc.n1 == sc.n2 && sc.modulation == 0.0) throw std::invalid_argument("coupling study needs N1 != N2");
  const auto m = velocity_model(sc.W, sc.nv, sc.ne, sc.v_max, sc.tau_ms, sc.q);
  const double c = compute_exchange_c(sc.W, m.gamma, sc.q);
  const XGrid x{sc.nx, sc.length, true};
  std::vector<double> N1(x.n), N2(x.n);
  for (int i = 0; i < x.n; ++i) {
    const double s = sc.modulation * std::sin(2.0 * std::numbers::pi * x.center(i) / sc.length);
    N1[i] = sc.n1 * (1.0 + s);
    N2[i] = sc.n2 * (1.0 - s);
  }
  double Nstar = 0.0;
  for (int i = 0; i < x.n; ++i) Nstar += N1[i] + N2[i];
  Nstar /= x.n;

  std::vector<RegimeDiagnostics> out;
  for (Regime r : regimes) {
    RegimeDiagnostics d;
    d.regime = r;
    d.epsilon = sc.epsilon;
    d.c_exchange = c;
    d.N1_initial = N1;
    d.N2_initial = N2;
    const double t_collapse = 5.0 * sc.epsilon * sc.tau_ms;
    const double t_end = r == Regime::Strong ? t_collapse : std::max(sc.t_final, t_collapse);

    PhaseGrid g;
    g.x = x;
    g.epsilon = sc.epsilon;
    const double dt_max = kinetic_dt_limit(m, g, sc.cfl);
    // land exactly on t_collapse
    const int n_collapse = steps_for(t_collapse, dt_max);
    g.dt = t_collapse / n_collapse;
    const int n = static_cast<int>(std::ceil(t_end / g.dt - 1e-9));

    ChannelState s{SurfaceState::equilibrium(m, N1), SurfaceState::equilibrium(m, N2), regime_kappa(r, sc.epsilon)};
    SurfaceState ref = s.g1;
    for (std::size_t k = 0; k < ref.g.size(); ++k) ref.g[k] += s.g2.g[k];

    auto gap_now = [&]() {
      const auto a = density_moment(s.g1, m), b = density_moment(s.g2, m);
      double gmax = 0.0;
      for (int i = 0; i < x.n; ++i) gmax = std::max(gmax, std::abs(a[i] - b[i]));
      return gmax / Nstar;
    };
    d.times.push_back(0.0);
    d.gap.push_back(gap_now());
    const double gap0 = d.gap.front();
    for (int k = 1; k <= n; ++k) {
      step_channel_two_layer(s, m, g);
      step_trapped_only(ref, m, g);
      const auto a = density_moment(s.g1, m), b = density_moment(s.g2, m), rr = density_moment(ref, m);
      for (int i = 0; i < x.n; ++i) d.sum_error = std::max(d.sum_error, std::abs(a[i] + b[i] - rr[i]) / Nstar);
      const double t = k * g.dt;
      d.times.push_back(t);
      d.gap.push_back(gap_now());
      if (k == n_collapse) d.collapse_gap = d.gap.back();
      if (t <= 1.0 + 1e-12) {
        const double pred = std::exp(-2.0 * c * t);
        d.ode_error = std::max(d.ode_error, std::abs(d.gap.back() / gap0 - pred) / pred);
      }
    }
    d.final_gap = d.gap.back();
    const bool sums_ok = d.sum_error <= 1e-12;
    switch (r) {
      case Regime::Strong:
        d.pass = sums_ok && d.collapse_gap < 1e-3;
        break;
      case Regime::Moderate: {
        bool decreasing = true;
        for (std::size_t k = 1; k < d.gap.size(); ++k) decreasing = decreasing && d.gap[k] <= d.gap[k - 1] * (1.0 + 1e-12);
        d.pass = sums_ok && decreasing && d.final_gap < gap0;
        break;
      }
      case Regime::Weak:
        d.pass = sums_ok && d.ode_error <= 0.1;
        break;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace surfflow
