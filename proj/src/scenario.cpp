#include <surfflow/scenario.hpp>

#include <surfflow/diffusion.hpp>
#include <surfflow/errors.hpp>
#include <surfflow/harness.hpp>
#include <surfflow/kinetic.hpp>

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <numbers>

namespace surfflow {

namespace {

std::string path_in(const ScenarioConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.directory) / name).string();
}

NormalPotential normal_of(const ScenarioConfig& cfg) {
  return cfg.normal ? cfg.normal->build() : NormalPotential::flat();
}

CellGrid ez_grid(const ScenarioConfig& cfg, const NormalPotential& W) {
  return CellGrid::aligned(cfg.ne, cfg.v_max, std::sqrt(W.W_m()));
}

CellGrid ex_grid(const ScenarioConfig& cfg) {
  const double um = cfg.tangential && cfg.tangential->kind != "flat" ? cfg.tangential->U_m : 0.0;
  return CellGrid::aligned(cfg.nex, cfg.v_max, std::sqrt(um));
}

CollisionModel velocity_model(const ScenarioConfig& cfg, const NormalPotential& W) {
  return CollisionModel::build(W, CellGrid::uniform(cfg.nv, cfg.v_max), ez_grid(cfg, W), cfg.tau_ms, cfg.quadrature);
}

XGrid x_grid(const ScenarioConfig& cfg) { return XGrid{cfg.nx, cfg.length, cfg.periodic}; }

std::vector<double> sample(const XGrid& x, const std::function<double(double)>& f) {
  std::vector<double> v(x.n);
  for (int i = 0; i < x.n; ++i) v[i] = f(x.center(i));
  return v;
}

// Steps so that the run ends exactly at t_final with dt <= dt_max (or the configured dt).
struct Schedule {
  int steps = 1;
  double dt = 0.0;
};

Schedule schedule(const ScenarioConfig& cfg, double dt_max) {
  const double target = cfg.dt.value_or(dt_max);
  Schedule s;
  s.steps = std::max(1, static_cast<int>(std::ceil(cfg.t_final / target - 1e-9)));
  s.dt = cfg.t_final / s.steps;
  return s;
}

bool snapshot_due(const ScenarioConfig& cfg, int step, int steps) {
  return step == steps || (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0);
}

std::vector<double> cell_flux(const std::vector<double>& face, const XGrid& x) {
  std::vector<double> c(x.n);
  for (int i = 0; i < x.n; ++i) {
    const double left = i > 0 ? face[i - 1] : (x.periodic ? face[x.n - 1] : 0.0);
    c[i] = 0.5 * (left + face[i]);
  }
  return c;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s;
}

void summary(std::ostream& out, const ScenarioConfig& cfg, const Schedule& s, double m0, double m1,
             int snapshots) {
  out << fmt::format("{}: {} steps of dt = {:.6e} to t = {:.6e}, {} snapshot(s) in {}\n", kind_name(cfg.kind),
                     s.steps, s.dt, cfg.t_final, snapshots, cfg.directory);
  out << fmt::format("mass: initial {:.17g}, final {:.17g}, relative drift {:.3e}\n", m0, m1,
                     m0 != 0.0 ? std::abs(m1 - m0) / std::abs(m0) : std::abs(m1 - m0));
}

int run_surface(const ScenarioConfig& cfg, std::ostream& out) {
  const auto W = normal_of(cfg);
  const auto m = velocity_model(cfg, W);
  PhaseGrid g;
  g.x = x_grid(cfg);
  g.epsilon = cfg.epsilon;
  g.epsilon0 = cfg.epsilon0;
  g.muscl = cfg.muscl;
  if (cfg.drift_amplitude != 0.0) g.u_prime = drift_profile(cfg);
  const auto s = schedule(cfg, kinetic_dt_limit(m, g, cfg.cfl));
  g.dt = s.dt;
  const std::array<int, 3> dims{g.x.n, m.nv(), m.ne()};

  if (cfg.kind == ScenarioKind::Channel) {
    ChannelState c{SurfaceState::equilibrium(m, sample(g.x, [&](double x) { return cfg.initial_density(x); })),
                   SurfaceState::equilibrium(m, sample(g.x, [&](double x) { return cfg.layer2_density(x); })),
                   regime_kappa(cfg.regime, cfg.epsilon)};
    SnapshotWriter w1(cfg.directory, "layer1", cfg.binary), w2(cfg.directory, "layer2", cfg.binary);
    auto snap = [&](double t) {
      w1.write(t, g.x, density_moment(c.g1, m), flux_moment(c.g1, m, g.epsilon), &c.g1.g, dims);
      w2.write(t, g.x, density_moment(c.g2, m), flux_moment(c.g2, m, g.epsilon), &c.g2.g, dims);
    };
    const double m0 = total_mass(c.g1, m, g.x) + total_mass(c.g2, m, g.x);
    snap(0.0);
    for (int k = 1; k <= s.steps; ++k) {
      step_channel_two_layer(c, m, g);
      if (snapshot_due(cfg, k, s.steps)) snap(k * s.dt);
    }
    summary(out, cfg, s, m0, total_mass(c.g1, m, g.x) + total_mass(c.g2, m, g.x), w1.count());
    out << fmt::format("regime {}: kappa = {:.6e}\n", regime_name(cfg.regime), c.kappa);
    return 0;
  }

  auto st = SurfaceState::equilibrium(m, sample(g.x, [&](double x) { return cfg.initial_density(x); }));
  SnapshotWriter w(cfg.directory, "snapshots", cfg.binary);
  auto snap = [&](double t) { w.write(t, g.x, density_moment(st, m), flux_moment(st, m, g.epsilon), &st.g, dims); };
  const double m0 = total_mass(st, m, g.x);
  snap(0.0);
  const auto amb = cfg.ambient == "maxwellian" ? AmbientBoundary::maxwellian(cfg.ambient_density)
                                               : AmbientBoundary::closed();
  double exchanged = 0.0;
  for (int k = 1; k <= s.steps; ++k) {
    if (cfg.kind == ScenarioKind::TwoGroup) {
      OutfluxRecord rec;
      step_surface_two_group(st, amb, m, g, &rec);
      exchanged += rec.mass_in - rec.mass_out;
    } else {
      step_trapped_only(st, m, g);
    }
    if (snapshot_due(cfg, k, s.steps)) snap(k * s.dt);
  }
  const double m1 = total_mass(st, m, g.x);
  summary(out, cfg, s, m0, m1, w.count());
  if (cfg.kind == ScenarioKind::TwoGroup && cfg.ambient == "maxwellian")
    out << fmt::format("ambient exchange: net inflow {:.17g}, balance defect {:.3e}\n", exchanged,
                       std::abs(m1 - m0 - exchanged));
  return 0;
}

int run_meso(const ScenarioConfig& cfg, std::ostream& out) {
  if (cfg.drift_amplitude != 0.0) throw std::invalid_argument("mesoscopic: the model carries no force; set drift_amplitude = 0");
  const auto W = normal_of(cfg);
  const auto meso = MesoModel::build(W, cfg.tangential->build(), ex_grid(cfg), ez_grid(cfg, W), cfg.tau_ms, cfg.quadrature);
  PhaseGrid g;
  g.x = x_grid(cfg);
  g.epsilon = cfg.epsilon;
  g.muscl = cfg.muscl;
  double wmax = 0.0;
  for (double v : meso.speed) wmax = std::max(wmax, std::abs(v));
  const auto s = schedule(cfg, wmax > 0.0 ? cfg.cfl * cfg.epsilon * g.x.dx() / wmax : cfg.t_final);
  g.dt = s.dt;
  auto st = MesoState::equilibrium(meso, sample(g.x, [&](double x) { return cfg.initial_density(x); }));
  SnapshotWriter w(cfg.directory, "snapshots", cfg.binary);
  const std::array<int, 3> dims{g.x.n, meso.nex(), meso.nez()};
  auto snap = [&](double t) {
    w.write(t, g.x, density_moment(st, meso), flux_moment(st, meso, g.epsilon), &st.h, dims);
  };
  const double m0 = total_mass(st, meso, g.x);
  snap(0.0);
  for (int k = 1; k <= s.steps; ++k) {
    step_mesoscopic(st, meso, g);
    if (snapshot_due(cfg, k, s.steps)) snap(k * s.dt);
  }
  summary(out, cfg, s, m0, total_mass(st, meso, g.x), w.count());
  return 0;
}

int run_fine(const ScenarioConfig& cfg, std::ostream& out) {
  if (cfg.drift_amplitude != 0.0)
    throw std::invalid_argument("fine-tangential: the force comes from U(x / delta); set drift_amplitude = 0");
  const auto W = normal_of(cfg);
  const auto x = x_grid(cfg);
  const auto fm = FineModel::build(W, cfg.tangential->build(), ex_grid(cfg), ez_grid(cfg, W), x,
                                   cfg.tangential->delta, cfg.tau_ms, cfg.quadrature);
  PhaseGrid g;
  g.x = x;
  g.epsilon = cfg.epsilon;
  const auto s = schedule(cfg, fine_dt_limit(fm, g, cfg.cfl));
  g.dt = s.dt;
  auto st = FineTangentialState::equilibrium(fm, sample(x, [&](double xc) { return cfg.initial_density(xc); }));
  SnapshotWriter w(cfg.directory, "snapshots", cfg.binary);
  const std::array<int, 3> dims{x.n, fm.nex(), fm.nez()};
  auto snap = [&](double t) { w.write(t, x, density_moment(st, fm), flux_moment(st, fm, g.epsilon), &st.h, dims); };
  const double m0 = total_mass(st, fm);
  snap(0.0);
  for (int k = 1; k <= s.steps; ++k) {
    step_fine_tangential(st, fm, g);
    if (snapshot_due(cfg, k, s.steps)) snap(k * s.dt);
  }
  summary(out, cfg, s, m0, total_mass(st, fm), w.count());
  return 0;
}

int run_diffusion(const ScenarioConfig& cfg, std::ostream& out) {
  const auto x = x_grid(cfg);
  const auto W = normal_of(cfg);
  const auto up = cfg.drift_amplitude != 0.0 ? drift_profile(cfg) : std::vector<double>{};
  auto N = sample(x, [&](double xc) { return cfg.initial_density(xc); });
  const double dx_mass = x.dx();

  if (cfg.kind == ScenarioKind::DiffusionNoniso) {
    const auto m = velocity_model(cfg, W);
    std::vector<double> T(x.n);
    for (int i = 0; i < x.n; ++i)
      T[i] = cfg.temperature * (1.0 + cfg.temperature_amplitude * std::sin(2.0 * std::numbers::pi * x.center(i) / x.length));
    const NonIsoDiffusion solver(x, W, m.gamma, T, cfg.quadrature, up);
    const auto s = schedule(cfg, solver.dt_limit());
    SnapshotWriter w(cfg.directory, "snapshots", false);
    const double m0 = sum(N) * dx_mass;
    w.write(0.0, x, N, cell_flux(solver.face_flux(N), x));
    for (int k = 1; k <= s.steps; ++k) {
      solver.step(N, s.dt);
      if (snapshot_due(cfg, k, s.steps)) w.write(k * s.dt, x, N, cell_flux(solver.face_flux(N), x));
    }
    summary(out, cfg, s, m0, sum(N) * dx_mass, w.count());
    return 0;
  }

  const auto gt = velocity_model(cfg, W).gamma;
  const double D = compute_D0n(W, gt, cfg.quadrature);
  const auto scheme = cfg.scheme == "crank-nicolson" ? TimeScheme::CrankNicolson : TimeScheme::RK2;
  const IsoDiffusion solver(x, D, cfg.tau_ms, up, scheme);
  const double dt_auto = scheme == TimeScheme::RK2 ? solver.dt_limit() : 10.0 * solver.dt_limit();
  const auto s = schedule(cfg, dt_auto);

  if (cfg.kind == ScenarioKind::CoupledDiffusion) {
    if (!(W.W_m() > 0.0)) throw std::invalid_argument("coupled-diffusion: needs a well with W_m > 0");
    const double c = compute_exchange_c(W, gt, cfg.quadrature);
    auto N2 = sample(x, [&](double xc) { return cfg.layer2_density(xc); });
    SnapshotWriter w1(cfg.directory, "layer1", false), w2(cfg.directory, "layer2", false);
    auto snap = [&](double t) {
      w1.write(t, x, N, cell_flux(solver.face_flux(N), x));
      w2.write(t, x, N2, cell_flux(solver.face_flux(N2), x));
    };
    const double m0 = (sum(N) + sum(N2)) * dx_mass;
    snap(0.0);
    for (int k = 1; k <= s.steps; ++k) {
      step_coupled_layers(N, N2, solver, c, s.dt);
      if (snapshot_due(cfg, k, s.steps)) snap(k * s.dt);
    }
    summary(out, cfg, s, m0, (sum(N) + sum(N2)) * dx_mass, w1.count());
    out << fmt::format("exchange coefficient c = {:.17g}\n", c);
    return 0;
  }

  SnapshotWriter w(cfg.directory, "snapshots", false);
  const double m0 = sum(N) * dx_mass;
  w.write(0.0, x, N, cell_flux(solver.face_flux(N), x));
  for (int k = 1; k <= s.steps; ++k) {
    solver.step(N, s.dt);
    if (snapshot_due(cfg, k, s.steps)) w.write(k * s.dt, x, N, cell_flux(solver.face_flux(N), x));
  }
  summary(out, cfg, s, m0, sum(N) * dx_mass, w.count());
  return 0;
}

void print_report(std::ostream& out, const ConvergenceReport& r, const std::string& criterion) {
  out << fmt::format("{:>10} {:>14} {:>14} {:>12} {:>9}\n", r.parameter, "L1", "Linf", "mass drift", "runtime");
  for (std::size_t k = 0; k < r.values.size(); ++k)
    out << fmt::format("{:>10.4g} {:>14.6e} {:>14.6e} {:>12.3e} {:>8.1f}s\n", r.values[k], r.L1[k], r.Linf[k],
                       r.mass_drift[k], r.runtime[k]);
  out << fmt::format("estimated order {:.3f}, monotone {}\n", r.order, r.monotone ? "yes" : "no");
  out << fmt::format("[{}] {}\n", r.pass ? "PASS" : "FAIL", criterion);
}

int run_study(const ScenarioConfig& cfg, std::ostream& out) {
  ensure_directory(cfg.directory);
  const auto W = normal_of(cfg);
  if (cfg.kind == ScenarioKind::StudyDiffusionLimit) {
    DiffusionLimitScenario sc;
    sc.W = W;
    sc.length = cfg.length;
    sc.nx = cfg.nx;
    sc.nv = cfg.nv;
    sc.ne = cfg.ne;
    sc.v_max = cfg.v_max;
    sc.tau_ms = cfg.tau_ms;
    sc.t_final = cfg.t_final;
    sc.initial = [&cfg](double x) { return cfg.initial_density(x); };
    sc.cfl = cfg.cfl;
    sc.q = cfg.quadrature;
    const auto r = run_diffusion_limit_study(cfg.epsilons, sc);
    write_report_csv(path_in(cfg, "report.csv"), r);
    print_report(out, r, "diffusion limit: L1 error decreasing in epsilon with order >= 0.8");
    return r.pass ? 0 : 1;
  }
  if (cfg.kind == ScenarioKind::StudyHomogenization) {
    HomogenizationScenario sc;
    sc.W = W;
    const auto spec = *cfg.tangential;
    sc.U = [spec](double d) { return spec.build(d); };
    sc.length = cfg.length;
    sc.nex = cfg.nex;
    sc.nez = cfg.ne;
    sc.e_max = cfg.v_max;
    sc.tau_ms = cfg.tau_ms;
    sc.epsilon = cfg.epsilon;
    sc.t_final = cfg.t_final;
    sc.initial = [&cfg](double x) { return cfg.initial_density(x); };
    sc.q = cfg.quadrature;
    const auto r = run_homogenization_study(cfg.deltas, sc);
    write_report_csv(path_in(cfg, "report.csv"), r);
    print_report(out, r, "homogenization: L1 error decreasing in delta");
    return r.pass ? 0 : 1;
  }
  CouplingScenario sc;
  sc.W = W;
  sc.nx = cfg.nx;
  sc.length = cfg.length;
  sc.nv = cfg.nv;
  sc.ne = cfg.ne;
  sc.v_max = cfg.v_max;
  sc.tau_ms = cfg.tau_ms;
  sc.epsilon = cfg.epsilon;
  sc.n1 = cfg.base;
  sc.n2 = cfg.layer2_base;
  sc.modulation = cfg.profile == "sine" && cfg.base > 0.0 ? cfg.amplitude / cfg.base : 0.0;
  sc.t_final = cfg.t_final;
  sc.cfl = cfg.cfl;
  sc.q = cfg.quadrature;
  const auto rs = run_coupling_regime_study(cfg.regimes, sc);
  write_regime_csv(path_in(cfg, "regimes.csv"), rs);
  bool all = true;
  for (const auto& d : rs) {
    out << fmt::format("{:>9}: c = {:.6e}, gap at 5 eps tau {:.3e}, final gap {:.3e}, exp(-2ct) deviation {:.3e}, "
                       "sum error {:.3e}\n",
                       regime_name(d.regime), d.c_exchange, d.collapse_gap, d.final_gap, d.ode_error, d.sum_error);
    out << fmt::format("[{}] {} regime\n", d.pass ? "PASS" : "FAIL", regime_name(d.regime));
    all = all && d.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

std::vector<double> drift_profile(const ScenarioConfig& cfg) {
  const XGrid x = x_grid(cfg);
  std::vector<double> up(x.n);
  const double k = 2.0 * std::numbers::pi / cfg.length;
  for (int i = 0; i < x.n; ++i) up[i] = -cfg.drift_amplitude * k * std::sin(k * x.center(i));
  return up;
}

std::vector<CoefficientRow> coefficient_table(const ScenarioConfig& cfg) {
  if (!cfg.normal) throw std::invalid_argument("coeffs: [potential.normal] is required");
  std::vector<double> wms = cfg.W_m_values;
  if (wms.empty()) wms.push_back(cfg.normal->kind == "flat" ? 0.0 : cfg.normal->W_m);
  std::vector<CoefficientRow> rows;
  for (double wm : wms) {
    auto spec = *cfg.normal;
    if (spec.kind != "flat") spec.W_m = wm;
    const auto W = spec.build();
    const auto m = velocity_model(cfg, W);
    CoefficientRow r;
    r.W_m = W.W_m();
    r.U_m = cfg.tangential && cfg.tangential->kind != "flat" ? cfg.tangential->U_m : 0.0;
    r.c = compute_coefficients(W, m.gamma, cfg.quadrature);
    rows.push_back(r);
  }
  return rows;
}

int run_coefficients(const ScenarioConfig& cfg, std::ostream& out) {
  ensure_directory(cfg.directory);
  const auto rows = coefficient_table(cfg);
  const auto path = path_in(cfg, "coefficients.csv");
  write_coefficients_csv(path, rows);
  for (const auto& r : rows)
    out << fmt::format("W_m = {:.6g}: gamma = {:.10g}, D0n = {:.10g}, D0T = {:.10g}, C0p = {:.10g}, C0T = {:.3e}, c = {:.10g}\n",
                       r.W_m, r.c.gamma, r.c.D0n, r.c.D0T, r.c.C0p, r.c.C0T, r.c.c_exchange);
  out << "wrote " << path << '\n';
  return 0;
}

int run_scenario(const ScenarioConfig& cfg, std::ostream& out) {
  switch (cfg.kind) {
    case ScenarioKind::TrappedKinetic:
    case ScenarioKind::TwoGroup:
    case ScenarioKind::Channel:
      return run_surface(cfg, out);
    case ScenarioKind::Mesoscopic:
      return run_meso(cfg, out);
    case ScenarioKind::FineTangential:
      return run_fine(cfg, out);
    case ScenarioKind::DiffusionIso:
    case ScenarioKind::DiffusionNoniso:
    case ScenarioKind::CoupledDiffusion:
      return run_diffusion(cfg, out);
    case ScenarioKind::Coeffs:
      return run_coefficients(cfg, out);
    case ScenarioKind::StudyDiffusionLimit:
    case ScenarioKind::StudyHomogenization:
    case ScenarioKind::StudyCoupling:
      return run_study(cfg, out);
  }
  return 1;
}

}  // namespace surfflow
