#include <surfflow/kinetic.hpp>

#include <surfflow/errors.hpp>
#include <surfflow/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace surfflow {

namespace {

const double kSqrtPi = std::sqrt(std::numbers::pi);

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

// Flux-form x transport of ncol columns stored (x, col), each with its own speed.
// Walls send the outgoing flux of column c into column mirror(c) of the same cell.
void transport_x(std::vector<double>& g, int nx, int ncol, const std::vector<double>& speed, double dt,
                 const XGrid& x, bool muscl, const std::function<int(int)>& mirror) {
  const double r = dt / x.dx();
  const bool periodic = x.periodic;
  std::vector<double> out = g;
  parallel_for(ncol, [&](int c) {
    const double s = speed[c];
    if (s == 0.0) return;
    const double cfl = std::abs(s) * r;
    auto val = [&](int i) { return g[static_cast<std::size_t>(i) * ncol + c]; };
    auto wrap = [&](int i) { return (i % nx + nx) % nx; };
    // face value leaving donor cell i in the flow direction
    auto face = [&](int i) {
      double v = val(i);
      if (!muscl) return v;
      double slope = 0.0;
      if (periodic || (i > 0 && i < nx - 1)) slope = minmod(val(wrap(i + 1)) - v, v - val(wrap(i - 1)));
      return v + (s > 0.0 ? 0.5 : -0.5) * (1.0 - cfl) * slope;
    };
    std::vector<double> F(nx + 1, 0.0);  // F[i]: flux through the left face of cell i
    for (int f = 0; f <= nx; ++f) {
      int donor = s > 0.0 ? f - 1 : f;
      if (periodic) {
        donor = wrap(donor);
      } else if (donor < 0 || donor >= nx) {
        continue;
      } else if (f == 0 || f == nx) {
        continue;
      }
      F[f] = s * face(donor);
    }
    if (periodic) F[nx] = F[0];
    for (int i = 0; i < nx; ++i) out[static_cast<std::size_t>(i) * ncol + c] -= r * (F[i + 1] - F[i]);
  });
  if (!periodic) {
    // wall reflection: outgoing flux of the boundary cell re-enters in the mirrored column
    for (int c = 0; c < ncol; ++c) {
      const double s = speed[c];
      if (s == 0.0) continue;
      const int i = s > 0.0 ? nx - 1 : 0;
      const double flux = std::abs(s) * g[static_cast<std::size_t>(i) * ncol + c];
      out[static_cast<std::size_t>(i) * ncol + c] -= r * flux;
      out[static_cast<std::size_t>(i) * ncol + mirror(c)] += r * flux;
    }
  }
  g.swap(out);
}

// Upwind flux-form advection in v with speed a per x cell and zero flux at the cutoffs.
void vlasov_v(SurfaceState& s, const CellGrid& v, const PhaseGrid& grid, double dt) {
  const int nv = s.nv, ne = s.ne;
  parallel_for(s.nx, [&](int i) {
    const double a = -grid.force(i) / grid.epsilon;
    if (a == 0.0) return;
    auto sl = s.slice(i);
    std::vector<double> old(sl.begin(), sl.end());
    for (int j = 0; j < ne; ++j) {
      double left = 0.0;
      for (int k = 0; k < nv; ++k) {
        const double right = k + 1 < nv ? a * (a > 0.0 ? old[k * ne + j] : old[(k + 1) * ne + j]) : 0.0;
        sl[k * ne + j] -= dt / v.widths[k] * (right - left);
        left = right;
      }
    }
  });
}

// Zeroes negative entries and restores the slice mass; returns the undershoot ratio.
double clip_slice(std::span<double> sl, const std::function<double(std::size_t)>& weight) {
  double mn = 0.0, mx = 0.0;
  for (double x : sl) {
    mn = std::min(mn, x);
    mx = std::max(mx, std::abs(x));
  }
  if (mn >= 0.0) return 0.0;
  double before = 0.0, after = 0.0;
  for (std::size_t n = 0; n < sl.size(); ++n) {
    before += weight(n) * sl[n];
    sl[n] = std::max(sl[n], 0.0);
    after += weight(n) * sl[n];
  }
  if (after > 0.0)
    for (double& x : sl) x *= before / after;
  return mx > 0.0 ? -mn / mx : 0.0;
}

double clip_surface(SurfaceState& s, const CollisionModel& m) {
  std::vector<double> und(s.nx, 0.0);
  const int ne = s.ne;
  parallel_for(s.nx, [&](int i) {
    und[i] = clip_slice(s.slice(i), [&](std::size_t n) { return m.v.widths[n / ne] * m.z.e.widths[n % ne]; });
  });
  return *std::max_element(und.begin(), und.end());
}

void check_surface(const SurfaceState& s, const CollisionModel& m, const PhaseGrid& grid) {
  grid.validate();
  if (s.nx != grid.x.n || s.nv != m.nv() || s.ne != m.ne() ||
      s.g.size() != static_cast<std::size_t>(s.nx) * s.nv * s.ne)
    throw GridMismatch("surface state dimensions do not match the model and grid");
  const double limit = kinetic_dt_limit(m, grid, 0.9);
  if (grid.dt > limit) throw CFLViolation("kinetic step: dt " + num(grid.dt) + " exceeds CFL limit " + num(limit));
}

std::vector<double> surface_speeds(const CollisionModel& m, double eps) {
  std::vector<double> sp(static_cast<std::size_t>(m.nv()) * m.ne());
  for (int k = 0; k < m.nv(); ++k)
    for (int j = 0; j < m.ne(); ++j) sp[k * m.ne() + j] = m.vel[k] / eps;
  return sp;
}

// Half force step, x transport, half force step, clipping.
double surface_transport(SurfaceState& s, const CollisionModel& m, const PhaseGrid& grid) {
  const bool force = grid.has_force();
  if (force) vlasov_v(s, m.v, grid, 0.5 * grid.dt);
  const int ne = m.ne(), nv = m.nv();
  transport_x(s.g, s.nx, nv * ne, surface_speeds(m, grid.epsilon), grid.dt, grid.x, grid.muscl,
              [&](int c) { return (nv - 1 - c / ne) * ne + c % ne; });
  if (force) vlasov_v(s, m.v, grid, 0.5 * grid.dt);
  return clip_surface(s, m);
}

int surface_collide(SurfaceState& s, const CollisionModel& m, const PhaseGrid& grid) {
  const double lambda = grid.dt / (grid.epsilon * grid.epsilon * m.gamma.tau_ms);
  const RelaxationSolver solver(m.z, lambda);
  const auto cells = velocity_cells(m);
  std::vector<int> its(s.nx, 0);
  std::vector<double> out(s.g.size());
  parallel_for(s.nx, [&](int i) {
    const std::size_t off = s.index(i, 0, 0), len = static_cast<std::size_t>(s.nv) * s.ne;
    its[i] = solver.solve(s.slice(i), std::span<double>(out.data() + off, len), cells).iterations;
  });
  s.g.swap(out);
  return *std::max_element(its.begin(), its.end());
}

}  // namespace

void PhaseGrid::validate() const {
  if (!(x.n > 0) || !(x.length > 0.0)) throw std::invalid_argument("x grid must have n > 0 and length > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in (0,1]");
  if (!(epsilon0 > 0.0)) throw std::invalid_argument("epsilon0 must be > 0");
  if (!u_prime.empty() && static_cast<int>(u_prime.size()) != x.n)
    throw GridMismatch("u_prime has " + std::to_string(u_prime.size()) + " entries, x grid has " +
                       std::to_string(x.n));
}

bool PhaseGrid::has_force() const {
  return std::any_of(u_prime.begin(), u_prime.end(), [](double a) { return a != 0.0; });
}

SurfaceState SurfaceState::equilibrium(const CollisionModel& m, const std::vector<double>& N) {
  SurfaceState s;
  s.nx = static_cast<int>(N.size());
  s.nv = m.nv();
  s.ne = m.ne();
  s.g.resize(static_cast<std::size_t>(s.nx) * s.nv * s.ne);
  const auto unit = m.equilibrium(1.0);
  for (int i = 0; i < s.nx; ++i)
    for (std::size_t n = 0; n < unit.size(); ++n) s.g[s.index(i, 0, 0) + n] = N[i] * unit[n];
  return s;
}

double regime_kappa(Regime r, double epsilon) {
  switch (r) {
    case Regime::Strong: return 1.0 / epsilon;
    case Regime::Moderate: return 1.0;
    case Regime::Weak: return epsilon;
  }
  return 1.0;
}

Regime parse_regime(const std::string& s) {
  if (s == "strong") return Regime::Strong;
  if (s == "moderate") return Regime::Moderate;
  if (s == "weak") return Regime::Weak;
  throw std::invalid_argument("unknown regime '" + s + "' (expected strong, moderate or weak)");
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::Strong: return "strong";
    case Regime::Moderate: return "moderate";
    case Regime::Weak: return "weak";
  }
  return "?";
}

AmbientBoundary AmbientBoundary::closed() { return {}; }

AmbientBoundary AmbientBoundary::maxwellian(double n_b) {
  if (!(n_b >= 0.0)) throw std::invalid_argument("ambient density must be >= 0");
  AmbientBoundary a;
  a.mode = Mode::Prescribed;
  a.maxwellian_density = n_b;
  return a;
}

AmbientBoundary AmbientBoundary::prescribed(std::function<double(double, double)> f) {
  AmbientBoundary a;
  a.mode = Mode::Prescribed;
  a.f_s = std::move(f);
  return a;
}

std::vector<double> AmbientBoundary::source(const CollisionModel& m) const {
  const int nv = m.nv(), ne = m.ne();
  std::vector<double> src(static_cast<std::size_t>(nv) * ne, 0.0);
  if (mode == Mode::Closed) return src;
  for (int k = 0; k < nv; ++k)
    for (int j = 0; j < ne; ++j) {
      if (!m.z.free[j]) continue;
      double v;
      if (maxwellian_density >= 0.0) {
        v = maxwellian_density / m.gamma.gamma * m.Mx[k] * m.z.lM[j];
      } else {
        v = m.z.l[j] * f_s(m.v.centers[k], m.z.e.centers[j]);
        if (!(v >= 0.0)) throw std::invalid_argument("ambient distribution must be finite and >= 0");
      }
      src[k * ne + j] = v;
    }
  return src;
}

std::vector<double> exchange_rates(const NormalOrbits& z) {
  std::vector<double> r(z.size(), 0.0);
  for (int j = 0; j < z.size(); ++j) {
    if (!z.free[j]) continue;
    const double a = std::abs(z.e.edges[j]), b = std::abs(z.e.edges[j + 1]);
    const double lo = std::min(a, b), hi = std::max(a, b);
    r[j] = 0.5 * (std::exp(-lo * lo) - std::exp(-hi * hi)) / z.e.widths[j] / z.lM[j];
  }
  return r;
}

double kinetic_dt_limit(const CollisionModel& m, const PhaseGrid& grid, double cfl) {
  double vmax = 0.0;
  for (double v : m.vel) vmax = std::max(vmax, std::abs(v));
  double limit = cfl * grid.epsilon * grid.x.dx() / vmax;
  double fmax = 0.0;
  for (int i = 0; i < grid.x.n; ++i) fmax = std::max(fmax, std::abs(grid.force(i)));
  if (fmax > 0.0) {
    const double dv = *std::min_element(m.v.widths.begin(), m.v.widths.end());
    limit = std::min(limit, cfl * grid.epsilon * dv / fmax);
  }
  return limit;
}

StepReport step_trapped_only(SurfaceState& s, const CollisionModel& m, const PhaseGrid& grid) {
  check_surface(s, m, grid);
  StepReport rep;
  rep.mass_before = total_mass(s, m, grid.x);
  rep.undershoot = surface_transport(s, m, grid);
  rep.iterations = surface_collide(s, m, grid);
  rep.mass_after = total_mass(s, m, grid.x);
  return rep;
}

StepReport step_surface_two_group(SurfaceState& s, const AmbientBoundary& amb, const CollisionModel& m,
                                  const PhaseGrid& grid, OutfluxRecord* record) {
  check_surface(s, m, grid);
  StepReport rep;
  rep.mass_before = total_mass(s, m, grid.x);
  rep.undershoot = surface_transport(s, m, grid);

  const int nv = m.nv(), ne = m.ne();
  const auto src = amb.source(m);
  const auto rate = exchange_rates(m.z);
  if (record) {
    record->emitted.assign(s.g.size(), 0.0);
    record->mass_out = record->mass_in = 0.0;
  }
  if (amb.mode == AmbientBoundary::Mode::Prescribed) {
    const double dx = grid.x.dx();
    for (int i = 0; i < s.nx; ++i)
      for (int k = 0; k < nv; ++k)
        for (int j = 0; j < ne; ++j) {
          if (!m.z.free[j]) continue;
          const double rho = rate[j] / (2.0 * grid.epsilon * grid.epsilon0);
          const double keep = std::exp(-rho * grid.dt);
          double& g = s.g[s.index(i, k, j)];
          const double w = m.v.widths[k] * m.z.e.widths[j] * dx;
          if (record) {
            record->mass_out += w * g * (1.0 - keep);
            record->mass_in += w * src[k * ne + j] * (1.0 - keep);
          }
          g = src[k * ne + j] + (g - src[k * ne + j]) * keep;
        }
  }
  rep.iterations = surface_collide(s, m, grid);
  if (record)
    for (int i = 0; i < s.nx; ++i)
      for (int k = 0; k < nv; ++k)
        for (int j = 0; j < ne; ++j)
          if (m.z.free[j] && m.z.e.centers[j] > 0.0)
            record->emitted[s.index(i, k, j)] = s.g[s.index(i, k, j)] / m.z.l[j];
  rep.mass_after = total_mass(s, m, grid.x);
  return rep;
}

StepReport step_channel_two_layer(ChannelState& s, const CollisionModel& m, const PhaseGrid& grid) {
  check_surface(s.g1, m, grid);
  check_surface(s.g2, m, grid);
  if (!(s.kappa >= 0.0)) throw std::invalid_argument("channel coupling scale must be >= 0");
  StepReport rep;
  rep.mass_before = total_mass(s.g1, m, grid.x) + total_mass(s.g2, m, grid.x);
  rep.undershoot = std::max(surface_transport(s.g1, m, grid), surface_transport(s.g2, m, grid));

  // exact exchange between mirror-pair averages: d(g1 - g2)/dt = -2 rho (g1 - g2)
  const int nv = m.nv(), ne = m.ne();
  const auto rate = exchange_rates(m.z);
  for (int j = ne / 2; j < ne; ++j) {
    if (!m.z.free[j]) continue;
    const int jm = ne - 1 - j;
    const double rho = s.kappa * rate[j] / (2.0 * grid.epsilon);
    const double decay = std::exp(-2.0 * rho * grid.dt);
    for (int i = 0; i < s.g1.nx; ++i)
      for (int k = 0; k < nv; ++k) {
        double& a1 = s.g1.g[s.g1.index(i, k, j)];
        double& b1 = s.g1.g[s.g1.index(i, k, jm)];
        double& a2 = s.g2.g[s.g2.index(i, k, j)];
        double& b2 = s.g2.g[s.g2.index(i, k, jm)];
        const double d = 0.5 * (a1 + b1) - 0.5 * (a2 + b2);
        const double delta = 0.5 * d * (decay - 1.0);
        a1 += delta;
        b1 += delta;
        a2 -= delta;
        b2 -= delta;
      }
  }
  rep.iterations = std::max(surface_collide(s.g1, m, grid), surface_collide(s.g2, m, grid));
  rep.mass_after = total_mass(s.g1, m, grid.x) + total_mass(s.g2, m, grid.x);
  return rep;
}

double total_mass(const SurfaceState& s, const CollisionModel& m, const XGrid& x) {
  double t = 0.0;
  for (double n : density_moment(s, m)) t += n;
  return t * x.dx();
}

std::vector<double> density_moment(const SurfaceState& s, const CollisionModel& m) {
  std::vector<double> N(s.nx);
  for (int i = 0; i < s.nx; ++i) N[i] = m.mass(s.slice(i));
  return N;
}

std::vector<double> flux_moment(const SurfaceState& s, const CollisionModel& m, double epsilon) {
  std::vector<double> F(s.nx, 0.0);
  for (int i = 0; i < s.nx; ++i) {
    double acc = 0.0;
    for (int k = 0; k < s.nv; ++k) {
      double row = 0.0;
      for (int j = 0; j < s.ne; ++j) row += s.g[s.index(i, k, j)] * m.z.e.widths[j];
      acc += m.vel[k] * row * m.v.widths[k];
    }
    F[i] = acc / epsilon;
  }
  return F;
}

// ---------------------------------------------------------------- mesoscopic

MesoState MesoState::equilibrium(const MesoModel& m, const std::vector<double>& beta) {
  MesoState s;
  s.nx = static_cast<int>(beta.size());
  s.nex = m.nex();
  s.nez = m.nez();
  s.h.resize(static_cast<std::size_t>(s.nx) * s.nex * s.nez);
  const auto unit = m.equilibrium(1.0);
  for (int i = 0; i < s.nx; ++i)
    for (std::size_t n = 0; n < unit.size(); ++n) s.h[s.index(i, 0, 0) + n] = beta[i] * unit[n];
  return s;
}

StepReport step_mesoscopic(MesoState& s, const MesoModel& m, const PhaseGrid& grid) {
  grid.validate();
  if (s.nx != grid.x.n || s.nex != m.nex() || s.nez != m.nez())
    throw GridMismatch("meso state dimensions do not match the model and grid");
  if (grid.has_force()) throw std::invalid_argument("the mesoscopic model carries no force term");
  double wmax = 0.0;
  for (double w : m.speed) wmax = std::max(wmax, std::abs(w));
  const double limit = 0.9 * grid.epsilon * grid.x.dx() / wmax;
  if (grid.dt > limit) throw CFLViolation("meso step: dt " + num(grid.dt) + " exceeds CFL limit " + num(limit));

  StepReport rep;
  rep.mass_before = total_mass(s, m, grid.x);
  const int nex = m.nex(), nez = m.nez();
  std::vector<double> sp(static_cast<std::size_t>(nex) * nez);
  for (int a = 0; a < nex; ++a)
    for (int j = 0; j < nez; ++j) sp[a * nez + j] = m.speed[a] / grid.epsilon;
  transport_x(s.h, s.nx, nex * nez, sp, grid.dt, grid.x, grid.muscl,
              [&](int c) { return (nex - 1 - c / nez) * nez + c % nez; });
  std::vector<double> und(s.nx, 0.0);
  parallel_for(s.nx, [&](int i) {
    und[i] = clip_slice(s.slice(i), [&](std::size_t n) { return m.x.omega[n / nez] * m.z.e.widths[n % nez]; });
  });
  rep.undershoot = *std::max_element(und.begin(), und.end());

  const MesoRelaxationSolver solver(m, grid.dt / (grid.epsilon * grid.epsilon * m.tau_ms));
  std::vector<double> out(s.h.size());
  std::vector<int> its(s.nx, 0);
  parallel_for(s.nx, [&](int i) {
    const std::size_t off = s.index(i, 0, 0), len = static_cast<std::size_t>(nex) * nez;
    its[i] = solver.solve(s.slice(i), std::span<double>(out.data() + off, len)).iterations;
  });
  s.h.swap(out);
  rep.iterations = *std::max_element(its.begin(), its.end());
  rep.mass_after = total_mass(s, m, grid.x);
  return rep;
}

double total_mass(const MesoState& s, const MesoModel& m, const XGrid& x) {
  double t = 0.0;
  for (double n : density_moment(s, m)) t += n;
  return t * x.dx();
}

std::vector<double> density_moment(const MesoState& s, const MesoModel& m) {
  std::vector<double> N(s.nx);
  for (int i = 0; i < s.nx; ++i) N[i] = m.mass(s.slice(i));
  return N;
}

std::vector<double> flux_moment(const MesoState& s, const MesoModel& m, double epsilon) {
  std::vector<double> F(s.nx, 0.0);
  for (int i = 0; i < s.nx; ++i) {
    double acc = 0.0;
    for (int a = 0; a < s.nex; ++a) {
      double row = 0.0;
      for (int j = 0; j < s.nez; ++j) row += s.h[s.index(i, a, j)] * m.z.e.widths[j];
      acc += m.speed[a] * m.x.omega[a] * row;
    }
    F[i] = acc / epsilon;
  }
  return F;
}

// ---------------------------------------------------------------- fine tangential

FineModel FineModel::build(const NormalPotential& W, const TangentialPotential& U, const CellGrid& ex,
                           const CellGrid& ez, const XGrid& x, double delta, double tau_ms,
                           const QuadratureSpec& q) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  if (!(tau_ms > 0.0)) throw std::invalid_argument("tau_ms must be > 0");
  if (x.dx() > delta / 16.0 * (1.0 + 1e-12))
    throw ResolutionError("fine tangential solver: dx " + num(x.dx()) + " exceeds delta/16 = " + num(delta / 16.0));
  FineModel m;
  m.z = NormalOrbits::build(W, ez, q);
  m.ex = ex;
  m.U = U;
  m.x = x;
  m.delta = delta;
  m.tau_ms = tau_ms;
  const int nx = x.n, na = ex.size();
  m.Ux.resize(nx);
  for (int i = 0; i < nx; ++i) m.Ux[i] = U(x.center(i) / delta);
  // barrier between centers i and i + 1: largest sampled U on the segment, face included
  m.Uface.assign(nx, 0.0);
  for (int i = 0; i < nx; ++i) {
    double top = std::max(m.Ux[i], m.Ux[(i + 1) % nx]);
    for (int k = 1; k < 32; ++k) top = std::max(top, U((x.center(i) + k / 32.0 * x.dx()) / delta));
    m.Uface[i] = top;
  }
  m.omega.assign(static_cast<std::size_t>(nx) * na, 0.0);
  m.Mx.assign(m.omega.size(), 0.0);
  m.phi.assign(m.omega.size(), 0.0);
  m.pass_right.assign(m.omega.size(), 0.0);
  m.pass_left.assign(m.omega.size(), 0.0);
  m.Sx.assign(nx, 0.0);
  auto bounds = [&](int a) {
    const double p = std::abs(ex.edges[a]), r = std::abs(ex.edges[a + 1]);
    return std::pair{std::min(p, r), std::max(p, r)};
  };
  // int |e| exp(-e^2) de over the part of cell a above the given barriers
  auto pass = [&](int a, double u0, double u1) {
    const auto [lo, hi] = bounds(a);
    const double s = std::max({lo * lo, u0, u1});
    if (!(hi * hi > s)) return 0.0;
    return -0.5 * std::exp(-s) * std::expm1(s - hi * hi);
  };
  for (int i = 0; i < nx; ++i) {
    const double u = m.Ux[i];
    for (int a = 0; a < na; ++a) {
      const auto [lo, hi] = bounds(a);
      if (hi * hi <= u) continue;
      const double vhi = std::sqrt(hi * hi - u), vlo = std::sqrt(std::max(lo * lo, u) - u);
      const double om = vhi - vlo;
      if (!(om > 0.0)) continue;
      const double mw = std::exp(-u) * 0.5 * kSqrtPi * (std::erf(vhi) - std::erf(vlo));
      m.omega[m.at(i, a)] = om;
      const double mx = mw / om;
      m.Mx[m.at(i, a)] = mx;
      m.phi[m.at(i, a)] = pass(a, u, 0.0) / mx;
      m.Sx[i] += mw;
      const bool has_r = x.periodic || i + 1 < nx, has_l = x.periodic || i > 0;
      if (has_r) m.pass_right[m.at(i, a)] = pass(a, u, m.Uface[i]) / mx;
      if (has_l) m.pass_left[m.at(i, a)] = pass(a, u, m.Uface[(i + nx - 1) % nx]) / mx;
    }
  }
  return m;
}

TangentialCells FineModel::cells(int i) const {
  TangentialCells t;
  t.omega.assign(omega.begin() + at(i, 0), omega.begin() + at(i, 0) + nex());
  t.Mx.assign(Mx.begin() + at(i, 0), Mx.begin() + at(i, 0) + nex());
  t.Sx = Sx[i];
  return t;
}

FineTangentialState FineTangentialState::equilibrium(const FineModel& m, const std::vector<double>& beta) {
  FineTangentialState s;
  s.nx = static_cast<int>(beta.size());
  s.nex = m.nex();
  s.nez = m.nez();
  s.h.assign(static_cast<std::size_t>(s.nx) * s.nex * s.nez, 0.0);
  for (int i = 0; i < s.nx; ++i)
    for (int a = 0; a < s.nex; ++a) {
      if (m.omega[m.at(i, a)] == 0.0) continue;
      for (int j = 0; j < s.nez; ++j) s.h[s.index(i, a, j)] = beta[i] * m.z.lM[j] * m.Mx[m.at(i, a)];
    }
  return s;
}

double fine_dt_limit(const FineModel& m, const PhaseGrid& grid, double cfl) {
  double vmax = 0.0;
  for (std::size_t n = 0; n < m.omega.size(); ++n)
    if (m.omega[n] > 0.0) vmax = std::max(vmax, m.phi[n] / m.omega[n]);
  return cfl * grid.epsilon * grid.x.dx() / vmax;
}

StepReport step_fine_tangential(FineTangentialState& s, const FineModel& m, const PhaseGrid& grid) {
  grid.validate();
  if (s.nx != grid.x.n || s.nx != m.x.n || s.nex != m.nex() || s.nez != m.nez())
    throw GridMismatch("fine state dimensions do not match the model and grid");
  if (std::abs(grid.x.dx() - m.x.dx()) > 1e-14 * m.x.dx() || grid.x.periodic != m.x.periodic)
    throw GridMismatch("fine model was built on a different x grid");
  if (grid.has_force()) throw std::invalid_argument("the fine tangential model carries its force in U(x)");
  const double limit = fine_dt_limit(m, grid);
  if (grid.dt > limit)
    throw CFLViolation("fine step: dt " + num(grid.dt) + " exceeds CFL limit " + num(limit));

  StepReport rep;
  rep.mass_before = total_mass(s, m);
  const int nx = s.nx, na = s.nex, nz = s.nez;
  const double r = grid.dt / (grid.x.dx() * grid.epsilon);
  // conservative update of the cell masses h * omega
  std::vector<double> mass(s.h.size(), 0.0);
  for (int i = 0; i < nx; ++i)
    for (int a = 0; a < na; ++a)
      for (int j = 0; j < nz; ++j) mass[s.index(i, a, j)] = s.h[s.index(i, a, j)] * m.omega[m.at(i, a)];
  std::vector<double> next = mass;
  for (int a = 0; a < na; ++a) {
    const int am = na - 1 - a;
    const bool right = m.ex.centers[a] > 0.0;
    for (int i = 0; i < nx; ++i) {
      const double out = m.phi[m.at(i, a)];
      if (out == 0.0) continue;
      const double through = right ? m.pass_right[m.at(i, a)] : m.pass_left[m.at(i, a)];
      const int dest = right ? (i + 1) % nx : (i + nx - 1) % nx;
      for (int j = 0; j < nz; ++j) {
        const double h = s.h[s.index(i, a, j)];
        next[s.index(i, a, j)] -= r * out * h;
        if (through > 0.0) next[s.index(dest, a, j)] += r * through * h;
        if (out > through) next[s.index(i, am, j)] += r * (out - through) * h;
      }
    }
  }
  for (int i = 0; i < nx; ++i)
    for (int a = 0; a < na; ++a) {
      const double om = m.omega[m.at(i, a)];
      for (int j = 0; j < nz; ++j) s.h[s.index(i, a, j)] = om > 0.0 ? next[s.index(i, a, j)] / om : 0.0;
    }
  std::vector<double> und(nx, 0.0);
  parallel_for(nx, [&](int i) {
    und[i] = clip_slice(s.slice(i), [&](std::size_t n) { return m.omega[m.at(i, n / nz)] * m.z.e.widths[n % nz]; });
  });
  rep.undershoot = *std::max_element(und.begin(), und.end());

  const RelaxationSolver solver(m.z, grid.dt / (grid.epsilon * grid.epsilon * m.tau_ms));
  std::vector<double> out(s.h.size());
  std::vector<int> its(nx, 0);
  parallel_for(nx, [&](int i) {
    const std::size_t off = s.index(i, 0, 0), len = static_cast<std::size_t>(na) * nz;
    its[i] = solver.solve(s.slice(i), std::span<double>(out.data() + off, len), m.cells(i)).iterations;
  });
  s.h.swap(out);
  rep.iterations = *std::max_element(its.begin(), its.end());
  rep.mass_after = total_mass(s, m);
  return rep;
}

double total_mass(const FineTangentialState& s, const FineModel& m) {
  double t = 0.0;
  for (double n : density_moment(s, m)) t += n;
  return t * m.x.dx();
}

std::vector<double> density_moment(const FineTangentialState& s, const FineModel& m) {
  std::vector<double> N(s.nx, 0.0);
  for (int i = 0; i < s.nx; ++i)
    for (int a = 0; a < s.nex; ++a) {
      double row = 0.0;
      for (int j = 0; j < s.nez; ++j) row += s.h[s.index(i, a, j)] * m.z.e.widths[j];
      N[i] += m.omega[m.at(i, a)] * row;
    }
  return N;
}

std::vector<double> flux_moment(const FineTangentialState& s, const FineModel& m, double epsilon) {
  std::vector<double> F(s.nx, 0.0);
  for (int i = 0; i < s.nx; ++i)
    for (int a = 0; a < s.nex; ++a) {
      double row = 0.0;
      for (int j = 0; j < s.nez; ++j) row += s.h[s.index(i, a, j)] * m.z.e.widths[j];
      const double sgn = m.ex.centers[a] > 0.0 ? 1.0 : -1.0;
      F[i] += sgn * m.phi[m.at(i, a)] * row / epsilon;
    }
  return F;
}

// ---------------------------------------------------------------- micro-macro

MicroMacroState MicroMacroState::equilibrium(const CollisionModel& m, const std::vector<double>& N) {
  MicroMacroState s;
  s.nx = static_cast<int>(N.size());
  s.nv = m.nv();
  s.ne = m.ne();
  s.N = N;
  s.r.assign(static_cast<std::size_t>(s.nx) * s.nv * s.ne, 0.0);
  return s;
}

double micro_macro_dt_limit(const CollisionModel& m, const PhaseGrid& grid, double cfl) {
  double vmax = 0.0;
  for (double v : m.vel) vmax = std::max(vmax, std::abs(v));
  const double dx = grid.x.dx(), eps = grid.epsilon, tau = m.gamma.tau_ms;
  // upwind micro transport damped by the implicit relaxation, and the explicit macro diffusion
  const double growth = vmax / (eps * dx) - 0.5 / (eps * eps * tau);
  const double diffusion = 0.5 * (dx * dx / (tau * vmax * vmax) + 2.0 * eps * dx / vmax);
  return cfl * (growth > 0.0 ? std::min(1.0 / growth, diffusion) : diffusion);
}

StepReport step_micro_macro(MicroMacroState& s, const CollisionModel& m, const PhaseGrid& grid) {
  grid.validate();
  if (!grid.x.periodic) throw std::invalid_argument("the micro-macro solver supports periodic x only");
  if (s.nx != grid.x.n || s.nv != m.nv() || s.ne != m.ne())
    throw GridMismatch("micro-macro state dimensions do not match the model and grid");
  const double limit = micro_macro_dt_limit(m, grid);
  if (grid.dt > limit)
    throw CFLViolation("micro-macro step: dt " + num(grid.dt) + " exceeds stability limit " + num(limit));

  const int nx = s.nx, nv = s.nv, ne = s.ne;
  const std::size_t len = static_cast<std::size_t>(nv) * ne;
  const double dx = grid.x.dx(), dt = grid.dt, eps = grid.epsilon;
  StepReport rep;
  double m0 = 0.0;
  for (double n : s.N) m0 += n * dx;
  rep.mass_before = m0;

  const auto E = m.equilibrium(1.0);
  auto cell_mass = [&](const double* f) { return m.mass(std::span<const double>(f, len)); };
  auto force_at = [&](int i) { return 0.5 * (grid.force(i) + grid.force((i + 1) % nx)); };
  // flux-form -a dv f with a = -U'/eps folded in by the caller
  auto add_vlasov = [&](const double* f, double a, double* acc) {
    if (a == 0.0) return;
    for (int j = 0; j < ne; ++j) {
      double left = 0.0;
      for (int k = 0; k < nv; ++k) {
        const double right = k + 1 < nv ? a * (a > 0.0 ? f[k * ne + j] : f[(k + 1) * ne + j]) : 0.0;
        acc[k * ne + j] += (right - left) / m.v.widths[k];
        left = right;
      }
    }
  };

  const double lambda = dt / (eps * eps * m.gamma.tau_ms);
  const RelaxationSolver solver(m.z, lambda);
  const auto cells = velocity_cells(m);
  std::vector<double> rnew(s.r.size());
  std::vector<int> its(nx, 0);
  parallel_for(nx, [&](int i) {
    const int ip = (i + 1) % nx, im = (i + nx - 1) % nx;
    const double* r0 = s.r.data() + i * len;
    const double* rl = s.r.data() + im * len;
    const double* rr = s.r.data() + ip * len;
    std::vector<double> tr(len, 0.0), rhs(len);
    for (int k = 0; k < nv; ++k) {
      const double v = m.vel[k];
      for (int j = 0; j < ne; ++j) {
        const int n = k * ne + j;
        tr[n] = v > 0.0 ? v * (r0[n] - rl[n]) / dx : v * (rr[n] - r0[n]) / dx;
      }
    }
    const double a = -force_at(i);
    add_vlasov(r0, a, tr.data());
    const double mt = cell_mass(tr.data());
    const double dN = (s.N[ip] - s.N[i]) / dx, Nbar = 0.5 * (s.N[ip] + s.N[i]);
    std::vector<double> eq(len, 0.0);
    add_vlasov(E.data(), a * Nbar, eq.data());
    for (int k = 0; k < nv; ++k)
      for (int j = 0; j < ne; ++j) {
        const int n = k * ne + j;
        const double t = tr[n] - mt * E[n] + m.vel[k] * E[n] * dN + eq[n];
        rhs[n] = r0[n] - dt / eps * t;
      }
    double* out = rnew.data() + i * len;
    its[i] = solver.solve(rhs, std::span<double>(out, len), cells, false).iterations;
    const double mr = cell_mass(out);
    for (std::size_t n = 0; n < len; ++n) out[n] -= mr * E[n];
  });
  s.r.swap(rnew);

  std::vector<double> phi(nx, 0.0);
  for (int i = 0; i < nx; ++i) {
    const double* r = s.r.data() + i * len;
    double acc = 0.0;
    for (int k = 0; k < nv; ++k) {
      double row = 0.0;
      for (int j = 0; j < ne; ++j) row += r[k * ne + j] * m.z.e.widths[j];
      acc += m.vel[k] * row * m.v.widths[k];
    }
    phi[i] = acc / eps;
  }
  for (int i = 0; i < nx; ++i) s.N[i] -= dt / dx * (phi[i] - phi[(i + nx - 1) % nx]);
  rep.iterations = *std::max_element(its.begin(), its.end());
  double m1 = 0.0;
  for (double n : s.N) m1 += n * dx;
  rep.mass_after = m1;
  return rep;
}

}  // namespace surfflow
