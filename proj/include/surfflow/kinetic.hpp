#pragma once

#include <surfflow/collision.hpp>
#include <surfflow/grid.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace surfflow {

// Time step and scaling shared by the kinetic solvers. The scaled equations read
// eps dt g + v dx g - U' dv g = (Theta[g] l M - g) / (eps tau_ms) + coupling.
struct PhaseGrid {
  XGrid x;
  double dt = 0.0;
  double epsilon = 1.0;
  double epsilon0 = 1.0;
  bool muscl = false;
  std::vector<double> u_prime;  // U'(x) at cell centers; empty means zero

  void validate() const;
  double force(int i) const { return u_prime.empty() ? 0.0 : u_prime[i]; }
  bool has_force() const;
};

struct StepReport {
  double mass_before = 0.0;
  double mass_after = 0.0;
  int iterations = 0;       // largest implicit-solve iteration count over x cells
  double undershoot = 0.0;  // largest clipped negative value relative to max |g|
};

// Distribution over (x, v_x, e_z), row-major.
struct SurfaceState {
  int nx = 0, nv = 0, ne = 0;
  std::vector<double> g;

  static SurfaceState equilibrium(const CollisionModel& m, const std::vector<double>& N);
  std::size_t index(int i, int k, int j) const { return (static_cast<std::size_t>(i) * nv + k) * ne + j; }
  std::span<double> slice(int i) { return {g.data() + index(i, 0, 0), static_cast<std::size_t>(nv) * ne}; }
  std::span<const double> slice(int i) const {
    return {g.data() + index(i, 0, 0), static_cast<std::size_t>(nv) * ne};
  }
};

enum class Regime { Strong, Moderate, Weak };

// Exchange-term coefficient for a regime: 1/eps, 1 or eps.
double regime_kappa(Regime r, double epsilon);
Regime parse_regime(const std::string& s);
std::string regime_name(Regime r);

struct ChannelState {
  SurfaceState g1, g2;
  double kappa = 1.0;
};

// Bulk data seen by free molecules at the layer edge.
struct AmbientBoundary {
  enum class Mode { Closed, Prescribed };
  Mode mode = Mode::Closed;
  // Incoming distribution f_s(v_x, e_z); when maxwellian_density >= 0 the
  // discrete form is (n_b / gamma) M on the cell averages instead.
  std::function<double(double, double)> f_s;
  double maxwellian_density = -1.0;

  static AmbientBoundary closed();
  static AmbientBoundary maxwellian(double n_b);
  static AmbientBoundary prescribed(std::function<double(double, double)> f);
  // l f_s per (v, e) cell, row-major.
  std::vector<double> source(const CollisionModel& m) const;
};

struct OutfluxRecord {
  std::vector<double> emitted;  // g^f / l on free cells with e_z > 0, zero elsewhere; (x, v, e)
  double mass_out = 0.0;
  double mass_in = 0.0;
};

// 1/tau_z on free cells, chosen so that the cell flux |e| M integrates exactly; 0 on trapped cells.
std::vector<double> exchange_rates(const NormalOrbits& z);

StepReport step_trapped_only(SurfaceState& s, const CollisionModel& m, const PhaseGrid& grid);
StepReport step_surface_two_group(SurfaceState& s, const AmbientBoundary& amb, const CollisionModel& m,
                                  const PhaseGrid& grid, OutfluxRecord* record = nullptr);
StepReport step_channel_two_layer(ChannelState& s, const CollisionModel& m, const PhaseGrid& grid);

double total_mass(const SurfaceState& s, const CollisionModel& m, const XGrid& x);
std::vector<double> density_moment(const SurfaceState& s, const CollisionModel& m);
std::vector<double> flux_moment(const SurfaceState& s, const CollisionModel& m, double epsilon = 1.0);

// Largest dt allowed by the transport and force CFL limits (factor cfl).
double kinetic_dt_limit(const CollisionModel& m, const PhaseGrid& grid, double cfl = 0.9);

// Homogenized distribution over (x, e_x, e_z).
struct MesoState {
  int nx = 0, nex = 0, nez = 0;
  std::vector<double> h;

  static MesoState equilibrium(const MesoModel& m, const std::vector<double>& beta);
  std::size_t index(int i, int a, int j) const { return (static_cast<std::size_t>(i) * nex + a) * nez + j; }
  std::span<double> slice(int i) { return {h.data() + index(i, 0, 0), static_cast<std::size_t>(nex) * nez}; }
  std::span<const double> slice(int i) const {
    return {h.data() + index(i, 0, 0), static_cast<std::size_t>(nex) * nez};
  }
};

StepReport step_mesoscopic(MesoState& s, const MesoModel& m, const PhaseGrid& grid);
double total_mass(const MesoState& s, const MesoModel& m, const XGrid& x);
std::vector<double> density_moment(const MesoState& s, const MesoModel& m);
std::vector<double> flux_moment(const MesoState& s, const MesoModel& m, double epsilon = 1.0);

// Unhomogenized tangential model on the oscillating potential U(x) = Uhat(x / delta),
// held constant on each x cell. Per (x cell, e_x cell): omega = int |e| / |v| de over the
// allowed part, Mx the matching exp(-e^2) average, phi = int |e| exp(-e^2) de / Mx over the
// allowed part, so that the equilibrium flux is exact and its balance holds cell by cell.
struct FineModel {
  NormalOrbits z;
  CellGrid ex;
  TangentialPotential U = TangentialPotential::flat();
  XGrid x;
  double delta = 0.0;
  double tau_ms = 1.0;
  std::vector<double> Ux;
  std::vector<double> Uface;           // barrier between cells i and i+1
  std::vector<double> omega, Mx, phi;  // nx * nex
  std::vector<double> pass_right;      // flux weight transmitted from cell i to i+1
  std::vector<double> pass_left;       // flux weight transmitted from cell i to i-1
  std::vector<double> Sx;              // per x cell

  static FineModel build(const NormalPotential& W, const TangentialPotential& U, const CellGrid& ex,
                         const CellGrid& ez, const XGrid& x, double delta, double tau_ms, const QuadratureSpec& q);
  int nex() const { return ex.size(); }
  int nez() const { return z.size(); }
  std::size_t at(int i, int a) const { return static_cast<std::size_t>(i) * nex() + a; }
  TangentialCells cells(int i) const;
};

struct FineTangentialState {
  int nx = 0, nex = 0, nez = 0;
  std::vector<double> h;

  // h = beta(x) l M_z M_x(x) on allowed cells.
  static FineTangentialState equilibrium(const FineModel& m, const std::vector<double>& beta);
  std::size_t index(int i, int a, int j) const { return (static_cast<std::size_t>(i) * nex + a) * nez + j; }
  std::span<double> slice(int i) { return {h.data() + index(i, 0, 0), static_cast<std::size_t>(nex) * nez}; }
  std::span<const double> slice(int i) const {
    return {h.data() + index(i, 0, 0), static_cast<std::size_t>(nex) * nez};
  }
};

StepReport step_fine_tangential(FineTangentialState& s, const FineModel& m, const PhaseGrid& grid);
double total_mass(const FineTangentialState& s, const FineModel& m);
std::vector<double> density_moment(const FineTangentialState& s, const FineModel& m);
std::vector<double> flux_moment(const FineTangentialState& s, const FineModel& m, double epsilon = 1.0);
double fine_dt_limit(const FineModel& m, const PhaseGrid& grid, double cfl = 0.9);

// Micro-macro form of the trapped-only model: g = N E + r with E = l M / gamma and
// r of zero mass stored on cell interfaces. Stable for dt independent of eps.
struct MicroMacroState {
  int nx = 0, nv = 0, ne = 0;
  std::vector<double> N;
  std::vector<double> r;  // interface i sits between cells i and i+1

  static MicroMacroState equilibrium(const CollisionModel& m, const std::vector<double>& N);
};

StepReport step_micro_macro(MicroMacroState& s, const CollisionModel& m, const PhaseGrid& grid);
double micro_macro_dt_limit(const CollisionModel& m, const PhaseGrid& grid, double cfl = 0.9);

}  // namespace surfflow
