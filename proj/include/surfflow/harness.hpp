#pragma once

#include <surfflow/collision.hpp>
#include <surfflow/grid.hpp>
#include <surfflow/kinetic.hpp>
#include <surfflow/potential.hpp>

#include <functional>
#include <string>
#include <vector>

namespace surfflow {

struct DensityError {
  double L1 = 0.0;
  double Linf = 0.0;
};

// Grid-weighted L1 and max norms of a - b.
DensityError compare_densities(const std::vector<double>& a, const std::vector<double>& b, const XGrid& x);

struct ConvergenceReport {
  std::string parameter;  // "epsilon" or "delta"
  std::vector<double> values;
  std::vector<double> L1, Linf;
  std::vector<double> runtime;     // seconds per run
  std::vector<double> mass_drift;  // relative, largest over both models of the run
  std::vector<double> pair_order;  // log(e_k / e_k+1) / log(p_k / p_k+1)
  double order = 0.0;              // over the full sweep; NaN with fewer than 2 values
  bool monotone = false;
  double required_order = 0.0;  // 0 when only monotonicity is required
  bool pass = false;

  // Fills pair_order, order, monotone and pass from values and L1.
  void finalize();
};

struct DiffusionLimitScenario {
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  double length = 2.0;
  int nx = 128;
  int nv = 32, ne = 32;
  double v_max = 6.0;
  double tau_ms = 1.0;
  double t_final = 0.5;
  // Initial density; default 1 + exp(-(x - L/2)^2 / (2 * 0.2^2)).
  std::function<double(double)> initial;
  double cfl = 0.9;
  // Reference diffusion step as a fraction of dx^2 / D0n.
  double reference_dt_factor = 0.1;
  // Replace the kinetic run by a second diffusion run (harness self-test).
  bool self_test = false;
  QuadratureSpec q;
};

ConvergenceReport run_diffusion_limit_study(const std::vector<double>& epsilons, const DiffusionLimitScenario& sc);

struct HomogenizationScenario {
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  // Tangential profile for a given oscillation scale delta.
  std::function<TangentialPotential(double)> U = [](double d) { return TangentialPotential::harmonic(1.0, d); };
  double length = 1.28;  // multiple of the period 2 delta for every delta
  int cells_per_delta = 16;
  int nex = 16, nez = 16;
  double e_max = 4.0;
  double tau_ms = 1.0;
  double epsilon = 1.0;
  double t_final = 0.5;
  // Initial beta(x); default 1 + 0.5 sin(2 pi x / L).
  std::function<double(double)> initial;
  QuadratureSpec q;
};

ConvergenceReport run_homogenization_study(const std::vector<double>& deltas, const HomogenizationScenario& sc);

struct RegimeDiagnostics {
  Regime regime = Regime::Moderate;
  double epsilon = 0.0;
  double c_exchange = 0.0;
  std::vector<double> N1_initial, N2_initial;
  std::vector<double> times, gap;  // gap = sup |N1 - N2| / N_*
  double sum_error = 0.0;          // largest sup |N1 + N2 - N_ref| over steps
  double final_gap = 0.0;
  double collapse_gap = 0.0;  // gap at t = 5 eps tau_ms
  double ode_error = 0.0;     // largest relative deviation of gap / gap0 from exp(-2ct)
  bool pass = false;
};

struct CouplingScenario {
  NormalPotential W = NormalPotential::parabolic(4.0, 0.5);
  int nx = 8;
  double length = 1.0;
  int nv = 32, ne = 32;
  double v_max = 6.0;
  double tau_ms = 1.0;
  double epsilon = 0.05;
  double n1 = 1.5, n2 = 0.5;  // layer densities
  double modulation = 0.0;    // N_k (1 + m sin(2 pi x / L)) for layer 1, (1 - m sin) for layer 2
  double t_final = 1.0;       // strong runs stop at 5 eps tau_ms
  double cfl = 0.9;
  QuadratureSpec q;
};

std::vector<RegimeDiagnostics> run_coupling_regime_study(const std::vector<Regime>& regimes,
                                                         const CouplingScenario& sc);

}  // namespace surfflow
