#pragma once

#include <surfflow/kinetic.hpp>
#include <surfflow/potential.hpp>
#include <surfflow/quadrature.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace surfflow {

enum class ScenarioKind {
  TrappedKinetic,
  TwoGroup,
  Channel,
  Mesoscopic,
  FineTangential,
  DiffusionIso,
  DiffusionNoniso,
  CoupledDiffusion,
  Coeffs,
  StudyDiffusionLimit,
  StudyHomogenization,
  StudyCoupling,
};

ScenarioKind parse_kind(const std::string& s);
std::string kind_name(ScenarioKind k);
bool is_kinetic(ScenarioKind k);

// Raw "key = value" entries by section; each value keeps its source line.
struct RawConfig {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;

  static RawConfig parse(const std::string& text);  // throws ParseError
  bool has(const std::string& section) const { return sections.count(section) > 0; }
};

struct NormalPotentialSpec {
  std::string kind = "parabolic";  // flat | parabolic | morse | table
  double W_m = 4.0;
  double z_m = 0.5;
  double stiffness = 6.0;
  double repulsive_cap = 100.0;
  std::vector<double> z, W;  // table knots

  NormalPotential build() const;
};

struct TangentialPotentialSpec {
  std::string kind = "harmonic";  // flat | harmonic | cosine
  double U_m = 1.0;
  double delta = 0.02;

  TangentialPotential build(double delta_override = -1.0) const;
};

// Physical scales; when present, inputs are converted once at parse time.
struct UnitsSpec {
  double T = 0.0;         // K
  double mass = 0.0;      // kg
  double length = 0.0;    // m
  double tau_ms = 0.0;    // s
  std::string energy = "kT";  // kT | J | eV

  double thermal_speed() const;    // v* = sqrt(2 k T / m)
  double crossing_time() const;    // L / v*
  double epsilon() const;          // tau_ms / t_c
  double diffusion_time() const;   // t_c / epsilon
  double energy_scale() const;     // joules per input energy unit divided by k T
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::TrappedKinetic;

  std::optional<NormalPotentialSpec> normal;
  std::optional<TangentialPotentialSpec> tangential;

  // [grid]
  int nx = 64;
  double length = 1.0;
  int nv = 32, ne = 32, nex = 16;
  double v_max = 6.0;
  std::optional<double> dt;  // empty: automatic
  double cfl = 0.9;
  bool periodic = true;
  bool muscl = false;

  // [physics]
  double tau_ms = 1.0;
  double epsilon = 0.1;
  double epsilon0 = 1.0;
  double t_final = 0.1;
  Regime regime = Regime::Moderate;
  std::string ambient = "closed";  // closed | maxwellian
  double ambient_density = 1.0;
  double temperature = 1.0;            // mean T
  double temperature_amplitude = 0.0;  // T = mean (1 + a sin(2 pi x / L))
  double drift_amplitude = 0.0;        // U(x) = A cos(2 pi x / L)
  std::string scheme = "rk2";          // rk2 | crank-nicolson (diffusion-iso)

  // [initial]
  std::string profile = "gaussian";  // gaussian | sine | constant
  double base = 1.0, amplitude = 1.0, width = 0.2;
  std::optional<double> center;
  double layer2_base = 0.5, layer2_amplitude = 0.0;

  // [sweep]
  std::vector<double> epsilons{0.1, 0.05, 0.025};
  std::vector<double> deltas{0.04, 0.02, 0.01};
  std::vector<Regime> regimes{Regime::Strong, Regime::Moderate, Regime::Weak};
  std::vector<double> W_m_values;  // coeffs table rows; empty means the single [potential.normal]

  // [output]
  std::string directory = "out";
  int snapshot_every = 0;  // 0: initial and final only
  bool binary = false;

  QuadratureSpec quadrature;
  std::optional<UnitsSpec> units;

  double initial_density(double x) const;
  double layer2_density(double x) const;
};

// Parses and validates; ValidationError lists every violation.
ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig parse_config(const std::string& path);

}  // namespace surfflow
