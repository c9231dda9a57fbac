#include <surfflow/config.hpp>

#include <surfflow/errors.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace surfflow {

namespace {

constexpr double kBoltzmann = 1.380649e-23;
constexpr double kElectronVolt = 1.602176634e-19;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Typed access to RawConfig that records every violation and every key consumed.
class Reader {
 public:
  Reader(const RawConfig& raw, std::vector<std::string>& errors) : raw_(raw), errors_(errors) {}

  const RawConfig::Entry* find(const std::string& sec, const std::string& key) {
    auto s = raw_.sections.find(sec);
    if (s == raw_.sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert({sec, key});
    return &k->second;
  }

  void fail(const std::string& sec, const std::string& key, const std::string& msg, int line = 0) {
    std::string where = "[" + sec + "] " + key;
    if (line > 0) where += " (line " + std::to_string(line) + ")";
    errors_.push_back(where + ": " + msg);
  }

  bool number(const std::string& sec, const std::string& key, double& out) {
    const auto* e = find(sec, key);
    if (!e) return false;
    double v;
    if (!to_double(e->value, v)) {
      fail(sec, key, "expected a number, got '" + e->value + "'", e->line);
      return false;
    }
    out = v;
    return true;
  }

  bool integer(const std::string& sec, const std::string& key, int& out) {
    const auto* e = find(sec, key);
    if (!e) return false;
    double v;
    if (!to_double(e->value, v) || v != std::floor(v) || std::abs(v) > 1e9) {
      fail(sec, key, "expected an integer, got '" + e->value + "'", e->line);
      return false;
    }
    out = static_cast<int>(v);
    return true;
  }

  bool boolean(const std::string& sec, const std::string& key, bool& out) {
    const auto* e = find(sec, key);
    if (!e) return false;
    const auto v = lower(e->value);
    if (v == "true" || v == "yes" || v == "1" || v == "on") {
      out = true;
    } else if (v == "false" || v == "no" || v == "0" || v == "off") {
      out = false;
    } else {
      fail(sec, key, "expected true or false, got '" + e->value + "'", e->line);
      return false;
    }
    return true;
  }

  bool text(const std::string& sec, const std::string& key, std::string& out) {
    const auto* e = find(sec, key);
    if (!e) return false;
    out = e->value;
    return true;
  }

  bool numbers(const std::string& sec, const std::string& key, std::vector<double>& out) {
    const auto* e = find(sec, key);
    if (!e) return false;
    std::vector<double> v;
    for (const auto& item : split_list(e->value)) {
      double d;
      if (!to_double(item, d)) {
        fail(sec, key, "expected a comma-separated list of numbers, got '" + e->value + "'", e->line);
        return false;
      }
      v.push_back(d);
    }
    out = std::move(v);
    return true;
  }

  int line(const std::string& sec, const std::string& key) const {
    auto s = raw_.sections.find(sec);
    if (s == raw_.sections.end()) return 0;
    auto k = s->second.find(key);
    return k == s->second.end() ? 0 : k->second.line;
  }

  void check(bool ok, const std::string& sec, const std::string& key, const std::string& msg) {
    if (!ok) fail(sec, key, msg, line(sec, key));
  }

  void report_unused(const std::set<std::string>& known_sections) {
    for (const auto& [sec, keys] : raw_.sections) {
      if (!known_sections.count(sec)) {
        errors_.push_back("[" + sec + "]: unknown section");
        continue;
      }
      for (const auto& [key, e] : keys)
        if (!used_.count({sec, key})) fail(sec, key, "unknown key", e.line);
    }
  }

 private:
  const RawConfig& raw_;
  std::vector<std::string>& errors_;
  std::set<std::pair<std::string, std::string>> used_;
};

bool needs_normal(ScenarioKind k) { return k != ScenarioKind::DiffusionIso; }

bool needs_tangential(ScenarioKind k) {
  return k == ScenarioKind::Mesoscopic || k == ScenarioKind::FineTangential || k == ScenarioKind::StudyHomogenization;
}

}  // namespace

ScenarioKind parse_kind(const std::string& s) {
  static const std::map<std::string, ScenarioKind> names{
      {"trapped-kinetic", ScenarioKind::TrappedKinetic},
      {"two-group", ScenarioKind::TwoGroup},
      {"channel", ScenarioKind::Channel},
      {"mesoscopic", ScenarioKind::Mesoscopic},
      {"fine-tangential", ScenarioKind::FineTangential},
      {"diffusion-iso", ScenarioKind::DiffusionIso},
      {"diffusion-noniso", ScenarioKind::DiffusionNoniso},
      {"coupled-diffusion", ScenarioKind::CoupledDiffusion},
      {"coeffs", ScenarioKind::Coeffs},
      {"study-diffusion-limit", ScenarioKind::StudyDiffusionLimit},
      {"study-homogenization", ScenarioKind::StudyHomogenization},
      {"study-coupling", ScenarioKind::StudyCoupling},
  };
  auto it = names.find(lower(trim(s)));
  if (it == names.end()) throw std::invalid_argument("unknown scenario kind '" + s + "'");
  return it->second;
}

std::string kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::TrappedKinetic: return "trapped-kinetic";
    case ScenarioKind::TwoGroup: return "two-group";
    case ScenarioKind::Channel: return "channel";
    case ScenarioKind::Mesoscopic: return "mesoscopic";
    case ScenarioKind::FineTangential: return "fine-tangential";
    case ScenarioKind::DiffusionIso: return "diffusion-iso";
    case ScenarioKind::DiffusionNoniso: return "diffusion-noniso";
    case ScenarioKind::CoupledDiffusion: return "coupled-diffusion";
    case ScenarioKind::Coeffs: return "coeffs";
    case ScenarioKind::StudyDiffusionLimit: return "study-diffusion-limit";
    case ScenarioKind::StudyHomogenization: return "study-homogenization";
    case ScenarioKind::StudyCoupling: return "study-coupling";
  }
  return "?";
}

bool is_kinetic(ScenarioKind k) {
  return k == ScenarioKind::TrappedKinetic || k == ScenarioKind::TwoGroup || k == ScenarioKind::Channel ||
         k == ScenarioKind::Mesoscopic || k == ScenarioKind::FineTangential;
}

RawConfig RawConfig::parse(const std::string& text) {
  RawConfig cfg;
  std::istringstream in(text);
  std::string raw_line, section;
  int n = 0;
  while (std::getline(in, raw_line)) {
    ++n;
    const auto hash = raw_line.find('#');
    const std::string line = trim(hash == std::string::npos ? raw_line : raw_line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ParseError("line " + std::to_string(n) + ": malformed section header '" + line + "'");
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (section.empty() || section.find_first_of(" \t[]=") != std::string::npos)
        throw ParseError("line " + std::to_string(n) + ": malformed section header '" + line + "'");
      if (cfg.sections.count(section))
        throw ParseError("line " + std::to_string(n) + ": section [" + section + "] appears twice");
      cfg.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(n) + ": expected 'key = value', got '" + line + "'");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos)
      throw ParseError("line " + std::to_string(n) + ": invalid key '" + key + "'");
    if (section.empty())
      throw ParseError("line " + std::to_string(n) + ": key '" + key + "' appears before any [section]");
    auto& sec = cfg.sections[section];
    if (sec.count(key))
      throw ParseError("line " + std::to_string(n) + ": key '" + key + "' repeated in [" + section + "] (first on line " +
                       std::to_string(sec[key].line) + ")");
    sec[key] = {value, n};
  }
  return cfg;
}

NormalPotential NormalPotentialSpec::build() const {
  if (kind == "flat") return NormalPotential::flat();
  if (kind == "parabolic") return NormalPotential::parabolic(W_m, z_m);
  if (kind == "morse") return NormalPotential::morse(W_m, z_m, stiffness, repulsive_cap);
  if (kind == "table") return NormalPotential::table(z, W, repulsive_cap);
  throw std::invalid_argument("unknown normal potential kind '" + kind + "'");
}

TangentialPotential TangentialPotentialSpec::build(double delta_override) const {
  const double d = delta_override > 0.0 ? delta_override : delta;
  if (kind == "flat") return TangentialPotential::flat(d);
  if (kind == "harmonic") return TangentialPotential::harmonic(U_m, d);
  if (kind == "cosine") return TangentialPotential::cosine(U_m, d);
  throw std::invalid_argument("unknown tangential potential kind '" + kind + "'");
}

double UnitsSpec::thermal_speed() const { return std::sqrt(2.0 * kBoltzmann * T / mass); }
double UnitsSpec::crossing_time() const { return length / thermal_speed(); }
double UnitsSpec::epsilon() const { return tau_ms / crossing_time(); }
double UnitsSpec::diffusion_time() const { return crossing_time() / epsilon(); }
double UnitsSpec::energy_scale() const {
  if (energy == "J") return 1.0 / (kBoltzmann * T);
  if (energy == "eV") return kElectronVolt / (kBoltzmann * T);
  return 1.0;
}

double ScenarioConfig::initial_density(double x) const {
  const double c = center.value_or(0.5 * length);
  if (profile == "constant") return base;
  if (profile == "sine") return base + amplitude * std::sin(2.0 * std::numbers::pi * x / length);
  const double d = x - c;
  return base + amplitude * std::exp(-d * d / (2.0 * width * width));
}

double ScenarioConfig::layer2_density(double x) const {
  return layer2_base + layer2_amplitude * std::sin(2.0 * std::numbers::pi * x / length);
}

ScenarioConfig parse_config_text(const std::string& text) {
  const RawConfig raw = RawConfig::parse(text);
  std::vector<std::string> errors;
  Reader r(raw, errors);
  ScenarioConfig c;

  std::string kind;
  if (!r.text("scenario", "kind", kind)) {
    errors.push_back("[scenario] kind: missing (one of trapped-kinetic, two-group, channel, mesoscopic, "
                     "fine-tangential, diffusion-iso, diffusion-noniso, coupled-diffusion, coeffs, "
                     "study-diffusion-limit, study-homogenization, study-coupling)");
  } else {
    try {
      c.kind = parse_kind(kind);
    } catch (const std::invalid_argument& e) {
      r.fail("scenario", "kind", e.what(), r.line("scenario", "kind"));
      throw ValidationError(errors.front());
    }
  }

  // potentials
  if (raw.has("potential.normal")) {
    NormalPotentialSpec n;
    r.text("potential.normal", "kind", n.kind);
    n.kind = lower(n.kind);
    r.number("potential.normal", "w_m", n.W_m);
    r.number("potential.normal", "z_m", n.z_m);
    r.number("potential.normal", "stiffness", n.stiffness);
    r.number("potential.normal", "repulsive_cap", n.repulsive_cap);
    r.numbers("potential.normal", "z", n.z);
    r.numbers("potential.normal", "w", n.W);
    const std::set<std::string> kinds{"flat", "parabolic", "morse", "table"};
    r.check(kinds.count(n.kind) > 0, "potential.normal", "kind", "must be flat, parabolic, morse or table");
    if (n.kind == "parabolic" || n.kind == "morse") {
      r.check(n.W_m > 0.0, "potential.normal", "w_m", "W_m must be > 0");
      r.check(n.z_m > 0.0 && n.z_m < 1.0, "potential.normal", "z_m", "z_m must be in (0,1)");
    }
    if (n.kind == "morse") r.check(n.stiffness > 0.0, "potential.normal", "stiffness", "must be > 0");
    if (n.kind == "table")
      r.check(n.z.size() >= 3 && n.z.size() == n.W.size(), "potential.normal", "z",
              "table needs matching z and W lists with at least 3 knots");
    c.normal = n;
  } else if (needs_normal(c.kind)) {
    errors.push_back("[potential.normal]: missing section required by kind " + kind_name(c.kind));
  }
  if (raw.has("potential.tangential")) {
    TangentialPotentialSpec t;
    r.text("potential.tangential", "kind", t.kind);
    t.kind = lower(t.kind);
    r.number("potential.tangential", "u_m", t.U_m);
    r.number("potential.tangential", "delta", t.delta);
    const std::set<std::string> kinds{"flat", "harmonic", "cosine"};
    r.check(kinds.count(t.kind) > 0, "potential.tangential", "kind", "must be flat, harmonic or cosine");
    if (t.kind != "flat") r.check(t.U_m > 0.0, "potential.tangential", "u_m", "U_m must be > 0");
    r.check(t.delta > 0.0, "potential.tangential", "delta", "delta must be > 0");
    c.tangential = t;
  } else if (needs_tangential(c.kind)) {
    errors.push_back("[potential.tangential]: missing section required by kind " + kind_name(c.kind));
  }

  // grid
  r.integer("grid", "nx", c.nx);
  r.number("grid", "length", c.length);
  r.integer("grid", "nv", c.nv);
  r.integer("grid", "ne", c.ne);
  r.integer("grid", "nex", c.nex);
  r.number("grid", "v_max", c.v_max);
  r.number("grid", "cfl", c.cfl);
  r.boolean("grid", "muscl", c.muscl);
  if (const auto* e = r.find("grid", "dt")) {
    double v;
    if (lower(e->value) == "auto") {
      c.dt.reset();
    } else if (to_double(e->value, v)) {
      c.dt = v;
      r.check(v > 0.0, "grid", "dt", "dt must be > 0 or auto");
    } else {
      r.fail("grid", "dt", "expected a number or auto, got '" + e->value + "'", e->line);
    }
  }
  std::string bc = "periodic";
  if (r.text("grid", "boundary", bc)) {
    bc = lower(bc);
    r.check(bc == "periodic" || bc == "reflective", "grid", "boundary", "must be periodic or reflective");
  }
  c.periodic = bc != "reflective";
  r.check(c.nx > 1, "grid", "nx", "nx must be an integer > 1");
  r.check(c.length > 0.0, "grid", "length", "length must be > 0");
  r.check(c.nv > 0 && c.nv % 2 == 0, "grid", "nv", "nv must be a positive even integer");
  r.check(c.ne > 0 && c.ne % 2 == 0, "grid", "ne", "ne must be a positive even integer");
  r.check(c.nex > 0 && c.nex % 2 == 0, "grid", "nex", "nex must be a positive even integer");
  r.check(c.v_max > 0.0, "grid", "v_max", "v_max must be > 0");
  r.check(c.cfl > 0.0 && c.cfl <= 1.0, "grid", "cfl", "cfl must be in (0,1]");

  // physics
  const bool eps_given = r.number("physics", "epsilon", c.epsilon);
  r.number("physics", "tau_ms", c.tau_ms);
  r.number("physics", "epsilon0", c.epsilon0);
  r.number("physics", "t_final", c.t_final);
  std::string regime;
  if (r.text("physics", "regime", regime)) {
    try {
      c.regime = parse_regime(lower(regime));
    } catch (const std::invalid_argument&) {
      r.fail("physics", "regime", "must be strong, moderate or weak", r.line("physics", "regime"));
    }
  }
  if (r.text("physics", "ambient", c.ambient)) {
    c.ambient = lower(c.ambient);
    r.check(c.ambient == "closed" || c.ambient == "maxwellian", "physics", "ambient",
            "must be closed or maxwellian");
  }
  r.number("physics", "ambient_density", c.ambient_density);
  r.number("physics", "temperature", c.temperature);
  r.number("physics", "temperature_amplitude", c.temperature_amplitude);
  r.number("physics", "drift_amplitude", c.drift_amplitude);
  if (r.text("physics", "scheme", c.scheme)) {
    c.scheme = lower(c.scheme);
    r.check(c.scheme == "rk2" || c.scheme == "crank-nicolson", "physics", "scheme",
            "must be rk2 or crank-nicolson");
  }
  r.check(c.epsilon > 0.0 && c.epsilon <= 1.0, "physics", "epsilon", "epsilon must be in (0,1]");
  r.check(c.epsilon0 > 0.0 && c.epsilon0 <= 1.0, "physics", "epsilon0", "epsilon0 must be in (0,1]");
  r.check(c.tau_ms > 0.0, "physics", "tau_ms", "tau_ms must be > 0");
  r.check(c.t_final > 0.0, "physics", "t_final", "t_final must be > 0");
  r.check(c.ambient_density >= 0.0, "physics", "ambient_density", "ambient_density must be >= 0");
  r.check(c.temperature > 0.0, "physics", "temperature", "temperature must be > 0");
  r.check(std::abs(c.temperature_amplitude) < 1.0, "physics", "temperature_amplitude",
          "temperature_amplitude must be in (-1,1)");

  // initial
  if (r.text("initial", "profile", c.profile)) {
    c.profile = lower(c.profile);
    r.check(c.profile == "gaussian" || c.profile == "sine" || c.profile == "constant", "initial", "profile",
            "must be gaussian, sine or constant");
  }
  r.number("initial", "base", c.base);
  r.number("initial", "amplitude", c.amplitude);
  r.number("initial", "width", c.width);
  double center;
  if (r.number("initial", "center", center)) c.center = center;
  r.number("initial", "layer2_base", c.layer2_base);
  r.number("initial", "layer2_amplitude", c.layer2_amplitude);
  r.check(c.width > 0.0, "initial", "width", "width must be > 0");
  r.check(c.base - std::abs(c.amplitude) >= 0.0 || c.profile == "gaussian", "initial", "amplitude",
          "initial density must stay >= 0");
  r.check(c.base >= 0.0, "initial", "base", "base must be >= 0");
  r.check(c.layer2_base - std::abs(c.layer2_amplitude) >= 0.0, "initial", "layer2_amplitude",
          "second-layer density must stay >= 0");

  // sweep
  if (r.numbers("sweep", "epsilons", c.epsilons))
    for (double e : c.epsilons) r.check(e > 0.0 && e <= 1.0, "sweep", "epsilons", "every epsilon must be in (0,1]");
  if (r.numbers("sweep", "deltas", c.deltas))
    for (double d : c.deltas) r.check(d > 0.0, "sweep", "deltas", "every delta must be > 0");
  std::string regimes;
  if (r.text("sweep", "regimes", regimes)) {
    c.regimes.clear();
    for (const auto& item : split_list(regimes)) {
      try {
        c.regimes.push_back(parse_regime(lower(item)));
      } catch (const std::invalid_argument&) {
        r.fail("sweep", "regimes", "unknown regime '" + item + "'", r.line("sweep", "regimes"));
      }
    }
  }
  if (r.numbers("sweep", "w_m", c.W_m_values))
    for (double w : c.W_m_values) r.check(w > 0.0, "sweep", "w_m", "every W_m must be > 0");
  if (c.kind == ScenarioKind::StudyDiffusionLimit)
    r.check(c.epsilons.size() >= 3, "sweep", "epsilons", "the study needs at least 3 values");
  if (c.kind == ScenarioKind::StudyHomogenization)
    r.check(c.deltas.size() >= 3, "sweep", "deltas", "the study needs at least 3 values");

  // output
  r.text("output", "directory", c.directory);
  r.integer("output", "snapshot_every", c.snapshot_every);
  r.boolean("output", "binary", c.binary);
  r.check(c.snapshot_every >= 0, "output", "snapshot_every", "snapshot_every must be >= 0");
  r.check(!c.directory.empty(), "output", "directory", "directory must not be empty");

  // quadrature
  r.integer("quadrature", "nodes", c.quadrature.node_count);
  r.integer("quadrature", "refinement", c.quadrature.refinement_factor);
  r.number("quadrature", "tolerance", c.quadrature.tolerance);
  r.check(c.quadrature.node_count >= 4, "quadrature", "nodes", "nodes must be >= 4");
  r.check(c.quadrature.refinement_factor >= 2, "quadrature", "refinement", "refinement must be >= 2");
  r.check(c.quadrature.tolerance > 0.0, "quadrature", "tolerance", "tolerance must be > 0");

  // units: physical inputs become dimensionless here, once
  if (raw.has("units")) {
    UnitsSpec u;
    bool ok = true;
    for (const auto& [key, slot] : std::vector<std::pair<std::string, double*>>{
             {"t", &u.T}, {"m", &u.mass}, {"l", &u.length}, {"tau_ms", &u.tau_ms}}) {
      if (!r.number("units", key, *slot)) {
        if (!r.find("units", key)) errors.push_back("[units] " + key + ": missing (T, m, L and tau_ms are all required)");
        ok = false;
      } else if (!(*slot > 0.0)) {
        r.fail("units", key, "must be > 0", r.line("units", key));
        ok = false;
      }
    }
    if (r.text("units", "energy", u.energy))
      r.check(u.energy == "kT" || u.energy == "J" || u.energy == "eV", "units", "energy", "must be kT, J or eV");
    if (eps_given) r.fail("physics", "epsilon", "is derived from [units]; remove it", r.line("physics", "epsilon"));
    if (ok) {
      c.epsilon = u.epsilon();
      r.check(c.epsilon > 0.0 && c.epsilon <= 1.0, "units", "tau_ms",
              "derived epsilon = tau_ms v* / L must be in (0,1]");
      c.tau_ms = 1.0;
      c.t_final /= u.diffusion_time();
      c.length /= u.length;
      if (c.dt) *c.dt /= u.diffusion_time();
      if (c.center) *c.center /= u.length;
      c.width /= u.length;
      const double es = u.energy_scale();
      if (c.normal) {
        c.normal->W_m *= es;
        for (double& w : c.normal->W) w *= es;
      }
      if (c.tangential) {
        c.tangential->U_m *= es;
        c.tangential->delta /= u.length;
      }
      for (double& w : c.W_m_values) w *= es;
      for (double& d : c.deltas) d /= u.length;
      c.units = u;
    }
  }

  r.report_unused({"scenario", "potential.normal", "potential.tangential", "grid", "physics", "initial", "sweep",
                   "output", "quadrature", "units"});
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " configuration error(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return c;
}

ScenarioConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace surfflow
