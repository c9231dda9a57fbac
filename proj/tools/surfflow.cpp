#include <surfflow/config.hpp>
#include <surfflow/errors.hpp>
#include <surfflow/parallel.hpp>
#include <surfflow/scenario.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

using namespace surfflow;

namespace {

struct Overrides {
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<int> snapshot_every;
};

ScenarioConfig load(const std::string& path, const Overrides& o) {
  auto cfg = parse_config(path);
  if (o.out) cfg.directory = *o.out;
  if (o.snapshot_every) {
    if (*o.snapshot_every < 0) throw ValidationError("--snapshot-every must be >= 0");
    cfg.snapshot_every = *o.snapshot_every;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic, mesoscopic and diffusion models of molecules trapped in a surface layer"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option_function<std::string>("--out", [&](const std::string& v) { o.out = v; }, "Output directory");
  app.add_option_function<int>("--threads", [&](int v) { o.threads = v; }, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option_function<int>("--snapshot-every", [&](int v) { o.snapshot_every = v; },
                               "Snapshot cadence in steps (0: initial and final only)");

  std::string config, study_kind;
  auto* run = app.add_subcommand("run", "Run the scenario described by a config file");
  run->add_option("config", config, "Config file")->required();
  auto* coeffs = app.add_subcommand("coeffs", "Write the transport coefficient table");
  coeffs->add_option("config", config, "Config file")->required();
  auto* study = app.add_subcommand("study", "Run a convergence or regime study");
  study->add_option("kind", study_kind, "diffusion-limit | homogenization | coupling")
      ->required()
      ->check(CLI::IsMember({"diffusion-limit", "homogenization", "coupling"}));
  study->add_option("config", config, "Config file")->required();
  auto* validate = app.add_subcommand("validate", "Parse and validate a config file");
  validate->add_option("config", config, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (o.threads) set_thread_count(*o.threads);
    auto cfg = load(config, o);
    if (*validate) {
      std::cout << config << ": valid " << kind_name(cfg.kind) << " scenario\n";
      return 0;
    }
    if (*coeffs) return run_coefficients(cfg, std::cout);
    if (*study) {
      cfg.kind = parse_kind("study-" + study_kind);
      if (cfg.kind == ScenarioKind::StudyHomogenization && !cfg.tangential)
        throw ValidationError("[potential.tangential]: missing section required by kind study-homogenization");
      if (cfg.kind != ScenarioKind::StudyDiffusionLimit || cfg.normal) return run_scenario(cfg, std::cout);
      throw ValidationError("[potential.normal]: missing section required by kind study-diffusion-limit");
    }
    return run_scenario(cfg, std::cout);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error in " << (config.empty() ? "run" : config) << ": " << e.what() << '\n';
    return 3;
  }
}
