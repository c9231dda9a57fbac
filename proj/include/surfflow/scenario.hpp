#pragma once

#include <surfflow/config.hpp>
#include <surfflow/output.hpp>

#include <ostream>
#include <vector>

namespace surfflow {

// Runs the configured scenario, writes its artifacts under cfg.directory and a
// summary to out. Returns 0 on success, 1 when a study criterion fails; solver
// errors propagate as exceptions.
int run_scenario(const ScenarioConfig& cfg, std::ostream& out);

// Coefficient table for cfg.normal (one row per [sweep] W_m value when given).
std::vector<CoefficientRow> coefficient_table(const ScenarioConfig& cfg);
int run_coefficients(const ScenarioConfig& cfg, std::ostream& out);

// U'(x) at cell centers for U(x) = A cos(2 pi x / L).
std::vector<double> drift_profile(const ScenarioConfig& cfg);

}  // namespace surfflow
