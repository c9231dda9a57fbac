#pragma once

#include <surfflow/diffusion.hpp>
#include <surfflow/grid.hpp>
#include <surfflow/harness.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace surfflow {

// Shortest text that reads back to the same double (17 significant digits).
std::string format_double(double x);

// Flat phase-space dump: four little-endian int32 (nx, nv, ne, index), then
// little-endian float64 values, row-major (x, v_or_e_x, e_z).
struct PhaseDump {
  std::array<std::int32_t, 4> header{};
  std::vector<double> data;
};

void write_phase_dump(const std::string& path, const PhaseDump& dump);
PhaseDump read_phase_dump(const std::string& path);

// CSV rows t,x,N,Phi with an optional phase dump per snapshot.
class SnapshotWriter {
 public:
  SnapshotWriter(const std::string& directory, const std::string& stem, bool binary);
  void write(double t, const XGrid& x, const std::vector<double>& N, const std::vector<double>& Phi,
             const std::vector<double>* phase = nullptr, std::array<int, 3> dims = {0, 0, 0});
  int count() const { return index_; }
  const std::string& csv_path() const { return csv_path_; }

 private:
  std::string dir_, stem_, csv_path_;
  bool binary_;
  std::ofstream csv_;
  int index_ = 0;
};

struct CoefficientRow {
  double W_m = 0.0, U_m = 0.0;
  TransportCoefficients c;
};

void write_coefficients_csv(const std::string& path, const std::vector<CoefficientRow>& rows);
void write_report_csv(const std::string& path, const ConvergenceReport& r);
void write_regime_csv(const std::string& path, const std::vector<RegimeDiagnostics>& r);

// Creates the directory (and parents) or throws IOError.
void ensure_directory(const std::string& dir);

}  // namespace surfflow
