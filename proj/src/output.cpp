#include <surfflow/output.hpp>

#include <surfflow/errors.hpp>

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <filesystem>

namespace surfflow {

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(v);
  unsigned char b[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) b[k] = static_cast<unsigned char>(u >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), sizeof b);
}

template <class T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char b[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof b)) throw IOError("phase dump truncated");
  U u = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) u |= static_cast<U>(b[k]) << (8 * k);
  return std::bit_cast<T>(u);
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw IOError("cannot open '" + path + "' for writing");
  return f;
}

}  // namespace

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IOError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_phase_dump(const std::string& path, const PhaseDump& dump) {
  const std::size_t expect = static_cast<std::size_t>(dump.header[0]) * dump.header[1] * dump.header[2];
  if (expect != dump.data.size())
    throw IOError("phase dump '" + path + "': header dims do not match " + std::to_string(dump.data.size()) + " values");
  auto f = open_out(path, std::ios::out | std::ios::binary);
  for (auto h : dump.header) put_le<std::int32_t>(f, h);
  for (double v : dump.data) put_le<double>(f, v);
  if (!f) throw IOError("write failed for '" + path + "'");
}

PhaseDump read_phase_dump(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open '" + path + "'");
  PhaseDump d;
  for (auto& h : d.header) h = get_le<std::int32_t>(f);
  if (d.header[0] < 0 || d.header[1] < 0 || d.header[2] < 0) throw IOError("phase dump '" + path + "': bad header");
  d.data.resize(static_cast<std::size_t>(d.header[0]) * d.header[1] * d.header[2]);
  for (double& v : d.data) v = get_le<double>(f);
  return d;
}

SnapshotWriter::SnapshotWriter(const std::string& directory, const std::string& stem, bool binary)
    : dir_(directory), stem_(stem), binary_(binary) {
  ensure_directory(dir_);
  csv_path_ = (std::filesystem::path(dir_) / (stem_ + ".csv")).string();
  csv_ = open_out(csv_path_);
  csv_ << "t,x,N,Phi\n";
}

void SnapshotWriter::write(double t, const XGrid& x, const std::vector<double>& N, const std::vector<double>& Phi,
                           const std::vector<double>* phase, std::array<int, 3> dims) {
  if (static_cast<int>(N.size()) != x.n || static_cast<int>(Phi.size()) != x.n)
    throw GridMismatch("snapshot moments do not match the x grid");
  for (int i = 0; i < x.n; ++i)
    csv_ << format_double(t) << ',' << format_double(x.center(i)) << ',' << format_double(N[i]) << ','
         << format_double(Phi[i]) << '\n';
  csv_.flush();
  if (!csv_) throw IOError("write failed for '" + csv_path_ + "'");
  if (binary_ && phase) {
    PhaseDump d;
    d.header = {dims[0], dims[1], dims[2], index_};
    d.data = *phase;
    write_phase_dump((std::filesystem::path(dir_) / fmt::format("{}_{:05d}.bin", stem_, index_)).string(), d);
  }
  ++index_;
}

void write_coefficients_csv(const std::string& path, const std::vector<CoefficientRow>& rows) {
  auto f = open_out(path);
  f << "W_m,U_m,tau_ms,gamma,D0n,D0T@T1N1,C0p,C0T,c\n";
  for (const auto& r : rows)
    f << format_double(r.W_m) << ',' << format_double(r.U_m) << ',' << format_double(r.c.tau_ms) << ','
      << format_double(r.c.gamma) << ',' << format_double(r.c.D0n) << ',' << format_double(r.c.D0T) << ','
      << format_double(r.c.C0p) << ',' << format_double(r.c.C0T) << ',' << format_double(r.c.c_exchange) << '\n';
  if (!f) throw IOError("write failed for '" + path + "'");
}

void write_report_csv(const std::string& path, const ConvergenceReport& r) {
  auto f = open_out(path);
  f << r.parameter << ",L1,Linf,mass_drift,pair_order\n";
  for (std::size_t k = 0; k < r.values.size(); ++k)
    f << format_double(r.values[k]) << ',' << format_double(r.L1[k]) << ',' << format_double(r.Linf[k]) << ','
      << format_double(r.mass_drift[k]) << ',' << (k < r.pair_order.size() ? format_double(r.pair_order[k]) : "")
      << '\n';
  if (!f) throw IOError("write failed for '" + path + "'");
}

void write_regime_csv(const std::string& path, const std::vector<RegimeDiagnostics>& r) {
  auto f = open_out(path);
  f << "regime,t,gap,exp_minus_2ct\n";
  for (const auto& d : r)
    for (std::size_t k = 0; k < d.times.size(); ++k)
      f << regime_name(d.regime) << ',' << format_double(d.times[k]) << ',' << format_double(d.gap[k]) << ','
        << format_double(d.gap.front() * std::exp(-2.0 * d.c_exchange * d.times[k])) << '\n';
  if (!f) throw IOError("write failed for '" + path + "'");
}

}  // namespace surfflow
