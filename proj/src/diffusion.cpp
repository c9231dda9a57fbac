#include <surfflow/diffusion.hpp>

#include <surfflow/errors.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <cstdio>
#include <string>
#include <tuple>

namespace surfflow {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

// int v^p exp(-v^2 / T) dv over the real line.
double velocity_moment(int p, double T) {
  const double cut = 8.0 * std::sqrt(T);
  return integrate_gl([&](double v) { return std::pow(v, p) * std::exp(-v * v / T); }, -cut, cut, 96);
}

// int l(e) e^p exp(-e^2 / T) de.
double energy_moment(const NormalPotential& W, int p, double T, const QuadratureSpec& q) {
  auto f = [p, T](double e) { return std::pow(e, p) * std::exp(e * e * (1.0 - 1.0 / T)); };
  return normal_energy_integral(W, f, 48, q, 8.0 * std::sqrt(T));
}

std::vector<double> faces_of(const std::vector<double>& cell, const XGrid& x) {
  std::vector<double> f(x.n, 0.0);
  if (cell.empty()) return f;
  for (int i = 0; i < x.n; ++i) f[i] = 0.5 * (cell[i] + cell[(i + 1) % x.n]);
  return f;
}

// Accumulates -(F_i - F_{i-1}) / dx given right-face fluxes; the last face is a wall when not periodic.
std::vector<double> divergence(const std::vector<double>& F, const XGrid& x) {
  const int n = x.n;
  std::vector<double> d(n);
  const double dx = x.dx();
  for (int i = 0; i < n; ++i) {
    const double right = (!x.periodic && i == n - 1) ? 0.0 : F[i];
    const double left = i > 0 ? F[i - 1] : (x.periodic ? F[n - 1] : 0.0);
    d[i] = -(right - left) / dx;
  }
  return d;
}

void heun(std::vector<double>& N, double dt, const std::function<std::vector<double>(const std::vector<double>&)>& f) {
  const auto k1 = f(N);
  std::vector<double> u(N.size());
  for (std::size_t i = 0; i < N.size(); ++i) u[i] = N[i] + dt * k1[i];
  const auto k2 = f(u);
  for (std::size_t i = 0; i < N.size(); ++i) N[i] += 0.5 * dt * (k1[i] + k2[i]);
}

}  // namespace

double compute_D0n(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const double J0 = energy_moment(W, 0, T, q);
  return gt.tau_ms * velocity_moment(2, T) * J0 / (velocity_moment(0, T) * J0);
}

double compute_D0T(const NormalPotential& W, const GammaTable& gt, double N, double T, const QuadratureSpec& q) {
  if (!(T > 0.0)) throw std::invalid_argument("temperature must be > 0");
  if (!(N >= 0.0)) throw std::invalid_argument("density must be >= 0");
  const double J0 = energy_moment(W, 0, T, q), J2 = energy_moment(W, 2, T, q);
  const double v0 = velocity_moment(0, T), v2 = velocity_moment(2, T), v4 = velocity_moment(4, T);
  const double gamma = v0 * J0;
  const double gamma_prime = (v2 * J0 + v0 * J2) / (T * T);
  const double A = (v4 * J0 + v2 * J2) / (T * T);
  const double B = v2 * J0;
  return gt.tau_ms / gamma * (A - gamma_prime / gamma * B) * N;
}

std::pair<double, double> compute_pressure_coeffs(double D0n, double D0T, double N, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("temperature must be > 0");
  return {D0n / T, D0T - N / T * D0n};
}

double exchange_numerator(const NormalPotential& W, const QuadratureSpec& q) {
  const double s = std::sqrt(W.W_m());
  const double cut = W.hard_wall() ? 8.0 : std::min(8.0, std::sqrt(W.wall_value()));
  if (!(cut > s)) return 0.0;
  auto value = [&](int n) { return 2.0 * integrate_gl([](double e) { return e * std::exp(-e * e); }, s, cut, n); };
  return refine_checked(value, q, "exchange numerator");
}

double compute_exchange_c(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q) {
  (void)gt;
  if (!(W.W_m() > 0.0)) throw std::invalid_argument("exchange coefficient needs W_m > 0");
  return exchange_numerator(W, q) / normal_energy_integral(W, nullptr, 48, q);
}

TransportCoefficients compute_coefficients(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q) {
  TransportCoefficients c;
  c.gamma = gt.gamma;
  c.tau_ms = gt.tau_ms;
  c.D0n = compute_D0n(W, gt, q);
  c.D0T = compute_D0T(W, gt, 1.0, 1.0, q);
  std::tie(c.C0p, c.C0T) = compute_pressure_coeffs(c.D0n, c.D0T, 1.0, 1.0);
  c.c_exchange = W.W_m() > 0.0 ? compute_exchange_c(W, gt, q) : 0.0;
  return c;
}

// ---------------------------------------------------------------- isothermal

IsoDiffusion::IsoDiffusion(const XGrid& x, double D0n, double tau_ms, std::vector<double> u_prime,
                           TimeScheme scheme)
    : x_(x), D_(D0n), tau_(tau_ms), scheme_(scheme) {
  if (!(x.n > 1)) throw std::invalid_argument("diffusion grid needs at least 2 cells");
  if (!(D0n > 0.0)) throw std::invalid_argument("D0n must be > 0");
  if (!u_prime.empty() && static_cast<int>(u_prime.size()) != x.n)
    throw GridMismatch("u_prime has " + std::to_string(u_prime.size()) + " entries, x grid has " +
                       std::to_string(x.n));
  a_face_ = faces_of(u_prime, x);
  for (double& a : a_face_) a *= -tau_;
}

double IsoDiffusion::dt_limit() const {
  const double dx = x_.dx();
  double lim = 0.4 * dx * dx / D_;
  double amax = 0.0;
  for (double a : a_face_) amax = std::max(amax, std::abs(a));
  if (amax > 0.0) lim = std::min(lim, 0.9 * dx / amax);
  return lim;
}

std::vector<double> IsoDiffusion::face_flux(const std::vector<double>& N) const {
  const int n = x_.n;
  const double dx = x_.dx();
  std::vector<double> F(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!x_.periodic && i == n - 1) continue;
    const int ip = (i + 1) % n;
    const double a = a_face_[i];
    F[i] = -D_ * (N[ip] - N[i]) / dx + a * (a > 0.0 ? N[i] : N[ip]);
  }
  return F;
}

std::vector<double> IsoDiffusion::rhs(const std::vector<double>& N) const { return divergence(face_flux(N), x_); }

void IsoDiffusion::prepare_implicit(double dt) const {
  if (lu_ && cached_dt_ == dt) return;
  const int n = x_.n;
  const double dx = x_.dx();
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    if (!x_.periodic && i == n - 1) continue;
    const int ip = (i + 1) % n;
    const double a = a_face_[i];
    const double ci = (D_ / dx + (a > 0.0 ? a : 0.0)) / dx;
    const double cp = (-D_ / dx + (a < 0.0 ? a : 0.0)) / dx;
    t.emplace_back(i, i, -ci);
    t.emplace_back(i, ip, -cp);
    t.emplace_back(ip, i, ci);
    t.emplace_back(ip, ip, cp);
  }
  Eigen::SparseMatrix<double> L(n, n), I(n, n);
  L.setFromTriplets(t.begin(), t.end());
  I.setIdentity();
  Eigen::SparseMatrix<double> A = I - 0.5 * dt * L;
  explicit_part_ = I + 0.5 * dt * L;
  lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
  lu_->compute(A);
  if (lu_->info() != Eigen::Success) throw StabilityError("Crank-Nicolson factorization failed");
  cached_dt_ = dt;
}

void IsoDiffusion::step(std::vector<double>& N, double dt) const {
  if (static_cast<int>(N.size()) != x_.n) throw GridMismatch("density size does not match the diffusion grid");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (scheme_ == TimeScheme::RK2) {
    const double lim = dt_limit();
    if (dt > lim * (1.0 + 1e-12))
      throw StabilityError("explicit diffusion step: dt " + num(dt) + " exceeds limit " + num(lim));
    heun(N, dt, [&](const std::vector<double>& u) { return rhs(u); });
    return;
  }
  prepare_implicit(dt);
  const Eigen::Map<Eigen::VectorXd> v(N.data(), x_.n);
  const Eigen::VectorXd b = explicit_part_ * v;
  const Eigen::VectorXd sol = lu_->solve(b);
  std::copy(sol.data(), sol.data() + x_.n, N.begin());
}

void step_diffusion_iso(std::vector<double>& N, const IsoDiffusion& solver, double dt) { solver.step(N, dt); }

// ---------------------------------------------------------------- non-isothermal

NonIsoDiffusion::NonIsoDiffusion(const XGrid& x, const NormalPotential& W, const GammaTable& gt,
                                 std::vector<double> T, const QuadratureSpec& q, std::vector<double> u_prime)
    : x_(x), tau_(gt.tau_ms), T_(std::move(T)) {
  if (static_cast<int>(T_.size()) != x.n) throw GridMismatch("temperature field does not match the x grid");
  for (double t : T_)
    if (!(t > 0.0)) throw std::invalid_argument("temperature must be > 0 everywhere");
  if (!u_prime.empty() && static_cast<int>(u_prime.size()) != x.n)
    throw GridMismatch("u_prime does not match the x grid");
  const auto Tf = faces_of(T_, x);
  std::map<double, std::pair<double, double>> cache;
  Dn_face_.resize(x.n);
  dT_face_.resize(x.n);
  for (int i = 0; i < x.n; ++i) {
    auto it = cache.find(Tf[i]);
    if (it == cache.end())
      it = cache.emplace(Tf[i], std::pair{compute_D0n(W, gt, q, Tf[i]), compute_D0T(W, gt, 1.0, Tf[i], q)}).first;
    Dn_face_[i] = it->second.first;
    dT_face_[i] = it->second.second;
  }
  a_face_ = faces_of(u_prime, x);
  for (double& a : a_face_) a *= -tau_;
}

std::vector<double> NonIsoDiffusion::face_flux(const std::vector<double>& N) const {
  const int n = x_.n;
  const double dx = x_.dx();
  std::vector<double> F(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!x_.periodic && i == n - 1) continue;
    const int ip = (i + 1) % n;
    const double a = a_face_[i];
    const double b = -dT_face_[i] * (T_[ip] - T_[i]) / dx;  // thermal drift per unit N
    F[i] = -Dn_face_[i] * (N[ip] - N[i]) / dx + a * (a > 0.0 ? N[i] : N[ip]) + b * (b > 0.0 ? N[i] : N[ip]);
  }
  return F;
}

std::vector<double> NonIsoDiffusion::face_flux_pressure(const std::vector<double>& p) const {
  const int n = x_.n;
  const double dx = x_.dx();
  std::vector<double> F(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!x_.periodic && i == n - 1) continue;
    const int ip = (i + 1) % n;
    const double Tm = 0.5 * (T_[i] + T_[ip]);
    const double Nm = 0.5 * (p[i] / T_[i] + p[ip] / T_[ip]);
    const double b = -dT_face_[i] * (T_[ip] - T_[i]) / dx;
    const double Nup = b > 0.0 ? p[i] / T_[i] : p[ip] / T_[ip];
    const auto [C0p, C0T] = compute_pressure_coeffs(Dn_face_[i], dT_face_[i] * Nup, Nm, Tm);
    F[i] = -C0p * (p[ip] - p[i]) / dx - C0T * (T_[ip] - T_[i]) / dx;
  }
  return F;
}

double NonIsoDiffusion::dt_limit() const {
  const double dx = x_.dx();
  double dmax = 0.0, vmax = 0.0;
  for (int i = 0; i < x_.n; ++i) {
    dmax = std::max(dmax, Dn_face_[i]);
    const int ip = (i + 1) % x_.n;
    vmax = std::max(vmax, std::abs(a_face_[i]) + std::abs(dT_face_[i] * (T_[ip] - T_[i]) / dx));
  }
  double lim = 0.4 * dx * dx / dmax;
  if (vmax > 0.0) lim = std::min(lim, 0.9 * dx / vmax);
  return lim;
}

std::vector<double> NonIsoDiffusion::rhs(const std::vector<double>& N) const {
  return divergence(face_flux(N), x_);
}

void NonIsoDiffusion::step(std::vector<double>& N, double dt) const {
  if (static_cast<int>(N.size()) != x_.n) throw GridMismatch("density size does not match the diffusion grid");
  const double lim = dt_limit();
  if (!(dt > 0.0) || dt > lim * (1.0 + 1e-12))
    throw StabilityError("non-isothermal diffusion step: dt " + num(dt) + " exceeds limit " + num(lim));
  heun(N, dt, [&](const std::vector<double>& u) { return rhs(u); });
}

void step_diffusion_noniso(std::vector<double>& N, const NonIsoDiffusion& solver, double dt) {
  solver.step(N, dt);
}

void step_coupled_layers(std::vector<double>& N1, std::vector<double>& N2, const IsoDiffusion& solver,
                         double c_exchange, double dt) {
  if (N1.size() != N2.size()) throw GridMismatch("layer densities differ in size");
  if (!(c_exchange >= 0.0)) throw std::invalid_argument("exchange coefficient must be >= 0");
  const std::size_t n = N1.size();
  std::vector<double> S(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    S[i] = N1[i] + N2[i];
    d[i] = N1[i] - N2[i];
  }
  solver.step(S, dt);
  solver.step(d, dt);
  const double decay = std::exp(-2.0 * c_exchange * dt);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] *= decay;
    N1[i] = 0.5 * (S[i] + d[i]);
    N2[i] = 0.5 * (S[i] - d[i]);
  }
}

double total_mass(const std::vector<double>& N, const XGrid& x) {
  double t = 0.0;
  for (double v : N) t += v;
  return t * x.dx();
}

double periodic_gaussian_solution(double x, double t, double D, double length, double x0, double s, double base,
                                  double amp) {
  const double var = s * s + 2.0 * D * t;
  double acc = 0.0;
  for (int k = -20; k <= 20; ++k) {
    const double d = x - x0 - k * length;
    acc += std::exp(-d * d / (2.0 * var));
  }
  return base + amp * std::sqrt(s * s / var) * acc;
}

}  // namespace surfflow
