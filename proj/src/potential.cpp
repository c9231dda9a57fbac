#include <surfflow/potential.hpp>

#include <surfflow/errors.hpp>

#include <cmath>
// pchip in Boost 1.74 calls isnan unqualified
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace surfflow {

namespace {

double solve_monotone(const std::function<double(double)>& f, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) throw RootError("turning point not bracketed on branch");
  boost::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(52);
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

// Integral of f(s) / sqrt(gap(s)) over [a, b], split at interior breakpoints. An end
// with an anchor (turning point of the branch, possibly extended past the end) uses
// s -> anchor +- L s^2, so the gap is evaluated from the exact offset to the anchor.
struct OrbitEnds {
  double a, b;
  double anchor_a, anchor_b;  // NaN when the end carries no turning point
};

template <class Gap>
double piecewise_orbit(const std::function<double(double)>& f, const OrbitEnds& o,
                       const std::vector<double>& breaks, int n, Gap&& gap) {
  std::vector<double> pts{o.a};
  for (double p : breaks)
    if (p > o.a && p < o.b) pts.push_back(p);
  pts.push_back(o.b);
  const bool ha = std::isfinite(o.anchor_a), hb = std::isfinite(o.anchor_b);
  if (pts.size() == 2 && ha && hb) pts.insert(pts.begin() + 1, 0.5 * (o.a + o.b));
  const auto& r = gauss_legendre(n);
  const std::size_t last = pts.size() - 2;
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double p = pts[k], q = pts[k + 1];
    if (k == 0 && ha) {
      const double A = o.anchor_a, L = q - A, s0 = std::sqrt((p - A) / L);
      for (int i = 0; i < n; ++i) {
        const double t = s0 + (1.0 - s0) * 0.5 * (r.nodes[i] + 1.0);
        const double dz = L * t * t, z = A + dz;
        const double d = gap(A, dz, z);
        if (d > 0.0) s += r.weights[i] * 0.5 * (1.0 - s0) * 2.0 * L * t * f(z) / std::sqrt(d);
      }
    } else if (k == last && hb) {
      const double B = o.anchor_b, L = B - p, s0 = std::sqrt((B - q) / L);
      for (int i = 0; i < n; ++i) {
        const double t = s0 + (1.0 - s0) * 0.5 * (r.nodes[i] + 1.0);
        const double dz = L * t * t, z = B - dz;
        const double d = gap(B, -dz, z);
        if (d > 0.0) s += r.weights[i] * 0.5 * (1.0 - s0) * 2.0 * L * t * f(z) / std::sqrt(d);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        const double z = p + 0.5 * (q - p) * (r.nodes[i] + 1.0);
        const double d = gap(std::numeric_limits<double>::quiet_NaN(), 0.0, z);
        if (d > 0.0) s += r.weights[i] * 0.5 * (q - p) * f(z) / std::sqrt(d);
      }
    }
  }
  return s;
}

}  // namespace

NormalPotential NormalPotential::flat() {
  NormalPotential p;
  p.kind_ = Kind::Flat;
  p.W_m_ = 0.0;
  p.z_m_ = 0.5;
  return p;
}

NormalPotential NormalPotential::parabolic(double W_m, double z_m) {
  if (!(W_m > 0.0)) throw std::invalid_argument("W_m must be > 0");
  if (!(z_m > 0.0 && z_m < 1.0)) throw std::invalid_argument("z_m must be in (0,1)");
  NormalPotential p;
  p.kind_ = Kind::Parabolic;
  p.W_m_ = W_m;
  p.z_m_ = z_m;
  p.breaks_ = {z_m};
  p.validate();
  return p;
}

NormalPotential NormalPotential::morse(double W_m, double z_m, double stiffness, double repulsive_cap) {
  if (!(W_m > 0.0)) throw std::invalid_argument("W_m must be > 0");
  if (!(z_m > 0.0 && z_m < 1.0)) throw std::invalid_argument("z_m must be in (0,1)");
  if (!(stiffness > 0.0)) throw std::invalid_argument("Morse stiffness must be > 0");
  NormalPotential p;
  p.kind_ = Kind::Morse;
  p.W_m_ = W_m;
  p.z_m_ = z_m;
  p.a_ = stiffness;
  const double q = 1.0 - std::exp(-stiffness * (1.0 - z_m));
  p.D_ = W_m / (q * q);
  p.cap_ = repulsive_cap;
  p.breaks_ = {z_m};
  p.validate();
  return p;
}

NormalPotential NormalPotential::table(std::vector<double> z, std::vector<double> W, double repulsive_cap) {
  if (z.size() != W.size()) throw std::invalid_argument("potential table: z and W sizes differ");
  for (std::size_t k = 1; k < z.size(); ++k)
    if (!(z[k] > z[k - 1])) throw std::invalid_argument("potential table: z must be strictly ascending");
  if (z.empty() || z.front() > kZFloor || z.front() <= 0.0)
    throw std::invalid_argument("potential table must start in (0, z_floor]");
  if (std::abs(z.back() - 1.0) > 1e-14) throw std::invalid_argument("potential table must end at z = 1");
  const auto im = static_cast<std::size_t>(std::min_element(W.begin(), W.end()) - W.begin());
  if (W[im] != 0.0) throw std::invalid_argument("potential table minimum must be exactly 0");
  if (im < 3 || W.size() - im < 4)
    throw std::invalid_argument("potential table needs at least 4 knots on each branch");
  for (std::size_t k = 0; k < im; ++k)
    if (!(W[k] > W[k + 1])) throw std::invalid_argument("potential table: repulsive branch not strictly decreasing");
  for (std::size_t k = im; k + 1 < W.size(); ++k)
    if (!(W[k + 1] > W[k])) throw std::invalid_argument("potential table: attractive branch not strictly increasing");

  NormalPotential p;
  p.kind_ = Kind::Table;
  p.W_m_ = W.back();
  p.z_m_ = z[im];
  p.cap_ = repulsive_cap;
  std::vector<double> zl(z.begin(), z.begin() + im + 1), wl(W.begin(), W.begin() + im + 1);
  std::vector<double> zr(z.begin() + im, z.end()), wr(W.begin() + im, W.end());
  auto left = std::make_shared<Pchip>(std::move(zl), std::move(wl));
  auto right = std::make_shared<Pchip>(std::move(zr), std::move(wr));
  const double z0 = z.front();
  p.left_ = std::make_shared<const std::function<double(double)>>([left, z0](double x) {
    return (*left)(std::max(x, z0));
  });
  p.right_ = std::make_shared<const std::function<double(double)>>([right](double x) { return (*right)(x); });
  for (std::size_t k = 1; k + 1 < z.size(); ++k) p.breaks_.push_back(z[k]);
  p.validate();
  return p;
}

double NormalPotential::operator()(double z) const {
  switch (kind_) {
    case Kind::Flat:
      return 0.0;
    case Kind::Parabolic: {
      const double u = z < z_m_ ? (z - z_m_) / z_m_ : (z - z_m_) / (1.0 - z_m_);
      return W_m_ * u * u;
    }
    case Kind::Morse: {
      const double u = 1.0 - std::exp(-a_ * (z - z_m_));
      return D_ * u * u;
    }
    case Kind::Table:
      return z < z_m_ ? (*left_)(z) : (*right_)(z);
  }
  return 0.0;
}

std::string NormalPotential::name() const {
  switch (kind_) {
    case Kind::Flat: return "flat";
    case Kind::Parabolic: return "parabolic";
    case Kind::Morse: return "morse";
    case Kind::Table: return "table";
  }
  return "?";
}

void NormalPotential::validate() const {
  const int n = 4000;
  const double lo = z_lower();
  if (std::abs((*this)(z_m_)) > 1e-12) throw std::invalid_argument("W(z_m) must be 0");
  if (std::abs((*this)(1.0) - W_m_) > 1e-12 * std::max(1.0, W_m_))
    throw std::invalid_argument("W(1) must equal W_m");
  double prev = (*this)(lo);
  for (int k = 1; k <= n; ++k) {
    const double z = lo + (1.0 - lo) * k / n;
    const double w = (*this)(z);
    if (w < 0.0) throw std::invalid_argument("W must be nonnegative");
    const bool left = z <= z_m_;
    if (left && !(w < prev)) throw std::invalid_argument("W must decrease strictly on (0, z_m)");
    if (!left && (z - 1.0 / n) >= z_m_ && !(w > prev))
      throw std::invalid_argument("W must increase strictly on (z_m, 1]");
    prev = w;
  }
  if (!hard_wall() && (*this)(kZFloor) < cap_)
    throw DomainError("W(z_floor) = " + std::to_string((*this)(kZFloor)) +
                      " is below repulsive_cap = " + std::to_string(cap_));
}

double NormalPotential::left_root(double E) const {
  if (E <= 0.0) return z_m_;
  switch (kind_) {
    case Kind::Flat:
      return 0.0;
    case Kind::Parabolic:
      return E >= W_m_ ? 0.0 : z_m_ * (1.0 - std::sqrt(E / W_m_));
    default:
      break;
  }
  if (E > wall_value())
    throw DomainError("e_z^2 = " + std::to_string(E) + " reaches below z_floor on the repulsive branch");
  if (kind_ == Kind::Morse) return z_m_ - std::log1p(std::sqrt(E / D_)) / a_;
  return solve_monotone([&](double z) { return (*this)(z) - E; }, kZFloor, z_m_);
}

double NormalPotential::right_root(double E) const {
  if (E <= 0.0) return z_m_;
  if (E >= W_m_) return 1.0;
  switch (kind_) {
    case Kind::Flat:
      return 1.0;
    case Kind::Parabolic:
      return z_m_ + (1.0 - z_m_) * std::sqrt(E / W_m_);
    case Kind::Morse:
      return z_m_ - std::log1p(-std::sqrt(E / D_)) / a_;
    case Kind::Table:
      break;
  }
  return solve_monotone([&](double z) { return (*this)(z) - E; }, z_m_, 1.0);
}

double NormalPotential::left_anchor(double E) const {
  if (E < wall_value()) return left_root(E);
  if (kind_ == Kind::Parabolic) return z_m_ * (1.0 - std::sqrt(E / W_m_));
  return std::numeric_limits<double>::quiet_NaN();
}

double NormalPotential::right_anchor(double E) const {
  if (E < W_m_) return right_root(E);
  switch (kind_) {
    case Kind::Parabolic:
      return z_m_ + (1.0 - z_m_) * std::sqrt(E / W_m_);
    case Kind::Morse:
      if (E < D_) return z_m_ - std::log1p(-std::sqrt(E / D_)) / a_;
      break;
    case Kind::Table: {
      const double h = 1e-6;
      const double slope = (W_m_ - (*this)(1.0 - h)) / h;
      if (slope > 0.0) return 1.0 + (E - W_m_) / slope;
      break;
    }
    case Kind::Flat:
      break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double NormalPotential::drop(double zt, double dz) const {
  const double z = zt + dz;
  switch (kind_) {
    case Kind::Flat:
      return 0.0;
    case Kind::Parabolic: {
      const double h = zt < z_m_ || (zt == z_m_ && z < z_m_) ? z_m_ : 1.0 - z_m_;
      return -W_m_ / (h * h) * dz * (zt + z - 2.0 * z_m_);
    }
    case Kind::Morse: {
      const double pt = std::exp(-a_ * (zt - z_m_));
      const double p = pt * std::exp(-a_ * dz);
      return D_ * pt * std::expm1(-a_ * dz) * (2.0 - p - pt);
    }
    case Kind::Table:
      break;
  }
  return (*this)(zt) - (*this)(z);
}

std::pair<double, double> normal_turning_points(const NormalPotential& W, double e_z) {
  if (!std::isfinite(e_z)) throw DomainError("e_z must be finite");
  const double E = e_z * e_z;
  if (E == 0.0) return {W.z_m(), W.z_m()};
  return {W.left_root(E), W.right_root(E)};
}

double sigma_z_eval(const NormalPotential& W, double z, double e_z) {
  const double d = e_z * e_z - W(z);
  if (!(d > 0.0)) throw DomainError("sigma_z: e_z^2 <= W(z) (classically forbidden)");
  return 1.0 / std::sqrt(d);
}

double orbit_integral_z(const NormalPotential& W, double e_z, const std::function<double(double)>& f,
                        int n) {
  if (e_z == 0.0) throw DomainError("orbit integral at e_z = 0 is not evaluated");
  const auto [zm, zp] = normal_turning_points(W, e_z);
  const double E = e_z * e_z;
  const OrbitEnds o{zm, zp, W.left_anchor(E), W.right_anchor(E)};
  const bool exact = W.kind() != NormalPotential::Kind::Table;
  auto gap = [&](double zt, double dz, double z) {
    return std::isnan(zt) || !exact ? E - W(z) : W.drop(zt, dz);
  };
  return piecewise_orbit(f, o, W.breakpoints(), n, gap);
}

double crossing_time_tau_z(const NormalPotential& W, double e_z, const QuadratureSpec& q) {
  if (e_z == 0.0) throw DomainError("tau_z(0) is not evaluated; use cell-center energies");
  return refine_checked([&](int n) { return orbit_integral_z(W, e_z, [](double) { return 1.0; }, n); },
                        q, "tau_z");
}

double trap_length_l(const NormalPotential& W, double e_z, const QuadratureSpec& q) {
  return std::abs(e_z) * crossing_time_tau_z(W, e_z, q);
}

// ---------------------------------------------------------------------------

TangentialPotential TangentialPotential::flat(double delta) {
  TangentialPotential p;
  p.kind_ = Kind::Flat;
  p.delta_ = delta;
  return p;
}

TangentialPotential TangentialPotential::harmonic(double U_m, double delta) {
  if (!(U_m > 0.0)) throw std::invalid_argument("U_m must be > 0");
  TangentialPotential p;
  p.kind_ = Kind::Harmonic;
  p.U_m_ = U_m;
  p.delta_ = delta;
  return p;
}

TangentialPotential TangentialPotential::cosine(double U_m, double delta) {
  if (!(U_m > 0.0)) throw std::invalid_argument("U_m must be > 0");
  TangentialPotential p;
  p.kind_ = Kind::Cosine;
  p.U_m_ = U_m;
  p.delta_ = delta;
  return p;
}

TangentialPotential TangentialPotential::custom(std::function<double(double)> f, double delta) {
  const int n = 4000;
  std::vector<double> y(n + 1), u(n + 1);
  for (int k = 0; k <= n; ++k) {
    y[k] = -1.0 + 2.0 * k / n;
    u[k] = f(y[k]);
    if (!std::isfinite(u[k])) throw std::invalid_argument("tangential potential must be finite");
  }
  if (std::abs(u.front() - u.back()) > 1e-12 * std::max(1.0, std::abs(u.front())))
    throw std::invalid_argument("tangential potential must satisfy U(-1) = U(1)");
  const auto im = static_cast<std::size_t>(std::min_element(u.begin(), u.end()) - u.begin());
  if (std::abs(u[im]) > 1e-12) throw std::invalid_argument("tangential potential minimum must be 0");
  for (std::size_t k = 0; k < im; ++k)
    if (!(u[k] > u[k + 1])) throw RootError("tangential potential has more than one well per period");
  for (std::size_t k = im; k < static_cast<std::size_t>(n); ++k)
    if (!(u[k + 1] > u[k])) throw RootError("tangential potential has more than one well per period");
  TangentialPotential p;
  p.kind_ = Kind::Custom;
  p.U_m_ = u.front();
  p.delta_ = delta;
  p.f_ = std::make_shared<const std::function<double(double)>>(std::move(f));
  auto g = [&](double x) { return (*p.f_)(x); };
  const double lo = y[im == 0 ? 0 : im - 1], hi = y[std::min<std::size_t>(im + 1, n)];
  // refine the minimum location by golden-section search
  double a = lo, b = hi;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (g(c) < g(d)) b = d; else a = c;
  }
  p.y0_ = 0.5 * (a + b);
  return p;
}

double TangentialPotential::eval_cell(double y) const {
  switch (kind_) {
    case Kind::Flat: return 0.0;
    case Kind::Harmonic: return U_m_ * y * y;
    case Kind::Cosine: return 0.5 * U_m_ * (1.0 - std::cos(std::numbers::pi * y));
    case Kind::Custom: return (*f_)(y);
  }
  return 0.0;
}

double TangentialPotential::operator()(double y) const {
  const double r = y - 2.0 * std::floor((y + 1.0) / 2.0);
  return eval_cell(r);
}

std::string TangentialPotential::name() const {
  switch (kind_) {
    case Kind::Flat: return "flat";
    case Kind::Harmonic: return "harmonic";
    case Kind::Cosine: return "cosine";
    case Kind::Custom: return "custom";
  }
  return "?";
}

double TangentialPotential::left_root(double E) const {
  if (E <= 0.0) return y0_;
  if (E >= U_m_) return -1.0;
  switch (kind_) {
    case Kind::Harmonic: return -std::sqrt(E / U_m_);
    case Kind::Cosine: return -std::acos(1.0 - 2.0 * E / U_m_) / std::numbers::pi;
    default: break;
  }
  return solve_monotone([&](double y) { return eval_cell(y) - E; }, -1.0, y0_);
}

double TangentialPotential::right_root(double E) const {
  if (E <= 0.0) return y0_;
  if (E >= U_m_) return 1.0;
  switch (kind_) {
    case Kind::Harmonic: return std::sqrt(E / U_m_);
    case Kind::Cosine: return std::acos(1.0 - 2.0 * E / U_m_) / std::numbers::pi;
    default: break;
  }
  return solve_monotone([&](double y) { return eval_cell(y) - E; }, y0_, 1.0);
}

double TangentialPotential::anchor(double E, int side) const {
  if (E <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (E < U_m_) return side < 0 ? left_root(E) : right_root(E);
  if (kind_ == Kind::Harmonic) return side * std::sqrt(E / U_m_);
  return std::numeric_limits<double>::quiet_NaN();
}

double TangentialPotential::drop(double yt, double dy) const {
  const double y = yt + dy;
  switch (kind_) {
    case Kind::Flat:
      return 0.0;
    case Kind::Harmonic:
      return -U_m_ * dy * (yt + y);
    case Kind::Cosine:
      return -U_m_ * std::sin(0.5 * std::numbers::pi * (y + yt)) * std::sin(0.5 * std::numbers::pi * dy);
    case Kind::Custom:
      break;
  }
  return eval_cell(yt) - eval_cell(y);
}

std::pair<double, double> tangential_turning_points(const TangentialPotential& U, double e_x) {
  if (!std::isfinite(e_x)) throw DomainError("e_x must be finite");
  const double E = e_x * e_x;
  return {U.left_root(E), U.right_root(E)};
}

double orbit_integral_y(const TangentialPotential& U, double e_x, const std::function<double(double)>& f,
                        int n) {
  if (e_x == 0.0) throw DomainError("orbit integral at e_x = 0 is not evaluated");
  const auto [ym, yp] = tangential_turning_points(U, e_x);
  const double E = e_x * e_x;
  const OrbitEnds o{ym, yp, U.anchor(E, -1), U.anchor(E, 1)};
  auto gap = [&](double yt, double dy, double y) {
    return std::isnan(yt) ? E - U(y) : U.drop(yt, dy);
  };
  return piecewise_orbit(f, o, {U.y_min()}, n, gap);
}

double sigma_bar_x(const TangentialPotential& U, double e_x, const QuadratureSpec& q) {
  if (e_x == 0.0) throw DomainError("sigma_bar_x(0) is not evaluated; use cell-center energies");
  return refine_checked(
      [&](int n) { return 0.5 * orbit_integral_y(U, e_x, [](double) { return 1.0; }, n); }, q,
      "sigma_bar_x");
}

double mean_tangential_velocity(const TangentialPotential& U, double e_x, const QuadratureSpec& q) {
  if (!std::isfinite(e_x)) throw DomainError("e_x must be finite");
  if (std::abs(e_x) <= std::sqrt(U.U_m())) return 0.0;
  const double s = sigma_bar_x(U, e_x, q);
  return (e_x > 0 ? 1.0 : -1.0) / s;
}

double flight_time_tau_fl(const TangentialPotential& U, double e_x, const QuadratureSpec& q) {
  if (std::abs(e_x) <= std::sqrt(U.U_m())) throw DomainError("flight time is defined for unbound e_x only");
  return 2.0 * U.delta() / std::abs(mean_tangential_velocity(U, e_x, q));
}

}  // namespace surfflow
