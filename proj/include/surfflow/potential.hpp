#pragma once

#include <surfflow/quadrature.hpp>

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace surfflow {

inline constexpr double kZFloor = 1e-4;

// Normal wall potential W(z) on (0, 1], single well at z_m with W(z_m) = 0, W(1) = W_m.
class NormalPotential {
 public:
  enum class Kind { Flat, Parabolic, Morse, Table };

  static NormalPotential flat();
  static NormalPotential parabolic(double W_m, double z_m);
  // D (1 - exp(-a (z - z_m)))^2 with D chosen so that W(1) = W_m.
  static NormalPotential morse(double W_m, double z_m, double stiffness, double repulsive_cap = 100.0);
  // Monotone cubic on each branch; the minimum knot (W = 0) defines z_m.
  static NormalPotential table(std::vector<double> z, std::vector<double> W, double repulsive_cap = 100.0);

  double operator()(double z) const;
  Kind kind() const { return kind_; }
  std::string name() const;
  double W_m() const { return W_m_; }
  double z_m() const { return z_m_; }
  double repulsive_cap() const { return cap_; }
  // Bounded repulsive branch closed by a reflecting wall at z = 0.
  bool hard_wall() const { return kind_ == Kind::Flat || kind_ == Kind::Parabolic; }
  double z_lower() const { return hard_wall() ? 0.0 : kZFloor; }
  // W at the lower end of the layer; energies above it reach the wall or are rejected.
  double wall_value() const { return (*this)(z_lower()); }
  // Interior points where W is not smooth (always includes z_m).
  const std::vector<double>& breakpoints() const { return breaks_; }

  // W(zt) - W(zt + dz) without cancellation for the analytic wells; zt and zt + dz
  // on the same branch.
  double drop(double zt, double dz) const;

  // Turning point of the branch through each end, extended analytically past the
  // layer when E exceeds the end value; NaN when there is none.
  double left_anchor(double E) const;
  double right_anchor(double E) const;

  // Root of W(z) = E on the repulsive branch (E <= wall_value()).
  double left_root(double E) const;
  // Root of W(z) = E on the attractive branch (E <= W_m).
  double right_root(double E) const;

 private:
  Kind kind_ = Kind::Flat;
  double W_m_ = 0.0, z_m_ = 0.5, cap_ = 100.0, a_ = 0.0, D_ = 0.0;
  std::vector<double> breaks_;
  std::shared_ptr<const std::function<double(double)>> left_, right_;
  void validate() const;
};

std::pair<double, double> normal_turning_points(const NormalPotential& W, double e_z);
double sigma_z_eval(const NormalPotential& W, double z, double e_z);
double crossing_time_tau_z(const NormalPotential& W, double e_z, const QuadratureSpec& q);
double trap_length_l(const NormalPotential& W, double e_z, const QuadratureSpec& q);

// Integral over the classically allowed z-range of f(z) (e^2 - W)^{-1/2}, split at breakpoints.
double orbit_integral_z(const NormalPotential& W, double e_z,
                        const std::function<double(double)>& f, int n);

// Tangential potential hat-U(y) on the period cell [-1, 1], single well.
class TangentialPotential {
 public:
  enum class Kind { Flat, Harmonic, Cosine, Custom };

  static TangentialPotential flat(double delta = 1.0);
  static TangentialPotential harmonic(double U_m, double delta = 1.0);
  static TangentialPotential cosine(double U_m, double delta = 1.0);
  // Rejects profiles with more than one well per period.
  static TangentialPotential custom(std::function<double(double)> f, double delta = 1.0);

  double operator()(double y) const;  // periodic extension with period 2
  Kind kind() const { return kind_; }
  std::string name() const;
  double U_m() const { return U_m_; }
  double delta() const { return delta_; }
  double y_min() const { return y0_; }
  static constexpr double period() { return 2.0; }

  double left_root(double E) const;
  double right_root(double E) const;
  // Turning point on side -1 / +1, extended past +-1 for unbound harmonic orbits.
  double anchor(double E, int side) const;
  // U(yt) - U(yt + dy) on the period cell, as NormalPotential::drop.
  double drop(double yt, double dy) const;

 private:
  Kind kind_ = Kind::Flat;
  double U_m_ = 0.0, delta_ = 1.0, y0_ = 0.0;
  std::shared_ptr<const std::function<double(double)>> f_;
  double eval_cell(double y) const;
};

std::pair<double, double> tangential_turning_points(const TangentialPotential& U, double e_x);
double sigma_bar_x(const TangentialPotential& U, double e_x, const QuadratureSpec& q);
double mean_tangential_velocity(const TangentialPotential& U, double e_x, const QuadratureSpec& q);
double flight_time_tau_fl(const TangentialPotential& U, double e_x, const QuadratureSpec& q);

// Integral over the allowed y-range of f(y) (e^2 - U)^{-1/2} (unhalved).
double orbit_integral_y(const TangentialPotential& U, double e_x,
                        const std::function<double(double)>& f, int n);

}  // namespace surfflow
