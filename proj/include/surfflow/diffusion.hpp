#pragma once

#include <surfflow/collision.hpp>
#include <surfflow/grid.hpp>
#include <surfflow/potential.hpp>
#include <surfflow/quadrature.hpp>

#include <Eigen/SparseLU>

#include <functional>
#include <memory>
#include <vector>

namespace surfflow {

struct TransportCoefficients {
  double D0n = 0.0;
  double D0T = 0.0;  // at N = 1, T = 1
  double C0p = 0.0;
  double C0T = 0.0;
  double c_exchange = 0.0;
  double gamma = 0.0;
  double tau_ms = 1.0;
};

// (tau_ms / gamma) <<v^2 l M>> by quadrature at temperature T (W held fixed).
double compute_D0n(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q, double T = 1.0);
double compute_D0T(const NormalPotential& W, const GammaTable& gt, double N, double T, const QuadratureSpec& q);
std::pair<double, double> compute_pressure_coeffs(double D0n, double D0T, double N, double T);
// int chi^f |e| M_z de by quadrature (closed form exp(-W_m)).
double exchange_numerator(const NormalPotential& W, const QuadratureSpec& q);
double compute_exchange_c(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q);
TransportCoefficients compute_coefficients(const NormalPotential& W, const GammaTable& gt, const QuadratureSpec& q);

enum class TimeScheme { RK2, CrankNicolson };

// dt N = dx (D dx N + tau_ms U' N) on a periodic or reflecting x grid, in flux form.
// The drift flux -tau_ms U' N is upwinded at each face.
class IsoDiffusion {
 public:
  IsoDiffusion(const XGrid& x, double D0n, double tau_ms, std::vector<double> u_prime = {},
               TimeScheme scheme = TimeScheme::RK2);
  // Largest stable explicit step (0.4 dx^2 / D, drift CFL 0.9).
  double dt_limit() const;
  void step(std::vector<double>& N, double dt) const;
  std::vector<double> face_flux(const std::vector<double>& N) const;  // F at the right face of each cell
  const XGrid& grid() const { return x_; }

 private:
  std::vector<double> rhs(const std::vector<double>& N) const;
  void prepare_implicit(double dt) const;

  XGrid x_;
  double D_, tau_;
  std::vector<double> a_face_;  // drift velocity -tau U' at right faces
  TimeScheme scheme_;
  mutable double cached_dt_ = -1.0;
  mutable std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
  mutable Eigen::SparseMatrix<double> explicit_part_;
};

void step_diffusion_iso(std::vector<double>& N, const IsoDiffusion& solver, double dt);

// dt N = dx (D0n(T) dx N + D0T(N, T) dx T + tau_ms U' N) with a prescribed T(x).
// Face coefficients use the arithmetic-mean T; N in D0T is the upwind cell value.
class NonIsoDiffusion {
 public:
  NonIsoDiffusion(const XGrid& x, const NormalPotential& W, const GammaTable& gt, std::vector<double> T,
                  const QuadratureSpec& q, std::vector<double> u_prime = {});
  double dt_limit() const;
  void step(std::vector<double>& N, double dt) const;
  std::vector<double> face_flux(const std::vector<double>& N) const;
  // Same faces written with p = N T, C0p and C0T.
  std::vector<double> face_flux_pressure(const std::vector<double>& p) const;
  const std::vector<double>& temperature() const { return T_; }

 private:
  std::vector<double> rhs(const std::vector<double>& N) const;

  XGrid x_;
  double tau_;
  std::vector<double> T_, Dn_face_, dT_face_, a_face_;  // dT_face_ = D0T per unit N
};

void step_diffusion_noniso(std::vector<double>& N, const NonIsoDiffusion& solver, double dt);

// Two layers exchanging at rate c: the sum follows the single-layer equation and the
// difference the same equation damped by exp(-2 c dt).
void step_coupled_layers(std::vector<double>& N1, std::vector<double>& N2, const IsoDiffusion& solver,
                         double c_exchange, double dt);

double total_mass(const std::vector<double>& N, const XGrid& x);

// Periodic heat-kernel solution for a Gaussian bump: base + amp exp(-(x-x0)^2 / (2 s^2)).
double periodic_gaussian_solution(double x, double t, double D, double length, double x0, double s, double base,
                                  double amp);

}  // namespace surfflow
