#pragma once

#include <surfflow/grid.hpp>
#include <surfflow/potential.hpp>
#include <surfflow/quadrature.hpp>

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace surfflow {

double maxwellian(double v_or_e_x, double e_z);

// Cell average of exp(-v^2) over [a, b].
double gaussian_cell_average(double a, double b);
// Signed rms velocity of exp(-v^2) over [a, b] (same sign as the cell center).
double gaussian_cell_rms(double a, double b);

// Symmetric cell-to-cell orbit kernel K_ij = int rho J_i J_j, balanced so that
// sum_j K'_ij m_j = target_i. The redistribution operator is diag(1/target) K'.
struct OrbitKernel {
  Eigen::MatrixXd raw;
  Eigen::MatrixXd balanced;
  Eigen::VectorXd target;
  Eigen::VectorXd balance;  // K' = diag(balance) raw diag(balance)
  Eigen::VectorXd weight;   // equilibrium profile m_j
  Eigen::MatrixXd op;       // diag(1/target) K'
  // Symmetric spectral form of op diag(weight): X = S K' S, S = sqrt(weight/target).
  Eigen::MatrixXd eigvecs;
  Eigen::VectorXd eigvals;
  Eigen::VectorXd sym_scale;  // sqrt(target * weight)
  int balance_iterations = 0;
  double raw_row_defect = 0.0;  // max_i |sum_j raw_ij m_j / target_i - 1|

  int size() const { return static_cast<int>(target.size()); }
};

// Sampled orbit geometry along one direction: nodes, weights and the cell integrals
// J_j(s) = int_cell |e| (e^2 - V(s))^{-1/2} de at each node.
struct OrbitSampling {
  std::vector<double> s, w, rho;
  Eigen::MatrixXd J;  // nodes x cells
};

OrbitSampling sample_normal_orbits(const NormalPotential& W, const CellGrid& e, int n);
OrbitSampling sample_tangential_orbits(const TangentialPotential& U, const CellGrid& ex, int n);

OrbitKernel build_orbit_kernel(const std::function<OrbitSampling(int)>& sampler,
                               const std::vector<double>& target, const std::vector<double>& weight,
                               const QuadratureSpec& q);

// Normal-direction orbit data on an e_z grid. Cell values are cell averages:
// l = <l>, lM = <l exp(-e^2)>, Mz = lM / l; tau is sampled at the cell center.
struct NormalOrbits {
  NormalPotential W = NormalPotential::flat();
  CellGrid e;
  std::vector<double> tau, l, lM, Mz;
  std::vector<char> free;
  OrbitKernel kernel;
  QuadratureSpec q;

  static NormalOrbits build(const NormalPotential& W, const CellGrid& e, const QuadratureSpec& q);
  int size() const { return e.size(); }
};

// Tangential-direction orbit data on an e_x grid. omega is the cell integral of
// 2 |e| sigma_bar, Mx the matching average of exp(-e^2), w the flux-weighted speed.
struct TangentialOrbits {
  TangentialPotential U = TangentialPotential::flat();
  CellGrid e;
  std::vector<double> sigma_bar, w, omega, Mx;
  std::vector<char> unbound;
  OrbitKernel kernel;

  static TangentialOrbits build(const TangentialPotential& U, const CellGrid& e, const QuadratureSpec& q);
  int size() const { return e.size(); }
};

struct GammaTable {
  double gamma = 0.0;             // grid sum of l M dv de
  double gamma_continuum = 0.0;   // quadrature of the same integral
  double gamma_x = 0.0;           // sqrt(pi)
  double gamma_prime = 0.0;       // dT gamma at T = 1 with W fixed (grid sum)
  double tau_ms = 1.0;
  NormalPotential W = NormalPotential::flat();
  std::optional<TangentialPotential> U;

  double gamma_z(double z) const;
  double gamma0(double z) const;
  double gamma1(double y, double z) const;
};

// Continuum int l(e) exp(-e^2) de over the real line, times f(e) if given.
double normal_energy_integral(const NormalPotential& W, const std::function<double(double)>& f, int n,
                              const QuadratureSpec& q, double e_cut = 8.0);

GammaTable build_gamma_table(const NormalPotential& W, const std::optional<TangentialPotential>& U,
                             const CellGrid& v, const NormalOrbits& z, const QuadratureSpec& q,
                             double tau_ms = 1.0);

// Everything the (x, v_x, e_z) solvers need for the relaxation step.
struct CollisionModel {
  NormalOrbits z;
  CellGrid v;
  std::vector<double> Mx;
  std::vector<double> vel;  // transport velocity per v cell
  double Sx = 0.0;
  GammaTable gamma;

  static CollisionModel build(const NormalPotential& W, const CellGrid& v, const CellGrid& e,
                              double tau_ms, const QuadratureSpec& q);
  int nv() const { return v.size(); }
  int ne() const { return z.size(); }
  // (N / gamma) l M on one x-cell, row-major (v, e).
  std::vector<double> equilibrium(double N) const;
  double mass(std::span<const double> slice) const;
};

// Homogenized (e_x, e_z) model data.
struct MesoModel {
  NormalOrbits z;
  TangentialOrbits x;
  double gamma_meso = 0.0;  // sum of l M omega de_z (half the density of h = l M)
  // Transport speed per e_x cell: int 2 |e| exp(-e^2) de / (omega Mx) on unbound cells, 0 on bound.
  std::vector<double> speed;
  double tau_ms = 1.0;

  static MesoModel build(const NormalPotential& W, const TangentialPotential& U, const CellGrid& ex,
                         const CellGrid& ez, double tau_ms, const QuadratureSpec& q);
  int nex() const { return x.size(); }
  int nez() const { return z.size(); }
  std::vector<double> equilibrium(double beta) const;
  double mass(std::span<const double> slice) const;  // 2 sum h omega de_z
};

// Tangential cells seen by the relaxation: mass weight, Maxwellian, and whether the
// cell receives the equilibrium gain.
struct TangentialCells {
  std::vector<double> omega, Mx;
  double Sx = 0.0;
};

TangentialCells velocity_cells(const CollisionModel& m);

// Theta on one x-cell with the given tangential cells; output per e_z cell.
std::vector<double> theta_apply(std::span<const double> g, const TangentialCells& t, const NormalOrbits& z);
std::vector<double> theta_apply(std::span<const double> g, const CollisionModel& m);
// Same operator evaluated z-first at the quadrature nodes (independent summation path).
std::vector<double> theta_apply_reference(std::span<const double> g, const CollisionModel& m);

// (Theta[g] l M - g) / tau_ms, gain rescaled to the mass of g.
std::vector<double> qph_apply(std::span<const double> g, const CollisionModel& m);

struct ImplicitReport {
  int iterations = 0;
  double residual = 0.0;
};

// Solves g = (g* + lambda Theta[g] l M) / (1 + lambda) on one x-cell.
class RelaxationSolver {
 public:
  RelaxationSolver(const NormalOrbits& z, double lambda);
  ImplicitReport solve(std::span<const double> gstar, std::span<double> gout, const TangentialCells& t,
                       bool conservative = true) const;
  double lambda() const { return lambda_; }

 private:
  const NormalOrbits* z_;
  double lambda_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

std::vector<double> collision_implicit_solve(std::span<const double> gstar, double lambda,
                                             const CollisionModel& m);

// Homogenized operator on one x-cell, row-major (e_x, e_z).
std::vector<double> theta_bar_apply(std::span<const double> h, const MesoModel& m);

class MesoRelaxationSolver {
 public:
  MesoRelaxationSolver(const MesoModel& m, double lambda);
  ImplicitReport solve(std::span<const double> hstar, std::span<double> hout) const;

 private:
  const MesoModel* m_;
  double lambda_;
  Eigen::MatrixXd denom_;
};

// Continuum kernel of the redistribution operator and its v'-marginal.
double kernel_khat_eval(const NormalPotential& W, double e_z, double e_zp, const QuadratureSpec& q);
double kernel_k_eval(const NormalPotential& W, double e_z, double v_xp, double e_zp, const QuadratureSpec& q);
// int khat(e_z, e') de' over the real line.
double kernel_khat_row_integral(const NormalPotential& W, double e_z, const QuadratureSpec& q);

}  // namespace surfflow
