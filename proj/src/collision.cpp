#include <surfflow/collision.hpp>

#include <surfflow/errors.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace surfflow {

namespace {

const double kSqrtPi = std::sqrt(std::numbers::pi);

double cell_J(double a, double b, double V) {
  const double lo = std::min(std::abs(a), std::abs(b));
  const double hi = std::max(std::abs(a), std::abs(b));
  const double A = hi * hi - V;
  if (A <= 0.0) return 0.0;
  const double B = lo * lo - V;
  return std::sqrt(A) - (B > 0.0 ? std::sqrt(B) : 0.0);
}

std::vector<double> sorted_unique(std::vector<double> p, double lo, double hi) {
  std::vector<double> out{lo};
  std::sort(p.begin(), p.end());
  for (double x : p)
    if (x > out.back() + 1e-14 && x < hi - 1e-14) out.push_back(x);
  out.push_back(hi);
  return out;
}

OrbitSampling sample_on(const std::vector<double>& pts, const CellGrid& e, int n,
                        const std::function<double(double)>& V) {
  OrbitSampling s;
  std::vector<double> x, w;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    endpoint_rule(pts[k], pts[k + 1], true, true, n, x, w);
    s.s.insert(s.s.end(), x.begin(), x.end());
    s.w.insert(s.w.end(), w.begin(), w.end());
  }
  const int ns = static_cast<int>(s.s.size()), ne = e.size();
  s.rho.resize(ns);
  s.J.resize(ns, ne);
  for (int k = 0; k < ns; ++k) {
    const double v = V(s.s[k]);
    s.rho[k] = std::exp(v) / kSqrtPi;
    for (int j = 0; j < ne; ++j) s.J(k, j) = cell_J(e.edges[j], e.edges[j + 1], v);
  }
  return s;
}

Eigen::MatrixXd assemble(const OrbitSampling& s) {
  Eigen::VectorXd wr(s.s.size());
  for (std::size_t k = 0; k < s.s.size(); ++k) wr[k] = s.w[k] * s.rho[k];
  Eigen::MatrixXd K = s.J.transpose() * wr.asDiagonal() * s.J;
  return 0.5 * (K + K.transpose());
}

// Average of f over the positive cell [a, b]; an edge on the separatrix s is mapped.
double cell_average(const std::function<double(double)>& f, double a, double b, double s, int n) {
  const bool sing_a = s > 0.0 && std::abs(a - s) < 1e-14;
  const bool sing_b = s > 0.0 && std::abs(b - s) < 1e-14;
  return integrate_endpoint(f, a, b, sing_a, sing_b, n) / (b - a);
}

constexpr int kCellNodes = 16;

double energy_cut(const NormalPotential& W, double e_cut) {
  return W.hard_wall() ? e_cut : std::min(e_cut, std::sqrt(W.wall_value()));
}

}  // namespace

double maxwellian(double v_or_e_x, double e_z) { return std::exp(-v_or_e_x * v_or_e_x - e_z * e_z); }

double gaussian_cell_average(double a, double b) {
  return 0.5 * kSqrtPi * (std::erf(b) - std::erf(a)) / (b - a);
}

double gaussian_cell_rms(double a, double b) {
  auto m2 = [](double v) { return 0.25 * kSqrtPi * std::erf(v) - 0.5 * v * std::exp(-v * v); };
  const double r = std::sqrt((m2(b) - m2(a)) / (0.5 * kSqrtPi * (std::erf(b) - std::erf(a))));
  return a + b < 0.0 ? -r : r;
}

OrbitSampling sample_normal_orbits(const NormalPotential& W, const CellGrid& e, int n) {
  std::vector<double> p = W.breakpoints();
  for (double a : e.edges) {
    if (a <= 0.0) continue;
    const double E = a * a;
    if (E < W.wall_value() && !(W.hard_wall() && E >= W.W_m())) p.push_back(W.left_root(E));
    if (E < W.W_m()) p.push_back(W.right_root(E));
  }
  return sample_on(sorted_unique(p, W.z_lower(), 1.0), e, n, [&](double z) { return W(z); });
}

OrbitSampling sample_tangential_orbits(const TangentialPotential& U, const CellGrid& ex, int n) {
  std::vector<double> p{U.y_min()};
  for (double a : ex.edges) {
    if (a <= 0.0) continue;
    const double E = a * a;
    if (E < U.U_m()) {
      p.push_back(U.left_root(E));
      p.push_back(U.right_root(E));
    }
  }
  return sample_on(sorted_unique(p, -1.0, 1.0), ex, n, [&](double y) { return U(y); });
}

OrbitKernel build_orbit_kernel(const std::function<OrbitSampling(int)>& sampler,
                               const std::vector<double>& target, const std::vector<double>& weight,
                               const QuadratureSpec& q) {
  q.validate();
  const int n = static_cast<int>(target.size());
  OrbitKernel k;
  k.target = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
  k.weight = Eigen::Map<const Eigen::VectorXd>(weight.data(), n);
  const Eigen::MatrixXd coarse = assemble(sampler(q.node_count));
  k.raw = assemble(sampler(q.node_count * q.refinement_factor));

  double disagreement = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = ((k.raw.row(i) - coarse.row(i)).cwiseAbs() * k.weight).value() / k.target[i];
    disagreement = std::max(disagreement, d);
  }
  if (!(disagreement <= q.tolerance))
    throw QuadratureError("orbit kernel: refinement disagreement " + std::to_string(disagreement) +
                          " exceeds tolerance " + std::to_string(q.tolerance));

  const Eigen::VectorXd r0 = k.raw * k.weight;
  k.raw_row_defect = (r0.array() / k.target.array() - 1.0).abs().maxCoeff();

  // symmetric balancing d_i (K M d)_i = t_i: a few damped fixed-point sweeps, then Newton
  const Eigen::MatrixXd KM = k.raw * k.weight.asDiagonal();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  auto residual = [&](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(x.cwiseProduct(KM * x).cwiseQuotient(k.target).array() - 1.0);
  };
  double defect = residual(d).cwiseAbs().maxCoeff();
  int it = 0;
  for (; it < 20 && defect > 1e-3; ++it) {
    d = d.cwiseQuotient((residual(d).array() + 1.0).sqrt().matrix());
    defect = residual(d).cwiseAbs().maxCoeff();
  }
  for (; it < 200 && defect > 1e-15; ++it) {
    const Eigen::VectorXd r = residual(d);
    Eigen::MatrixXd J = d.asDiagonal() * KM;
    J.diagonal() += KM * d;
    J = k.target.cwiseInverse().asDiagonal() * J;
    Eigen::VectorXd step = J.partialPivLu().solve(r);
    double lam = 1.0;
    while (lam > 1e-4) {
      const Eigen::VectorXd trial = d - lam * step;
      if (trial.minCoeff() > 0.0) {
        const double dt = residual(trial).cwiseAbs().maxCoeff();
        if (dt < defect || lam < 2e-4) {
          d = trial;
          defect = dt;
          break;
        }
      }
      lam *= 0.5;
    }
    if (lam <= 1e-4) break;
  }
  if (defect > 1e-13) throw NonConvergence("orbit kernel balancing stalled at defect " + std::to_string(defect));
  k.balance = d;
  k.balance_iterations = it;
  k.balanced = d.asDiagonal() * k.raw * d.asDiagonal();
  k.op = k.target.cwiseInverse().asDiagonal() * k.balanced;

  const Eigen::VectorXd S = k.weight.cwiseQuotient(k.target).cwiseSqrt();
  Eigen::MatrixXd X = S.asDiagonal() * k.balanced * S.asDiagonal();
  X = 0.5 * (X + X.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
  k.eigvecs = es.eigenvectors();
  k.eigvals = es.eigenvalues();
  k.sym_scale = k.target.cwiseProduct(k.weight).cwiseSqrt();
  return k;
}

NormalOrbits NormalOrbits::build(const NormalPotential& W, const CellGrid& e, const QuadratureSpec& q) {
  const double s = std::sqrt(W.W_m());
  if (s < e.cutoff && std::abs(e.separatrix - s) > 1e-12)
    throw std::invalid_argument("e_z grid is not aligned with the separatrix sqrt(W_m)");
  NormalOrbits o;
  o.W = W;
  o.e = e;
  o.q = q;
  const int n = e.size();
  o.tau.resize(n);
  o.l.resize(n);
  o.lM.resize(n);
  o.Mz.resize(n);
  o.free.resize(n);
  for (int j = 0; j < n / 2; ++j) {
    const int jp = n - 1 - j;
    const double a = e.edges[jp], b = e.edges[jp + 1];
    o.tau[jp] = o.tau[j] = crossing_time_tau_z(W, e.centers[jp], q);
    auto lf = [&](double x) { return trap_length_l(W, x, q); };
    o.l[jp] = o.l[j] = cell_average(lf, a, b, s, kCellNodes);
    o.lM[jp] = o.lM[j] =
        cell_average([&](double x) { return lf(x) * std::exp(-x * x); }, a, b, s, kCellNodes);
  }
  std::vector<double> target(n);
  for (int j = 0; j < n; ++j) {
    o.Mz[j] = o.lM[j] / o.l[j];
    o.free[j] = e.centers[j] * e.centers[j] > W.W_m();
    target[j] = o.l[j] * e.widths[j];
  }
  o.kernel = build_orbit_kernel([&](int m) { return sample_normal_orbits(W, e, m); }, target, o.Mz, q);
  return o;
}

TangentialOrbits TangentialOrbits::build(const TangentialPotential& U, const CellGrid& e, const QuadratureSpec& q) {
  const double s = std::sqrt(U.U_m());
  if (s < e.cutoff && std::abs(e.separatrix - s) > 1e-12)
    throw std::invalid_argument("e_x grid is not aligned with the separatrix sqrt(U_m)");
  TangentialOrbits o;
  o.U = U;
  o.e = e;
  const int n = e.size();
  o.sigma_bar.resize(n);
  o.w.resize(n);
  o.omega.resize(n);
  o.Mx.resize(n);
  o.unbound.resize(n);
  for (int a = n / 2; a < n; ++a) {
    const int am = n - 1 - a;
    const double lo = e.edges[a], hi = e.edges[a + 1], ea = e.centers[a];
    auto wt = [&](double x) { return 2.0 * x * sigma_bar_x(U, x, q); };
    const double om = cell_average(wt, lo, hi, s, kCellNodes) * e.widths[a];
    const double omM = cell_average([&](double x) { return wt(x) * std::exp(-x * x); }, lo, hi, s, kCellNodes) *
                       e.widths[a];
    o.sigma_bar[a] = o.sigma_bar[am] = sigma_bar_x(U, ea, q);
    o.omega[a] = o.omega[am] = om;
    o.Mx[a] = o.Mx[am] = omM / om;
    const bool unb = ea * ea > U.U_m();
    o.unbound[a] = o.unbound[am] = unb;
    o.w[a] = unb ? 2.0 * ea * e.widths[a] / om : 0.0;
    o.w[am] = -o.w[a];
  }
  o.kernel = build_orbit_kernel([&](int m) { return sample_tangential_orbits(U, e, m); }, o.omega, o.Mx, q);
  return o;
}

double GammaTable::gamma_z(double z) const { return kSqrtPi * std::exp(-W(z)); }
double GammaTable::gamma0(double z) const { return std::numbers::pi * std::exp(-W(z)); }
double GammaTable::gamma1(double y, double z) const {
  const double u = U ? (*U)(y) : 0.0;
  return std::numbers::pi * std::exp(-u - W(z));
}

double normal_energy_integral(const NormalPotential& W, const std::function<double(double)>& f, int n,
                              const QuadratureSpec& q, double e_cut) {
  const double cut = energy_cut(W, e_cut);
  const double s = std::min(std::sqrt(W.W_m()), cut);
  auto integrand = [&](double e) {
    return trap_length_l(W, e, q) * std::exp(-e * e) * (f ? f(e) : 1.0);
  };
  auto value = [&](int m) {
    double total = 0.0;
    if (s > 0.0) total += integrate_gl(integrand, 0.0, s, m);
    if (cut > s) total += integrate_endpoint(integrand, s, cut, true, false, m);
    return 2.0 * total;
  };
  return refine_checked(value, QuadratureSpec{n, q.refinement_factor, q.tolerance}, "energy integral");
}

GammaTable build_gamma_table(const NormalPotential& W, const std::optional<TangentialPotential>& U,
                             const CellGrid& v, const NormalOrbits& z, const QuadratureSpec& q, double tau_ms) {
  GammaTable g;
  g.W = W;
  g.U = U;
  g.tau_ms = tau_ms;
  g.gamma_x = kSqrtPi;
  double sx = 0.0, sz = 0.0;
  for (int k = 0; k < v.size(); ++k) sx += gaussian_cell_average(v.edges[k], v.edges[k + 1]) * v.widths[k];
  for (int j = 0; j < z.size(); ++j) sz += z.lM[j] * z.e.widths[j];
  g.gamma = sx * sz;
  const double i0 = normal_energy_integral(W, nullptr, 48, q);
  const double i2 = normal_energy_integral(W, [](double e) { return e * e; }, 48, q);
  g.gamma_continuum = kSqrtPi * i0;
  g.gamma_prime = 0.5 * kSqrtPi * i0 + kSqrtPi * i2;
  return g;
}

CollisionModel CollisionModel::build(const NormalPotential& W, const CellGrid& v, const CellGrid& e,
                                     double tau_ms, const QuadratureSpec& q) {
  if (!(tau_ms > 0.0)) throw std::invalid_argument("tau_ms must be > 0");
  CollisionModel m;
  m.z = NormalOrbits::build(W, e, q);
  m.v = v;
  m.Mx.resize(v.size());
  m.vel.resize(v.size());
  m.Sx = 0.0;
  for (int k = 0; k < v.size(); ++k) {
    m.vel[k] = gaussian_cell_rms(v.edges[k], v.edges[k + 1]);
    m.Mx[k] = gaussian_cell_average(v.edges[k], v.edges[k + 1]);
    m.Sx += m.Mx[k] * v.widths[k];
  }
  m.gamma = build_gamma_table(W, std::nullopt, v, m.z, q, tau_ms);
  return m;
}

std::vector<double> CollisionModel::equilibrium(double N) const {
  const int nv_ = nv(), ne_ = ne();
  std::vector<double> g(static_cast<std::size_t>(nv_) * ne_);
  for (int k = 0; k < nv_; ++k)
    for (int j = 0; j < ne_; ++j) g[k * ne_ + j] = N / gamma.gamma * z.l[j] * Mx[k] * z.Mz[j];
  return g;
}

double CollisionModel::mass(std::span<const double> s) const {
  const int nv_ = nv(), ne_ = ne();
  double m = 0.0;
  for (int k = 0; k < nv_; ++k) {
    double row = 0.0;
    for (int j = 0; j < ne_; ++j) row += s[k * ne_ + j] * z.e.widths[j];
    m += row * v.widths[k];
  }
  return m;
}

MesoModel MesoModel::build(const NormalPotential& W, const TangentialPotential& U, const CellGrid& ex,
                           const CellGrid& ez, double tau_ms, const QuadratureSpec& q) {
  if (!(tau_ms > 0.0)) throw std::invalid_argument("tau_ms must be > 0");
  MesoModel m;
  m.z = NormalOrbits::build(W, ez, q);
  m.x = TangentialOrbits::build(U, ex, q);
  m.tau_ms = tau_ms;
  double s = 0.0;
  for (int a = 0; a < m.nex(); ++a)
    for (int j = 0; j < m.nez(); ++j)
      s += m.z.l[j] * m.x.Mx[a] * m.z.Mz[j] * 0.5 * m.x.omega[a] * ez.widths[j];
  m.gamma_meso = s;
  m.speed.assign(m.nex(), 0.0);
  for (int a = 0; a < m.nex(); ++a) {
    if (!m.x.unbound[a] || !(m.x.omega[a] > 0.0)) continue;
    const double p = std::abs(ex.edges[a]), r = std::abs(ex.edges[a + 1]);
    const double lo = std::min(p, r), hi = std::max(p, r);
    const double flux = -std::exp(-lo * lo) * std::expm1(lo * lo - hi * hi);
    m.speed[a] = (ex.centers[a] > 0.0 ? 1.0 : -1.0) * flux / (m.x.omega[a] * m.x.Mx[a]);
  }
  return m;
}

std::vector<double> MesoModel::equilibrium(double beta) const {
  std::vector<double> h(static_cast<std::size_t>(nex()) * nez());
  for (int a = 0; a < nex(); ++a)
    for (int j = 0; j < nez(); ++j) h[a * nez() + j] = beta * z.l[j] * x.Mx[a] * z.Mz[j];
  return h;
}

double MesoModel::mass(std::span<const double> s) const {
  double m = 0.0;
  for (int a = 0; a < nex(); ++a) {
    double row = 0.0;
    for (int j = 0; j < nez(); ++j) row += s[a * nez() + j] * z.e.widths[j];
    m += row * x.omega[a];
  }
  return m;
}

TangentialCells velocity_cells(const CollisionModel& m) {
  TangentialCells t;
  t.omega = m.v.widths;
  t.Mx = m.Mx;
  t.Sx = m.Sx;
  return t;
}

std::vector<double> theta_apply(std::span<const double> g, const TangentialCells& t, const NormalOrbits& z) {
  const int nt = static_cast<int>(t.omega.size()), ne = z.size();
  Eigen::VectorXd P = Eigen::VectorXd::Zero(ne);
  for (int k = 0; k < nt; ++k) {
    if (t.omega[k] == 0.0) continue;
    for (int j = 0; j < ne; ++j) P[j] += t.omega[k] * g[k * ne + j];
  }
  for (int j = 0; j < ne; ++j) P[j] /= z.l[j] * t.Sx;
  const Eigen::VectorXd th = z.kernel.op * P;
  return {th.data(), th.data() + ne};
}

std::vector<double> theta_apply(std::span<const double> g, const CollisionModel& m) {
  return theta_apply(g, velocity_cells(m), m.z);
}

std::vector<double> theta_apply_reference(std::span<const double> g, const CollisionModel& m) {
  const auto& z = m.z;
  const int ne = z.size(), nv = m.nv();
  const auto s = sample_normal_orbits(z.W, z.e, z.q.node_count * z.q.refinement_factor);
  const int ns = static_cast<int>(s.s.size());
  std::vector<double> P(ne, 0.0);
  for (int j = 0; j < ne; ++j) {
    double acc = 0.0;
    for (int k = 0; k < nv; ++k) acc += g[k * ne + j] * m.v.widths[k];
    P[j] = z.kernel.balance[j] * acc / (z.l[j] * m.Sx);
  }
  std::vector<double> out(ne, 0.0);
  for (int p = 0; p < ns; ++p) {
    double n = 0.0;
    for (int j = 0; j < ne; ++j) n += s.J(p, j) * P[j];
    const double c = s.w[p] * s.rho[p] * n;
    for (int i = 0; i < ne; ++i) out[i] += c * s.J(p, i);
  }
  for (int i = 0; i < ne; ++i) out[i] *= z.kernel.balance[i] / z.kernel.target[i];
  return out;
}

std::vector<double> qph_apply(std::span<const double> g, const CollisionModel& m) {
  const int nv = m.nv(), ne = m.ne();
  const auto th = theta_apply(g, m);
  std::vector<double> gain(g.size());
  for (int k = 0; k < nv; ++k)
    for (int j = 0; j < ne; ++j) gain[k * ne + j] = th[j] * m.z.l[j] * m.Mx[k] * m.z.Mz[j];
  const double mg = m.mass(gain), m0 = m.mass(g);
  const double c = std::abs(mg) > 0.0 ? m0 / mg : 1.0;
  std::vector<double> q(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) q[i] = (c * gain[i] - g[i]) / m.gamma.tau_ms;
  return q;
}

RelaxationSolver::RelaxationSolver(const NormalOrbits& z, double lambda) : z_(&z), lambda_(lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("relaxation lambda must be > 0");
  const int n = z.size();
  const Eigen::Map<const Eigen::VectorXd> Mz(z.Mz.data(), n);
  Eigen::MatrixXd A = (1.0 + lambda) * Eigen::MatrixXd::Identity(n, n) - lambda * z.kernel.op * Mz.asDiagonal();
  lu_.compute(A);
}

ImplicitReport RelaxationSolver::solve(std::span<const double> gstar, std::span<double> gout,
                                       const TangentialCells& t, bool conservative) const {
  const auto& z = *z_;
  const int nt = static_cast<int>(t.omega.size()), ne = z.size();
  const double lam = lambda_, inv = 1.0 / (1.0 + lambda_);
  double scale = 0.0;
  for (double x : gstar) scale = std::max(scale, std::abs(x));
  auto assemble_out = [&](const std::vector<double>& th, double c, std::span<double> out) {
    for (int k = 0; k < nt; ++k) {
      const bool on = t.omega[k] != 0.0;
      for (int j = 0; j < ne; ++j) {
        const double gain = on ? c * th[j] * z.l[j] * t.Mx[k] * z.Mz[j] : 0.0;
        out[k * ne + j] = (gstar[k * ne + j] + lam * gain) * inv;
      }
    }
  };
  auto r = theta_apply(gstar, t, z);
  Eigen::VectorXd th = lu_.solve(Eigen::Map<Eigen::VectorXd>(r.data(), ne));
  std::vector<double> thv(th.data(), th.data() + ne);
  assemble_out(thv, 1.0, gout);

  ImplicitReport rep;
  std::vector<double> next(gout.size());
  for (rep.iterations = 1; rep.iterations <= 200; ++rep.iterations) {
    thv = theta_apply(std::span<const double>(gout.data(), gout.size()), t, z);
    assemble_out(thv, 1.0, next);
    double diff = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) diff = std::max(diff, std::abs(next[i] - gout[i]));
    std::copy(next.begin(), next.end(), gout.begin());
    rep.residual = scale > 0.0 ? diff / scale : diff;
    if (rep.residual <= 1e-12) break;
  }
  if (rep.residual > 1e-12)
    throw NonConvergence("implicit collision solve: residual " + std::to_string(rep.residual) +
                         " after 200 iterations");
  if (conservative) {
    double m0 = 0.0, mg = 0.0, ma = 0.0;
    for (int k = 0; k < nt; ++k) {
      if (t.omega[k] == 0.0) continue;
      for (int j = 0; j < ne; ++j) {
        const double wgt = t.omega[k] * z.e.widths[j];
        m0 += wgt * gstar[k * ne + j];
        const double gain = thv[j] * z.l[j] * t.Mx[k] * z.Mz[j];
        mg += wgt * gain;
        ma += wgt * std::abs(gain);
      }
    }
    if (std::abs(mg) > 1e-12 * ma) assemble_out(thv, m0 / mg, gout);
  }
  return rep;
}

std::vector<double> collision_implicit_solve(std::span<const double> gstar, double lambda, const CollisionModel& m) {
  std::vector<double> out(gstar.size());
  RelaxationSolver(m.z, lambda).solve(gstar, out, velocity_cells(m));
  return out;
}

std::vector<double> theta_bar_apply(std::span<const double> h, const MesoModel& m) {
  const int nx = m.nex(), nz = m.nez();
  Eigen::MatrixXd Phi(nx, nz);
  for (int a = 0; a < nx; ++a)
    for (int j = 0; j < nz; ++j) Phi(a, j) = h[a * nz + j] / m.z.l[j];
  const Eigen::MatrixXd T = m.x.kernel.op * Phi * m.z.kernel.op.transpose();
  std::vector<double> out(static_cast<std::size_t>(nx) * nz);
  for (int a = 0; a < nx; ++a)
    for (int j = 0; j < nz; ++j) out[a * nz + j] = T(a, j);
  return out;
}

MesoRelaxationSolver::MesoRelaxationSolver(const MesoModel& m, double lambda) : m_(&m), lambda_(lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("relaxation lambda must be > 0");
  const auto& mu = m.x.kernel.eigvals;
  const auto& nu = m.z.kernel.eigvals;
  denom_.resize(mu.size(), nu.size());
  for (int a = 0; a < mu.size(); ++a)
    for (int c = 0; c < nu.size(); ++c) denom_(a, c) = (1.0 + lambda) - lambda * mu[a] * nu[c];
}

ImplicitReport MesoRelaxationSolver::solve(std::span<const double> hstar, std::span<double> hout) const {
  const auto& m = *m_;
  const int nx = m.nex(), nz = m.nez();
  const double lam = lambda_, inv = 1.0 / (1.0 + lambda_);
  const auto& Kx = m.x.kernel;
  const auto& Kz = m.z.kernel;
  double scale = 0.0;
  for (double x : hstar) scale = std::max(scale, std::abs(x));

  auto to_mat = [&](const std::vector<double>& v) {
    Eigen::MatrixXd M(nx, nz);
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j < nz; ++j) M(a, j) = v[a * nz + j];
    return M;
  };
  auto assemble_out = [&](const Eigen::MatrixXd& th, double c, std::span<double> out) {
    for (int a = 0; a < nx; ++a)
      for (int j = 0; j < nz; ++j)
        out[a * nz + j] = (hstar[a * nz + j] + lam * c * th(a, j) * m.z.l[j] * m.x.Mx[a] * m.z.Mz[j]) * inv;
  };

  const Eigen::MatrixXd R = to_mat(theta_bar_apply(hstar, m));
  Eigen::MatrixXd Rt = Kx.eigvecs.transpose() * Kx.sym_scale.asDiagonal() * R * Kz.sym_scale.asDiagonal() *
                       Kz.eigvecs;
  Rt = Rt.cwiseQuotient(denom_);
  Eigen::MatrixXd th = Kx.sym_scale.cwiseInverse().asDiagonal() * Kx.eigvecs * Rt * Kz.eigvecs.transpose() *
                       Kz.sym_scale.cwiseInverse().asDiagonal();
  assemble_out(th, 1.0, hout);

  ImplicitReport rep;
  std::vector<double> next(hout.size());
  for (rep.iterations = 1; rep.iterations <= 200; ++rep.iterations) {
    th = to_mat(theta_bar_apply(std::span<const double>(hout.data(), hout.size()), m));
    assemble_out(th, 1.0, next);
    double diff = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) diff = std::max(diff, std::abs(next[i] - hout[i]));
    std::copy(next.begin(), next.end(), hout.begin());
    rep.residual = scale > 0.0 ? diff / scale : diff;
    if (rep.residual <= 1e-12) break;
  }
  if (rep.residual > 1e-12)
    throw NonConvergence("implicit meso collision solve: residual " + std::to_string(rep.residual));
  double m0 = 0.0, mg = 0.0, ma = 0.0;
  for (int a = 0; a < nx; ++a)
    for (int j = 0; j < nz; ++j) {
      const double wgt = m.x.omega[a] * m.z.e.widths[j];
      const double gain = th(a, j) * m.z.l[j] * m.x.Mx[a] * m.z.Mz[j];
      m0 += wgt * hstar[a * nz + j];
      mg += wgt * gain;
      ma += wgt * std::abs(gain);
    }
  if (std::abs(mg) > 1e-12 * ma) assemble_out(th, m0 / mg, hout);
  return rep;
}

double kernel_khat_eval(const NormalPotential& W, double e_z, double e_zp, const QuadratureSpec& q) {
  if (e_z == 0.0) throw DomainError("kernel row at e_z = 0 is not evaluated");
  if (e_zp == 0.0) return 0.0;
  const double E1 = e_z * e_z, E2 = e_zp * e_zp;
  const double Emin = std::min(E1, E2), dE = std::abs(E2 - E1);
  const bool exact = W.kind() != NormalPotential::Kind::Table;
  const int n = 2 * q.node_count * q.refinement_factor;
  const auto& r = gauss_legendre(n);
  // Overlap window is the orbit of the lower energy.
  const auto [lo, hi] = normal_turning_points(W, std::sqrt(Emin));
  if (!(hi > lo)) return 0.0;  // orbit collapsed onto z_m
  const bool turn_lo = Emin < W.wall_value(), turn_hi = Emin < W.W_m();
  auto value = [&](double z, double dmin) {
    if (dmin <= 0.0) return 0.0;
    return std::exp(W(z)) / (std::sqrt(dmin) * std::sqrt(dmin + dE));
  };
  std::vector<double> pts{lo};
  for (double p : W.breakpoints())
    if (p > lo && p < hi) pts.push_back(p);
  pts.push_back(hi);
  const std::size_t last = pts.size() - 2;
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double p = pts[k], qe = pts[k + 1];
    const bool at_lo = k == 0 && turn_lo, at_hi = k == last && turn_hi;
    // Layer edge reached above its potential: 1/sqrt(dmin) peaks there when d0 is small.
    const bool edge_lo = k == 0 && !turn_lo && k != last, edge_hi = k == last && !turn_hi && k != 0;
    if (at_lo || at_hi || edge_lo || edge_hi) {
      // z = zt +- L s^2, s = alpha sinh(u): smooth in u when dE -> 0 or d0 -> 0
      const bool lower = at_lo || edge_lo;
      const double zt = lower ? p : qe, sgn = lower ? 1.0 : -1.0, L = qe - p;
      const double d0 = (at_lo || at_hi) ? 0.0 : Emin - W(zt);
      const double cend = exact ? W.drop(zt, sgn * L) : W(zt) - W(zt + sgn * L);
      if (!(cend > 0.0)) continue;  // window below roundoff
      const double alpha = std::max(std::sqrt((d0 > 0.0 ? d0 : dE) / cend), 1e-150);
      const double U = std::asinh(1.0 / alpha);
      for (int i = 0; i < n; ++i) {
        const double u = 0.5 * U * (r.nodes[i] + 1.0);
        const double sv = alpha * std::sinh(u);
        const double dz = L * sv * sv, z = zt + sgn * dz;
        const double dmin = d0 + (exact ? W.drop(zt, sgn * dz) : W(zt) - W(z));
        s += r.weights[i] * 0.5 * U * 2.0 * L * sv * alpha * std::cosh(u) * value(z, dmin);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        const double z = p + 0.5 * (qe - p) * (r.nodes[i] + 1.0);
        s += r.weights[i] * 0.5 * (qe - p) * value(z, Emin - W(z));
      }
    }
  }
  const double tau = crossing_time_tau_z(W, e_z, q);
  return s * std::abs(e_zp) * std::exp(-E2) / (kSqrtPi * tau);
}

double kernel_k_eval(const NormalPotential& W, double e_z, double v_xp, double e_zp, const QuadratureSpec& q) {
  return kernel_khat_eval(W, e_z, e_zp, q) * std::exp(-v_xp * v_xp) / kSqrtPi;
}

double kernel_khat_row_integral(const NormalPotential& W, double e_z, const QuadratureSpec& q) {
  const double cut = energy_cut(W, 8.0);
  std::vector<double> p{std::abs(e_z)};
  if (W.W_m() > 0.0) p.push_back(std::sqrt(W.W_m()));
  const auto pts = sorted_unique(p, 0.0, cut);
  boost::math::quadrature::tanh_sinh<double> ts;
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    s += ts.integrate([&](double e) { return kernel_khat_eval(W, e_z, e, q); }, pts[k], pts[k + 1], 1e-10);
  }
  return 2.0 * s;
}

}  // namespace surfflow
