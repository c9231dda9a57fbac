#include <surfflow/quadrature.hpp>

#include <surfflow/errors.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

namespace surfflow {

namespace {

std::string fmt_sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

}  // namespace

void QuadratureSpec::validate() const {
  if (node_count < 8) throw std::invalid_argument("quadrature node_count must be >= 8");
  if (refinement_factor < 2) throw std::invalid_argument("quadrature refinement_factor must be >= 2");
  if (!(tolerance > 0.0)) throw std::invalid_argument("quadrature tolerance must be > 0");
}

QuadratureSpec QuadratureSpec::refined() const {
  QuadratureSpec r = *this;
  r.node_count = node_count * refinement_factor;
  return r;
}

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;
  if (n < 1) throw std::invalid_argument("Gauss-Legendre size must be positive");

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  auto rule = std::make_unique<GaussRule>();
  rule->nodes.resize(n);
  rule->weights.resize(n);
  for (int k = 0; k < n; ++k) {
    rule->nodes[k] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    rule->weights[k] = 2.0 * v * v;
  }
  // symmetrize to remove eigensolver noise
  for (int k = 0; k < n / 2; ++k) {
    const double x = 0.5 * (rule->nodes[n - 1 - k] - rule->nodes[k]);
    const double w = 0.5 * (rule->weights[n - 1 - k] + rule->weights[k]);
    rule->nodes[k] = -x;
    rule->nodes[n - 1 - k] = x;
    rule->weights[k] = w;
    rule->weights[n - 1 - k] = w;
  }
  if (n % 2 == 1) rule->nodes[n / 2] = 0.0;
  auto& ref = *rule;
  cache.emplace(n, std::move(rule));
  return ref;
}

double integrate_gl(const std::function<double(double)>& f, double a, double b, int n) {
  const auto& r = gauss_legendre(n);
  const double h = 0.5 * (b - a);
  const double m = 0.5 * (a + b);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += r.weights[k] * f(m + h * r.nodes[k]);
  return s * h;
}

void endpoint_rule(double a, double b, bool sing_a, bool sing_b, int n,
                   std::vector<double>& x, std::vector<double>& w,
                   std::vector<double>* da, std::vector<double>* db) {
  const auto& r = gauss_legendre(n);
  x.resize(n);
  w.resize(n);
  if (da) da->resize(n);
  if (db) db->resize(n);
  const double L = b - a;
  for (int k = 0; k < n; ++k) {
    const double t = r.nodes[k];
    if (sing_a && sing_b) {
      const double th = 0.25 * std::numbers::pi * (t + 1.0);
      const double s = std::sin(th);
      const double c = std::cos(th);
      x[k] = a + L * s * s;
      w[k] = r.weights[k] * 0.25 * std::numbers::pi * L * std::sin(2.0 * th);
      if (da) (*da)[k] = L * s * s;
      if (db) (*db)[k] = L * c * c;
    } else if (sing_a || sing_b) {
      const double s = 0.5 * (t + 1.0);
      x[k] = sing_a ? a + L * s * s : b - L * s * s;
      w[k] = r.weights[k] * L * s;
      if (da) (*da)[k] = sing_a ? L * s * s : L - L * s * s;
      if (db) (*db)[k] = sing_a ? L - L * s * s : L * s * s;
    } else {
      x[k] = a + 0.5 * L * (t + 1.0);
      w[k] = r.weights[k] * 0.5 * L;
      if (da) (*da)[k] = 0.5 * L * (t + 1.0);
      if (db) (*db)[k] = 0.5 * L * (1.0 - t);
    }
  }
}

double integrate_endpoint(const std::function<double(double)>& f, double a, double b,
                          bool sing_a, bool sing_b, int n) {
  std::vector<double> x, w;
  endpoint_rule(a, b, sing_a, sing_b, n, x, w);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += w[k] * f(x[k]);
  return s;
}

double refine_checked(const std::function<double(int)>& value, const QuadratureSpec& q,
                      const char* what) {
  q.validate();
  const double coarse = value(q.node_count);
  const double fine = value(q.node_count * q.refinement_factor);
  const double scale = std::max(std::abs(fine), 1e-300);
  if (!std::isfinite(fine) || std::abs(fine - coarse) > q.tolerance * scale) {
    throw QuadratureError(std::string(what) + ": refinement disagreement " +
                          fmt_sci(std::abs(fine - coarse) / scale) + " exceeds tolerance " +
                          fmt_sci(q.tolerance));
  }
  return fine;
}

}  // namespace surfflow
