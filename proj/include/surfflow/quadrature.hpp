#pragma once

#include <functional>
#include <vector>

namespace surfflow {

struct QuadratureSpec {
  int node_count = 32;
  int refinement_factor = 2;
  double tolerance = 1e-10;

  void validate() const;
  QuadratureSpec refined() const;
};

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Gauss-Legendre rule by Golub-Welsch; cached per size, thread safe.
const GaussRule& gauss_legendre(int n);

// Integral over [a, b] of a smooth integrand.
double integrate_gl(const std::function<double(double)>& f, double a, double b, int n);

// Integral over [a, b] with optional inverse-square-root endpoint behavior.
// A singular end at a uses a + (b - a) s^2, at b uses b - (b - a) s^2; with both
// ends singular the interval is mapped by a + (b - a) sin^2(theta).
double integrate_endpoint(const std::function<double(double)>& f, double a, double b,
                          bool sing_a, bool sing_b, int n);

// Nodes and weights of integrate_endpoint, for reuse over many integrands.
// Optional da, db receive the node offsets from a and b without cancellation.
void endpoint_rule(double a, double b, bool sing_a, bool sing_b, int n,
                   std::vector<double>& x, std::vector<double>& w,
                   std::vector<double>* da = nullptr, std::vector<double>* db = nullptr);

// Evaluates value(n) and value(n * refinement); throws QuadratureError on disagreement.
double refine_checked(const std::function<double(int)>& value, const QuadratureSpec& q,
                      const char* what);

}  // namespace surfflow
