#include <surfflow/grid.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace surfflow {

namespace {

void fill_from_positive_edges(CellGrid& g, const std::vector<double>& pos) {
  g.edges.clear();
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) g.edges.push_back(-*it);
  g.edges.push_back(0.0);
  for (double p : pos) g.edges.push_back(p);
  const std::size_t n = g.edges.size() - 1;
  g.centers.resize(n);
  g.widths.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    g.centers[k] = 0.5 * (g.edges[k] + g.edges[k + 1]);
    g.widths[k] = g.edges[k + 1] - g.edges[k];
  }
  // exact antisymmetry of centers
  for (std::size_t k = 0; k < n / 2; ++k) {
    g.centers[k] = -g.centers[n - 1 - k];
    g.widths[k] = g.widths[n - 1 - k];
  }
}

}  // namespace

CellGrid CellGrid::uniform(int n_cells, double cutoff) { return aligned(n_cells, cutoff, 0.0); }

CellGrid CellGrid::aligned(int n_cells, double cutoff, double separatrix) {
  if (n_cells < 2 || n_cells % 2 != 0) throw std::invalid_argument("cell count must be even and >= 2");
  if (!(cutoff > 0.0)) throw std::invalid_argument("grid cutoff must be > 0");
  CellGrid g;
  g.cutoff = cutoff;
  g.separatrix = separatrix;
  const int half = n_cells / 2;
  std::vector<double> pos;
  if (separatrix > 0.0 && separatrix < cutoff && half >= 2) {
    int inner = static_cast<int>(std::lround(half * separatrix / cutoff));
    inner = std::clamp(inner, 1, half - 1);
    for (int k = 1; k <= inner; ++k) pos.push_back(separatrix * k / inner);
    const int outer = half - inner;
    for (int k = 1; k <= outer; ++k) pos.push_back(separatrix + (cutoff - separatrix) * k / outer);
    pos[inner - 1] = separatrix;
  } else {
    for (int k = 1; k <= half; ++k) pos.push_back(cutoff * k / half);
  }
  pos.back() = cutoff;
  fill_from_positive_edges(g, pos);
  return g;
}

bool CellGrid::beyond(int j) const { return std::abs(centers[j]) > separatrix; }

double CellGrid::max_abs() const {
  double m = 0.0;
  for (double c : centers) m = std::max(m, std::abs(c));
  return m;
}

std::vector<double> XGrid::centers() const {
  std::vector<double> c(n);
  for (int i = 0; i < n; ++i) c[i] = center(i);
  return c;
}

}  // namespace surfflow
