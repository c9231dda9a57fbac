#pragma once

#include <vector>

namespace surfflow {

// Symmetric cell grid on [-cutoff, cutoff] with an even cell count, so 0 is an edge.
// A positive separatrix s < cutoff becomes an edge pair at +-s.
struct CellGrid {
  std::vector<double> edges;
  std::vector<double> centers;
  std::vector<double> widths;
  double cutoff = 0.0;
  double separatrix = 0.0;

  static CellGrid uniform(int n_cells, double cutoff);
  static CellGrid aligned(int n_cells, double cutoff, double separatrix);

  int size() const { return static_cast<int>(centers.size()); }
  // |center| beyond the separatrix: free (normal) or unbound (tangential) cell.
  bool beyond(int j) const;
  // Index of the cell holding -center.
  int mirror(int j) const { return size() - 1 - j; }
  double max_abs() const;
};

struct XGrid {
  int n = 0;
  double length = 1.0;
  bool periodic = true;

  double dx() const { return length / n; }
  double center(int i) const { return (i + 0.5) * dx(); }
  std::vector<double> centers() const;
};

}  // namespace surfflow
