#pragma once

// Test-only reference computations. Nothing here calls into the library's
// solvers; each oracle recomputes its quantity by brute force.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Cumulative mass and first moment of a scalar density on a fine uniform
// mesh (midpoint rule), so conditional means of [a, b] come from two lookups.
class MeshMoments {
 public:
  MeshMoments(std::function<double(double)> density, double lo, double hi, std::size_t cells)
      : lo_(lo), h_((hi - lo) / static_cast<double>(cells)), mass_(cells + 1, 0.0),
        first_(cells + 1, 0.0) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double mid = lo + (static_cast<double>(i) + 0.5) * h_;
      const double f = density(mid);
      mass_[i + 1] = mass_[i] + f * h_;
      first_[i + 1] = first_[i] + mid * f * h_;
    }
  }
  // Conditional mean over [a, b]; a and b are snapped to the mesh.
  double centroid(double a, double b) const {
    const std::size_t i = index(a), j = index(b);
    const double m = mass_[j] - mass_[i];
    return m > 0.0 ? (first_[j] - first_[i]) / m : std::numeric_limits<double>::quiet_NaN();
  }
  double lo() const { return lo_; }
  double hi() const { return lo_ + h_ * static_cast<double>(mass_.size() - 1); }

 private:
  std::size_t index(double x) const {
    const double t = std::round((x - lo_) / h_);
    return static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(mass_.size() - 1)));
  }
  double lo_, h_;
  std::vector<double> mass_, first_;
};

struct GridBest {
  std::vector<double> boundaries;
  std::vector<double> actions;
  double residual = std::numeric_limits<double>::infinity();
};

// Exhaustive search over boundary vectors on a grid of the given step for
// K = 2 or 3 bins. Scores each candidate by the largest violation of the
// boundary indifference condition a_i = (u_i + u_{i+1})/2 + b with u_i the
// bin centroids, and returns the best candidate.
inline GridBest grid_search(const std::function<double(double, double)>& centroid, double lo,
                            double hi, double bias, int bins, double step) {
  GridBest best;
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  auto consider = [&](std::vector<double> a) {
    std::vector<double> edges{lo};
    edges.insert(edges.end(), a.begin(), a.end());
    edges.push_back(hi);
    std::vector<double> u;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) u.push_back(centroid(edges[i], edges[i + 1]));
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      r = std::max(r, std::abs(a[i] - (0.5 * (u[i] + u[i + 1]) + bias)));
    if (r < best.residual) best = GridBest{a, u, r};
  };
  if (bins == 2) {
    for (int i = 1; i < count; ++i) consider({lo + i * step});
  } else if (bins == 3) {
    for (int i = 1; i < count; ++i)
      for (int j = i + 1; j < count; ++j) consider({lo + i * step, lo + j * step});
  }
  return best;
}

}  // namespace oracle
