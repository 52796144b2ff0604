#include "mesa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mesa {

ArrayGeometry ula(int n) {
  if (n < 1) throw std::invalid_argument("ula: n must be >= 1");
  ArrayGeometry g;
  g.indices.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g.indices[static_cast<std::size_t>(i)] = i + 1;
  g.aperture_n = n;
  g.m = n;
  return g;
}

ArrayGeometry from_indices(std::vector<int> indices) {
  if (indices.empty())
    throw std::invalid_argument("from_indices: empty index set");
  std::sort(indices.begin(), indices.end());
  if (indices.front() < 1)
    throw std::invalid_argument("from_indices: indices must be positive");
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
    throw std::invalid_argument("from_indices: duplicate index");
  ArrayGeometry g;
  g.aperture_n = indices.back();
  g.m = static_cast<int>(indices.size());
  g.indices = std::move(indices);
  return g;
}

Eigen::MatrixXd selection_matrix(const ArrayGeometry& g) {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(g.m, g.aperture_n);
  for (int r = 0; r < g.m; ++r)
    gamma(r, g.indices[static_cast<std::size_t>(r)] - 1) = 1.0;
  return gamma;
}

Eigen::MatrixXcd steering_matrix(const std::vector<double>& freqs,
                                 const ArrayGeometry& g) {
  const int k = static_cast<int>(freqs.size());
  Eigen::MatrixXcd a(g.m, k);
  for (int c = 0; c < k; ++c) {
    const double f = freqs[static_cast<std::size_t>(c)];
    if (!(f >= -0.5 && f < 0.5))
      throw std::invalid_argument("steering_matrix: frequency " +
                                  std::to_string(f) +
                                  " outside [-1/2, 1/2)");
    for (int r = 0; r < g.m; ++r) {
      const double pos = g.indices[static_cast<std::size_t>(r)] - 1;
      a(r, c) = std::polar(1.0, 2.0 * std::numbers::pi * f * pos);
    }
  }
  return a;
}

int spark_lower_bound(const ArrayGeometry& g) {
  int best = 1;
  int run = 1;
  for (std::size_t i = 1; i < g.indices.size(); ++i) {
    if (g.indices[i] == g.indices[i - 1] + 1)
      ++run;
    else
      run = 1;
    best = std::max(best, run);
  }
  return best + 1;
}

double wrap_frequency(double f) {
  double w = f - std::floor(f + 0.5);
  // floor rounding can land exactly on +1/2; fold it back.
  if (w >= 0.5) w -= 1.0;
  return w;
}

double wrap_distance(double a, double b) {
  const double d = std::abs(wrap_frequency(a) - wrap_frequency(b));
  return std::min(d, 1.0 - d);
}

}  // namespace mesa
