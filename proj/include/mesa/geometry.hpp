#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mesa {

/// A linear array as a subset of an N-element half-wavelength grid.
///
/// `indices` are 1-based sensor positions (strictly increasing); the virtual
/// ULA length N equals the largest index. Immutable after construction and
/// safe to share across threads.
struct ArrayGeometry {
  std::vector<int> indices;
  int aperture_n = 0;  // N = max index
  int m = 0;           // number of sensors

  bool is_ula() const { return m == aperture_n; }
};

/// Uniform linear array {1, ..., n}.
ArrayGeometry ula(int n);

/// Geometry from an arbitrary set of positive sensor positions.
/// Sorts the input; throws std::invalid_argument on duplicates or
/// nonpositive entries.
ArrayGeometry from_indices(std::vector<int> indices);

/// Row-selection matrix: an M x N binary matrix with G(r, indices[r]-1) = 1,
/// so G*y extracts the observed subvector of a length-N grid vector.
Eigen::MatrixXd selection_matrix(const ArrayGeometry& g);

/// Steering matrix, M x K with entry (r, k) = exp(i 2 pi f_k (indices[r]-1)).
/// Frequencies must lie in [-1/2, 1/2); throws std::invalid_argument
/// otherwise.
Eigen::MatrixXcd steering_matrix(const std::vector<double>& freqs,
                                 const ArrayGeometry& g);

/// Certified lower bound on the spark of the steering-vector dictionary:
/// (length of the longest run of consecutive indices) + 1. The exact spark
/// over the frequency continuum is not computable in general; this bound is
/// the one actually used for identifiability checks.
int spark_lower_bound(const ArrayGeometry& g);

/// Wrap a frequency into the canonical interval [-1/2, 1/2).
double wrap_frequency(double f);

/// Wrap-around distance on the unit frequency circle, in [0, 1/2].
double wrap_distance(double a, double b);

}  // namespace mesa
