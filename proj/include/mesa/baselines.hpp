#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "mesa/geometry.hpp"
#include "mesa/toeplitz.hpp"

namespace mesa {

/// Difference coarray of an array: which covariance lags are observed and by
/// which sensor pairs.
struct CoarrayStructure {
  std::vector<int> differences;  // sorted multiset of nonnegative lags
  int contiguous_half_len = 0;   // largest V with {0, ..., V-1} all observed
  // averaging_map[d] lists the (row, col) entries of R_hat with lag d, for
  // d = 0 .. V-1.
  std::vector<std::vector<std::pair<int, int>>> averaging_map;
};

CoarrayStructure coarray_structure(const ArrayGeometry& g);

/// Averages the sample covariance entries onto the contiguous coarray lags,
/// producing a V x V Hermitian Toeplitz parameterization. Throws
/// degenerate_coarray when V < 2.
ToeplitzParam coarray_covariance(const Eigen::MatrixXcd& r_hat,
                                 const ArrayGeometry& g);

/// Coarray MUSIC baseline: coarray averaging, forward-backward smoothing of
/// the resulting Toeplitz matrix, then root-MUSIC. Frequencies only.
SourceEstimate ss_music(const Eigen::MatrixXcd& r_hat, const ArrayGeometry& g,
                        int k);

/// Plain root-MUSIC on a full-array sample covariance.
std::vector<double> rootmusic_direct(const Eigen::MatrixXcd& r_hat, int k);

}  // namespace mesa
