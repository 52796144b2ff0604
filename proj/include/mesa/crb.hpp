#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mesa/geometry.hpp"
#include "mesa/signal.hpp"

namespace mesa {

/// Inputs for the stochastic (Gaussian) Cramér-Rao bound. The source
/// covariance is given as diagonal powers plus declared off-diagonal
/// correlations; exactly the declared entries are treated as free parameters.
struct CrbRequest {
  std::vector<double> freqs;
  std::vector<double> powers;
  std::vector<Correlation> correlations;
  double sigma = 0.0;
  ArrayGeometry geometry;
  int snapshots = 1;
};

/// Fisher information over the parameter vector
/// (f_1..f_K, p_1..p_K, {Re P_ij, Im P_ij for declared pairs}, sigma),
/// in the Slepian-Bangs form L tr(R^{-1} dR_a R^{-1} dR_b). Throws
/// std::domain_error when the model covariance is singular.
Eigen::MatrixXd fisher_information(const CrbRequest& req);

struct CrbResult {
  Eigen::VectorXd freq_variances;  // diagonal of the f-block of FIM^{-1}
  double fim_condition = 0.0;
  bool well_conditioned = true;  // false -> pseudo-inverse was used
};

/// Per-frequency variance bounds from the inverse Fisher information, with a
/// pseudo-inverse fallback (flagged, condition number reported) when the FIM
/// is numerically singular.
CrbResult crb_freqs(const CrbRequest& req);

}  // namespace mesa
