#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mesa/geometry.hpp"
#include "mesa/toeplitz.hpp"

namespace mesa {

struct SolverConfig {
  int k = 1;                  // source count
  double mu = 1.0;            // ADMM penalty
  double mm_tol = 1e-5;       // relative NLL change threshold
  int mm_max_iters = 20;
  double admm_abs_tol = 1e-4;
  double admm_rel_tol = 1e-5;
  int admm_max_iters = 1000;
  double init_eig_ratio_threshold = 5.0;
  bool single_mm_iteration = false;  // MESA-1
  bool adapt_mu = false;             // residual-balancing penalty adaptation
};

/// All ADMM variables. `q` and `lambda` are (c+N) x (c+N) Hermitian with the
/// partition [[*1, *2^H], [*2, *3]] where the top-left block is c x c and c
/// is the column count of the data factor.
struct SolverState {
  ToeplitzParam t;
  Eigen::MatrixXcd x;       // c x c
  Eigen::MatrixXcd z;       // N x c
  Eigen::MatrixXcd q;       // (c+N) x (c+N)
  Eigen::MatrixXcd lambda;  // (c+N) x (c+N)
  double sigma = 0.0;
  Eigen::MatrixXcd w;       // N x N, selection-embedded inverse covariance
  double mu = 1.0;

  int cols() const { return static_cast<int>(x.rows()); }
};

struct AdmmResiduals {
  double primal = 0.0;  // ||Q - [[X, Z^H], [Z, Tt]]||_F
  double dual = 0.0;    // mu ||Q - Q_prev||_F
  // Norms for the survey-style stopping rule.
  double q_norm = 0.0;
  double b_norm = 0.0;
  double lambda_norm = 0.0;
};

struct SolveReport {
  SourceEstimate estimate;
  std::vector<double> nll_trace;  // value after each MM iteration
  int mm_iters = 0;
  long total_admm_iters = 0;
  bool converged = false;
  int sources_found = 0;  // < k flags a rank-deficient final decomposition
  double mu_final = 0.0;
};

/// Negative log-likelihood ln|R| + tr(R^{-1} R_hat) with
/// R = Gamma (T t) Gamma^T + sigma I. Throws std::domain_error when R is not
/// positive definite.
double nll(const ToeplitzParam& t, double sigma,
           const Eigen::MatrixXcd& r_hat, const ArrayGeometry& g);

/// Frobenius-norm shrinkage (1 - beta/||l||_F)_+ l — the minimizer of
/// beta ||Z|| _F + (1/2) ||Z - l||_F^2.
Eigen::MatrixXcd shrinkage(const Eigen::MatrixXcd& l, double beta);

/// Initial ADMM state: data-covariance (or identity, when the source
/// eigenvalue ratio is below the configured threshold) initialization of the
/// model covariance, W from its inverse, Z and Q3 seeded from the data
/// factor.
SolverState initial_state(const Eigen::MatrixXcd& r_hat,
                          const Eigen::MatrixXcd& y_hat_omega,
                          const SolverConfig& cfg, const ArrayGeometry& g);

/// One full ADMM sweep in the fixed order t, X, Z, Q, Lambda.
AdmmResiduals admm_step(SolverState& state,
                        const Eigen::MatrixXcd& y_hat_omega,
                        const ArrayGeometry& g, const SolverConfig& cfg);

/// Closed-form noise update ||Y_hat - Z_Omega||_F / sqrt(tr W). Throws
/// std::domain_error when tr W <= 0.
double sigma_from_state(const SolverState& state,
                        const Eigen::MatrixXcd& y_hat_omega,
                        const ArrayGeometry& g);

/// Full solve: outer MM loop (reweighting W from the current model
/// covariance) around the inner ADMM loop, followed by the Carathéodory
/// frequency/power retrieval. Non-convergence within the iteration budgets is
/// reported, not thrown.
SolveReport solve(const Eigen::MatrixXcd& r_hat, int snapshots,
                  const ArrayGeometry& g, const SolverConfig& cfg);

}  // namespace mesa
