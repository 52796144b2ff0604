#include "mesa/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mesa/errors.hpp"
#include "mesa/signal.hpp"

namespace mesa {
namespace {

Eigen::MatrixXcd extract_rows(const Eigen::MatrixXcd& full,
                              const ArrayGeometry& g) {
  Eigen::MatrixXcd out(g.m, full.cols());
  for (int r = 0; r < g.m; ++r)
    out.row(r) = full.row(g.indices[static_cast<std::size_t>(r)] - 1);
  return out;
}

void set_rows(Eigen::MatrixXcd& full, const ArrayGeometry& g,
              const Eigen::MatrixXcd& rows) {
  for (int r = 0; r < g.m; ++r)
    full.row(g.indices[static_cast<std::size_t>(r)] - 1) = rows.row(r);
}

// Omega-principal submatrix of an N x N matrix.
Eigen::MatrixXcd extract_principal(const Eigen::MatrixXcd& full,
                                   const ArrayGeometry& g) {
  Eigen::MatrixXcd out(g.m, g.m);
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j)
      out(i, j) = full(g.indices[static_cast<std::size_t>(i)] - 1,
                       g.indices[static_cast<std::size_t>(j)] - 1);
  return out;
}

Eigen::MatrixXcd embed_principal(const Eigen::MatrixXcd& sub,
                                 const ArrayGeometry& g) {
  Eigen::MatrixXcd out =
      Eigen::MatrixXcd::Zero(g.aperture_n, g.aperture_n);
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j)
      out(g.indices[static_cast<std::size_t>(i)] - 1,
          g.indices[static_cast<std::size_t>(j)] - 1) = sub(i, j);
  return out;
}

Eigen::MatrixXcd bordered(const SolverState& state) {
  const int c = state.cols();
  const int n = state.t.n;
  Eigen::MatrixXcd b(c + n, c + n);
  b.topLeftCorner(c, c) = state.x;
  b.bottomLeftCorner(n, c) = state.z;
  b.topRightCorner(c, n) = state.z.adjoint();
  b.bottomRightCorner(n, n) = materialize(state.t);
  return b;
}

double real_trace(const Eigen::MatrixXcd& m) {
  return std::real(m.trace());
}

// Model covariance over the observed rows, with eigendecomposition reused for
// the inverse (next W) and the likelihood value.
struct ModelCov {
  Eigen::MatrixXcd inv;  // M x M
  double nll = 0.0;
};

ModelCov model_cov_update(const ToeplitzParam& t, double sigma,
                          const Eigen::MatrixXcd& r_hat,
                          const ArrayGeometry& g, double sigma_floor) {
  const Eigen::MatrixXcd t_full = materialize(t);
  Eigen::MatrixXcd r = extract_principal(t_full, g);
  r.diagonal().array() += sigma;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("solve: model covariance eigensolver failed");
  Eigen::VectorXd lam = eig.eigenvalues();
  // Inner iterates keep only Q PSD, so T t (and hence R) can dip indefinite
  // by the ADMM residual; floor the degenerate directions at the smallest
  // noise level the inner loop can resolve and leave healthy eigenvalues
  // untouched. Letting the floor collapse further only feeds noise into W.
  const double tiny = 1e-10 * std::max(lam.maxCoeff(), 0.0);
  if (lam.minCoeff() <= tiny) {
    double floor = std::max({sigma, sigma_floor,
                             1e-10 * std::max(real_trace(r), 0.0) / g.m});
    if (!(floor > 0.0)) floor = 1e-12;
    floor = std::max(floor, tiny);
    for (Eigen::Index i = 0; i < lam.size(); ++i)
      if (lam(i) <= tiny) lam(i) = floor;
  }
  ModelCov out;
  out.inv = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() *
            eig.eigenvectors().adjoint();
  out.nll = lam.array().log().sum() + std::real((out.inv * r_hat).trace());
  return out;
}

}  // namespace

double nll(const ToeplitzParam& t, double sigma,
           const Eigen::MatrixXcd& r_hat, const ArrayGeometry& g) {
  if (r_hat.rows() != g.m || r_hat.cols() != g.m)
    throw std::invalid_argument("nll: covariance size mismatch");
  Eigen::MatrixXcd r = extract_principal(materialize(t), g);
  r.diagonal().array() += sigma;
  Eigen::LLT<Eigen::MatrixXcd> llt(r);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("nll: model covariance not positive definite");
  double lndet = 0.0;
  for (int i = 0; i < g.m; ++i)
    lndet += 2.0 * std::log(std::real(llt.matrixLLT()(i, i)));
  return lndet + std::real(llt.solve(r_hat).trace());
}

Eigen::MatrixXcd shrinkage(const Eigen::MatrixXcd& l, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("shrinkage: beta < 0");
  const double norm = l.norm();
  if (norm <= beta) return Eigen::MatrixXcd::Zero(l.rows(), l.cols());
  return (1.0 - beta / norm) * l;
}

SolverState initial_state(const Eigen::MatrixXcd& r_hat,
                          const Eigen::MatrixXcd& y_hat_omega,
                          const SolverConfig& cfg, const ArrayGeometry& g) {
  const int m = g.m;
  const int n = g.aperture_n;
  if (r_hat.rows() != m || r_hat.cols() != m)
    throw std::invalid_argument("initial_state: covariance size mismatch");
  if (y_hat_omega.rows() != m)
    throw std::invalid_argument("initial_state: data factor size mismatch");
  const int c = static_cast<int>(y_hat_omega.cols());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r_hat);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("initial_state: eigensolver failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();  // ascending

  // Identity initialization when the presumed signal subspace has collapsed
  // (detects highly correlated sources). The eigenvalue-ratio test only makes
  // sense when a Kth signal eigenvalue exists, i.e. K < M.
  bool identity_init = false;
  if (cfg.k < m) {
    const double kth = lam(m - cfg.k);
    const double smallest = std::max(lam(0), 1e-300);
    identity_init = kth / smallest < cfg.init_eig_ratio_threshold;
  }

  Eigen::MatrixXcd r0;
  if (identity_init) {
    r0 = Eigen::MatrixXcd::Identity(m, m);
  } else {
    r0 = r_hat;
    if (lam(0) < 1e-10 * lam(m - 1)) {
      const double delta = 1e-8 * real_trace(r_hat) / m;
      r0.diagonal().array() += delta;
    }
  }

  SolverState state;
  state.t = ToeplitzParam::zero(n);
  state.x = Eigen::MatrixXcd::Zero(c, c);
  state.z = Eigen::MatrixXcd::Zero(n, c);
  set_rows(state.z, g, y_hat_omega);
  state.q = Eigen::MatrixXcd::Zero(c + n, c + n);
  {
    Eigen::MatrixXcd q3 = embed_principal(r_hat, g);
    state.q.bottomRightCorner(n, n) = q3;
  }
  state.lambda = Eigen::MatrixXcd::Zero(c + n, c + n);
  state.sigma = 0.0;
  state.w = embed_principal(r0.llt().solve(Eigen::MatrixXcd::Identity(m, m)),
                            g);
  state.mu = cfg.mu;
  return state;
}

AdmmResiduals admm_step(SolverState& state,
                        const Eigen::MatrixXcd& y_hat_omega,
                        const ArrayGeometry& g, const SolverConfig& cfg) {
  const int c = state.cols();
  const int n = g.aperture_n;
  const double mu = state.mu;

  // t: least-squares fit of the Toeplitz block against Q3 + Lambda3/mu - W/mu.
  state.t = gram_solve(adjoint(state.q.bottomRightCorner(n, n) +
                               (state.lambda.bottomRightCorner(n, n) -
                                state.w) /
                                   mu));

  // X
  state.x = state.q.topLeftCorner(c, c) +
            (state.lambda.topLeftCorner(c, c) -
             Eigen::MatrixXcd::Identity(c, c)) /
                mu;
  state.x = (state.x + state.x.adjoint()).eval() / 2.0;

  // Z: shrink toward the data factor on the observed rows, pass through the
  // consensus value on the unobserved rows.
  const Eigen::MatrixXcd consensus =
      state.q.bottomLeftCorner(n, c) + state.lambda.bottomLeftCorner(n, c) / mu;
  const double beta = std::sqrt(real_trace(state.w)) / mu;
  const Eigen::MatrixXcd l_omega = y_hat_omega - extract_rows(consensus, g);
  state.z = consensus;
  set_rows(state.z, g, y_hat_omega - shrinkage(l_omega, beta));

  // Q, Lambda
  const Eigen::MatrixXcd b = bordered(state);
  const Eigen::MatrixXcd q_prev = state.q;
  state.q = psd_rank_projection(b - state.lambda / mu, cfg.k);
  state.lambda += mu * (state.q - b);
  state.lambda = (state.lambda + state.lambda.adjoint()).eval() / 2.0;

  AdmmResiduals res;
  res.primal = (state.q - b).norm();
  res.dual = mu * (state.q - q_prev).norm();
  res.q_norm = state.q.norm();
  res.b_norm = b.norm();
  res.lambda_norm = state.lambda.norm();
  return res;
}

double sigma_from_state(const SolverState& state,
                        const Eigen::MatrixXcd& y_hat_omega,
                        const ArrayGeometry& g) {
  const double trw = real_trace(state.w);
  if (!(trw > 0.0))
    throw std::domain_error("sigma_from_state: tr(W) must be positive");
  return (y_hat_omega - extract_rows(state.z, g)).norm() / std::sqrt(trw);
}

SolveReport solve(const Eigen::MatrixXcd& r_hat, int snapshots,
                  const ArrayGeometry& g, const SolverConfig& cfg) {
  const int n = g.aperture_n;
  if (cfg.k < 1) throw std::invalid_argument("solve: k must be >= 1");
  if (cfg.k >= n)
    throw std::invalid_argument(
        "solve: k must be < N for the Toeplitz decomposition");
  if (!(cfg.mu > 0.0 && cfg.mm_tol > 0.0 && cfg.admm_abs_tol > 0.0 &&
        cfg.admm_rel_tol > 0.0))
    throw std::invalid_argument("solve: tolerances must be positive");
  if (cfg.mm_max_iters < 1 || cfg.admm_max_iters < 1)
    throw std::invalid_argument("solve: iteration budgets must be >= 1");

  const Eigen::MatrixXcd y_hat = covariance_sqrt(r_hat, snapshots);
  SolverState state = initial_state(r_hat, y_hat, cfg, g);
  const int c = state.cols();

  // The inner problem is solved in normalized units: dividing W and the data
  // factor by s = tr(W)/M leaves the (t, sigma) minimizer unchanged while
  // keeping every block O(1), so the unit penalty suits all noise levels.
  // The warm-started blocks are rescaled exactly when s changes between MM
  // iterations.
  double scale = 1.0;
  Eigen::MatrixXcd y_scaled = y_hat;
  const auto set_scale = [&](const Eigen::MatrixXcd& w_omega) {
    const double s = std::real(w_omega.trace()) / g.m;
    const double r = scale / s;
    const double rr = std::sqrt(r);
    state.x *= r;
    state.z *= rr;
    state.q.topLeftCorner(c, c) *= r;
    state.q.bottomLeftCorner(n, c) *= rr;
    state.q.topRightCorner(c, n) *= rr;
    state.lambda.bottomLeftCorner(n, c) *= rr;
    state.lambda.topRightCorner(c, n) *= rr;
    state.lambda.bottomRightCorner(n, n) *= r;
    state.w = embed_principal(w_omega, g) / s;
    y_scaled = y_hat / std::sqrt(s);
    scale = s;
  };
  {
    Eigen::MatrixXcd w0(g.m, g.m);
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        w0(i, j) = state.w(g.indices[static_cast<std::size_t>(i)] - 1,
                           g.indices[static_cast<std::size_t>(j)] - 1);
    set_scale(w0);
  }

  SolveReport report;
  const int mm_budget = cfg.single_mm_iteration ? 1 : cfg.mm_max_iters;
  const double sigma_floor =
      cfg.admm_abs_tol / std::sqrt(static_cast<double>(g.m));
  bool last_admm_converged = false;
  ToeplitzParam t_best = state.t;
  double sigma_best = 0.0;
  for (int j = 0; j < mm_budget; ++j) {
    last_admm_converged = false;
    for (int i = 0; i < cfg.admm_max_iters; ++i) {
      const AdmmResiduals res = admm_step(state, y_scaled, g, cfg);
      ++report.total_admm_iters;
      // Frobenius-norm residuals against the absolute floor directly: the
      // dimension-inflated floor leaves the surrogate too under-solved for
      // the outer loop to descend.
      const double eps_pri =
          cfg.admm_abs_tol +
          cfg.admm_rel_tol * std::max(res.q_norm, res.b_norm);
      const double eps_dual =
          cfg.admm_abs_tol + cfg.admm_rel_tol * res.lambda_norm;
      if (res.primal <= eps_pri && res.dual <= eps_dual) {
        last_admm_converged = true;
        break;
      }
      if (cfg.adapt_mu) {
        if (res.primal > 10.0 * res.dual)
          state.mu = std::min(state.mu * 2.0, 1e12);
        else if (res.dual > 10.0 * res.primal)
          state.mu = std::max(state.mu / 2.0, 1e-8);
      }
    }

    state.sigma = sigma_from_state(state, y_scaled, g);
    const ModelCov cov =
        model_cov_update(state.t, state.sigma, r_hat, g, sigma_floor);

    if (!report.nll_trace.empty()) {
      const double prev = report.nll_trace.back();
      const double tol = 1e-8 * std::max(1.0, std::abs(prev));
      if (cov.nll > prev + tol) {
        // Descent floor of the inner solver reached; keep the best iterate.
        report.converged = true;
        break;
      }
      if (std::abs(cov.nll - prev) / std::max(1.0, std::abs(prev)) <
          cfg.mm_tol) {
        report.nll_trace.push_back(cov.nll);
        t_best = state.t;
        sigma_best = state.sigma;
        report.converged = true;
        break;
      }
    }
    report.nll_trace.push_back(cov.nll);
    t_best = state.t;
    sigma_best = state.sigma;
    set_scale(cov.inv);
  }
  if (cfg.single_mm_iteration) report.converged = last_admm_converged;

  report.mm_iters = static_cast<int>(report.nll_trace.size());
  report.estimate = vandermonde_decompose_lenient(t_best, cfg.k);
  report.estimate.sigma = sigma_best;
  report.sources_found = static_cast<int>(report.estimate.freqs.size());
  report.mu_final = state.mu;
  return report;
}

}  // namespace mesa
