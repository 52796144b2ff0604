#include "mesa/crb.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mesa/errors.hpp"

namespace mesa {
namespace {

using cx = std::complex<double>;

Eigen::MatrixXcd steering_derivative(const std::vector<double>& freqs,
                                     const ArrayGeometry& g) {
  Eigen::MatrixXcd da = steering_matrix(freqs, g);
  for (int r = 0; r < g.m; ++r) {
    const double pos = g.indices[static_cast<std::size_t>(r)] - 1;
    da.row(r) *= cx(0.0, 2.0 * std::numbers::pi * pos);
  }
  return da;
}

// Parameter-wise derivatives of R = A P A^H + sigma I, in the order
// (freqs, powers, pair Re/Im, sigma).
std::vector<Eigen::MatrixXcd> covariance_derivatives(const CrbRequest& req) {
  const int k = static_cast<int>(req.freqs.size());
  const int m = req.geometry.m;
  const Eigen::MatrixXcd a = steering_matrix(req.freqs, req.geometry);
  const Eigen::MatrixXcd da = steering_derivative(req.freqs, req.geometry);
  SourceModel model{req.freqs, req.powers, req.correlations};
  const Eigen::MatrixXcd p = source_covariance(model);
  const Eigen::MatrixXcd ap = a * p;

  std::vector<Eigen::MatrixXcd> derivs;
  for (int i = 0; i < k; ++i) {
    const Eigen::MatrixXcd outer = da.col(i) * ap.col(i).adjoint();
    derivs.push_back(outer + outer.adjoint());
  }
  for (int i = 0; i < k; ++i)
    derivs.push_back(a.col(i) * a.col(i).adjoint());
  for (const auto& corr : req.correlations) {
    const int lo = std::min(corr.i, corr.j) - 1;
    const int hi = std::max(corr.i, corr.j) - 1;
    // Free parameters are Re/Im of the strictly-lower entry P(hi, lo).
    const Eigen::MatrixXcd re_part =
        a.col(hi) * a.col(lo).adjoint() + a.col(lo) * a.col(hi).adjoint();
    const Eigen::MatrixXcd im_part =
        cx(0.0, 1.0) * (a.col(hi) * a.col(lo).adjoint() -
                        a.col(lo) * a.col(hi).adjoint());
    derivs.push_back(re_part);
    derivs.push_back(im_part);
  }
  derivs.push_back(Eigen::MatrixXcd::Identity(m, m));
  return derivs;
}

}  // namespace

Eigen::MatrixXd fisher_information(const CrbRequest& req) {
  if (!(req.sigma > 0.0))
    throw std::invalid_argument("fisher_information: sigma must be > 0");
  if (req.snapshots < 1)
    throw std::invalid_argument("fisher_information: snapshots must be >= 1");
  const Eigen::MatrixXcd a = steering_matrix(req.freqs, req.geometry);
  SourceModel model{req.freqs, req.powers, req.correlations};
  const Eigen::MatrixXcd p = source_covariance(model);
  Eigen::MatrixXcd r = a * p * a.adjoint();
  r.diagonal().array() += req.sigma;

  Eigen::LLT<Eigen::MatrixXcd> llt((r + r.adjoint()) / 2.0);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("fisher_information: singular model covariance");

  const std::vector<Eigen::MatrixXcd> derivs = covariance_derivatives(req);
  const int np = static_cast<int>(derivs.size());
  std::vector<Eigen::MatrixXcd> whitened;
  whitened.reserve(derivs.size());
  for (const auto& d : derivs) whitened.push_back(llt.solve(d));

  Eigen::MatrixXd fim(np, np);
  for (int i = 0; i < np; ++i)
    for (int j = i; j < np; ++j) {
      const double v = static_cast<double>(req.snapshots) *
                       std::real((whitened[static_cast<std::size_t>(i)] *
                                  whitened[static_cast<std::size_t>(j)])
                                     .trace());
      fim(i, j) = v;
      fim(j, i) = v;
    }
  return fim;
}

CrbResult crb_freqs(const CrbRequest& req) {
  const Eigen::MatrixXd fim = fisher_information(req);
  const int k = static_cast<int>(req.freqs.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fim);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("crb_freqs: eigensolver failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double lmax = lam.maxCoeff();

  CrbResult out;
  out.well_conditioned = lmax > 0.0 && lam.minCoeff() > 1e-12 * lmax;
  out.fim_condition =
      lam.minCoeff() > 0.0 ? lmax / lam.minCoeff()
                           : std::numeric_limits<double>::infinity();

  // Pseudo-inverse: directions with numerically zero information are dropped.
  Eigen::VectorXd inv_lam = Eigen::VectorXd::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam(i) > 1e-12 * lmax) inv_lam(i) = 1.0 / lam(i);
  const Eigen::MatrixXd crb =
      eig.eigenvectors() * inv_lam.asDiagonal() * eig.eigenvectors().transpose();
  out.freq_variances = crb.diagonal().head(k);
  return out;
}

}  // namespace mesa
