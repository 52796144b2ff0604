#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>

#include "mesa/crb.hpp"
#include "mesa/geometry.hpp"
#include "mesa/signal.hpp"

using namespace mesa;
using cx = std::complex<double>;

namespace {

Eigen::MatrixXcd model_cov(const CrbRequest& req) {
  SourceModel model{req.freqs, req.powers, req.correlations};
  const Eigen::MatrixXcd a = steering_matrix(model.freqs, req.geometry);
  Eigen::MatrixXcd r = a * source_covariance(model) * a.adjoint();
  r.diagonal().array() += req.sigma;
  return r;
}

CrbRequest mra_request() {
  CrbRequest req;
  req.freqs = {-0.43, -0.28, -0.21, -0.05, 0.1, 0.26, 0.42};
  req.powers.assign(7, 1.0);
  req.sigma = 0.1;
  req.geometry = from_indices({1, 2, 7, 10, 12, 14});
  req.snapshots = 200;
  return req;
}

}  // namespace

TEST_CASE("FIM scales linearly with the snapshot count") {
  CrbRequest req = mra_request();
  const Eigen::MatrixXd f1 = fisher_information(req);
  req.snapshots = 400;
  const Eigen::MatrixXd f2 = fisher_information(req);
  CHECK((f2 - 2.0 * f1).norm() < 1e-9 * f1.norm());
}

TEST_CASE("analytic covariance derivatives match finite differences") {
  CrbRequest req;
  req.freqs = {-0.2, 0.15};
  req.powers = {1.0, 2.0};
  req.correlations = {{1, 2, cx(0.3, 0.2)}};
  req.sigma = 0.5;
  req.geometry = from_indices({1, 2, 3, 4, 5, 10, 15, 20});
  req.snapshots = 100;

  // d R / d f_k via central differences of the full model covariance
  const double h = 1e-6;
  for (std::size_t k = 0; k < req.freqs.size(); ++k) {
    CrbRequest plus = req, minus = req;
    plus.freqs[k] += h;
    minus.freqs[k] -= h;
    const Eigen::MatrixXcd fd = (model_cov(plus) - model_cov(minus)) / (2 * h);

    // recover the analytic derivative from the FIM construction by probing:
    // build it the same way the module does
    const Eigen::MatrixXcd a = steering_matrix(req.freqs, req.geometry);
    Eigen::MatrixXcd da = a;
    for (int r = 0; r < req.geometry.m; ++r)
      da.row(r) *= cx(0.0, 2.0 * std::numbers::pi *
                               (req.geometry.indices[static_cast<std::size_t>(r)] - 1));
    SourceModel model{req.freqs, req.powers, req.correlations};
    const Eigen::MatrixXcd ap = a * source_covariance(model);
    const Eigen::MatrixXcd outer =
        da.col(static_cast<Eigen::Index>(k)) *
        ap.col(static_cast<Eigen::Index>(k)).adjoint();
    const Eigen::MatrixXcd analytic = outer + outer.adjoint();
    CHECK((analytic - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("FIM is symmetric PSD") {
  CrbRequest req = mra_request();
  req.correlations = {{1, 4, std::polar(0.5, std::numbers::pi / 4.0)}};
  const Eigen::MatrixXd fim = fisher_information(req);
  CHECK((fim - fim.transpose()).norm() < 1e-9 * fim.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fim);
  CHECK(eig.eigenvalues().minCoeff() >
        -1e-8 * eig.eigenvalues().maxCoeff());
}

TEST_CASE("single-source bound grows with noise") {
  CrbRequest req;
  req.freqs = {0.1};
  req.powers = {1.0};
  req.geometry = ula(10);
  req.snapshots = 100;
  double prev = 0.0;
  for (double sigma : {0.1, 1.0, 10.0}) {
    req.sigma = sigma;
    const CrbResult res = crb_freqs(req);
    REQUIRE(res.freq_variances.size() == 1);
    CHECK(res.freq_variances(0) > prev);
    prev = res.freq_variances(0);
  }
}

TEST_CASE("experiment-2 style bounds are finite and positive") {
  const CrbResult res = crb_freqs(mra_request());
  REQUIRE(res.freq_variances.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(std::isfinite(res.freq_variances(i)));
    CHECK(res.freq_variances(i) > 0.0);
  }
  CHECK(res.well_conditioned);
}

TEST_CASE("doubling the snapshot count halves the bound") {
  CrbRequest req = mra_request();
  const CrbResult a = crb_freqs(req);
  req.snapshots = 400;
  const CrbResult b = crb_freqs(req);
  CHECK((b.freq_variances - 0.5 * a.freq_variances).norm() <
        1e-9 * a.freq_variances.norm());
}

TEST_CASE("bounds are permutation consistent") {
  CrbRequest req;
  req.freqs = {-0.3, 0.05, 0.4};
  req.powers = {1.0, 2.0, 0.5};
  req.sigma = 0.3;
  req.geometry = from_indices({1, 2, 7, 10, 12, 14});
  req.snapshots = 50;
  const CrbResult fwd = crb_freqs(req);

  CrbRequest perm = req;
  perm.freqs = {0.4, -0.3, 0.05};
  perm.powers = {0.5, 1.0, 2.0};
  const CrbResult rev = crb_freqs(perm);
  CHECK(std::abs(fwd.freq_variances(0) - rev.freq_variances(1)) <
        1e-9 * fwd.freq_variances(0));
  CHECK(std::abs(fwd.freq_variances(2) - rev.freq_variances(0)) <
        1e-9 * fwd.freq_variances(2));
}

TEST_CASE("high-SNR slope of the single-source ULA bound is -1") {
  CrbRequest req;
  req.freqs = {0.07};
  req.powers = {1.0};
  req.geometry = ula(10);
  req.snapshots = 100;
  // log-log slope of variance vs SNR over 10..30 dB
  std::vector<double> snr_db{10, 15, 20, 25, 30};
  std::vector<double> logv;
  for (double s : snr_db) {
    req.sigma = std::pow(10.0, -s / 10.0);
    logv.push_back(std::log10(crb_freqs(req).freq_variances(0)));
  }
  const double slope =
      (logv.back() - logv.front()) / ((snr_db.back() - snr_db.front()) / 10.0);
  CHECK(slope == doctest::Approx(-1.0).epsilon(0.1));
}

TEST_CASE("correlated request yields finite bounds that nest correctly") {
  CrbRequest req = mra_request();
  req.correlations = {{1, 4, std::polar(0.5, std::numbers::pi / 4.0)}};
  const CrbResult corr = crb_freqs(req);
  REQUIRE(corr.freq_variances.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(std::isfinite(corr.freq_variances(i)));
    CHECK(corr.freq_variances(i) > 0.0);
  }

  // Nesting at the same truth: treating the correlation as known (dropping
  // its two parameters from the FIM) can only shrink the frequency bounds.
  const Eigen::MatrixXd fim = fisher_information(req);
  const int np = static_cast<int>(fim.rows());
  // parameter order: 7 freqs, 7 powers, Re/Im of the declared pair, sigma
  Eigen::MatrixXd reduced(np - 2, np - 2);
  std::vector<int> keep;
  for (int i = 0; i < np; ++i)
    if (i != 14 && i != 15) keep.push_back(i);
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = 0; b < keep.size(); ++b)
      reduced(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          fim(keep[a], keep[b]);
  const Eigen::VectorXd known_var =
      reduced.ldlt().solve(Eigen::MatrixXd::Identity(np - 2, np - 2))
          .diagonal()
          .head(7);
  for (int i = 0; i < 7; ++i)
    CHECK(corr.freq_variances(i) >= known_var(i) * (1.0 - 1e-9));
}

TEST_CASE("invalid requests are rejected") {
  CrbRequest req = mra_request();
  req.sigma = 0.0;
  CHECK_THROWS_AS(fisher_information(req), std::invalid_argument);
}
