#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mesa/geometry.hpp"
#include "mesa/signal.hpp"
#include "mesa/solver.hpp"
#include "mesa/toeplitz.hpp"

using namespace mesa;
using cx = std::complex<double>;

namespace {

Eigen::MatrixXcd random_hermitian(int n, Rng& rng) {
  Eigen::MatrixXcd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal_c();
  return (m + m.adjoint()).eval() / 2.0;
}

Eigen::MatrixXcd random_psd(int n, int rank, Rng& rng) {
  Eigen::MatrixXcd f(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) f(i, j) = rng.normal_c();
  return f * f.adjoint();
}

// Population covariance of a source model over a geometry.
Eigen::MatrixXcd population_cov(const SourceModel& model, double sigma,
                                const ArrayGeometry& g) {
  const Eigen::MatrixXcd a = steering_matrix(model.freqs, g);
  Eigen::MatrixXcd r = a * source_covariance(model) * a.adjoint();
  r.diagonal().array() += sigma;
  return (r + r.adjoint()).eval() / 2.0;
}

// Dimensionally consistent random solver state for update-rule oracles.
struct Fixture {
  ArrayGeometry g;
  Eigen::MatrixXcd y;  // M x c
  SolverState state;
  SolverConfig cfg;
};

Fixture random_fixture(Rng& rng) {
  Fixture fx;
  fx.g = from_indices({1, 2, 4, 5, 7});
  const int n = fx.g.aperture_n;
  const int c = 3;
  fx.cfg.k = 2;
  fx.cfg.mu = 1.3;
  fx.y.resize(fx.g.m, c);
  for (int i = 0; i < fx.g.m; ++i)
    for (int j = 0; j < c; ++j) fx.y(i, j) = rng.normal_c();
  SolverState& s = fx.state;
  s.t = ToeplitzParam::zero(n);
  s.t.t0 = rng.normal();
  for (int d = 1; d < n; ++d) s.t.t_pos(d - 1) = rng.normal_c();
  s.x = random_hermitian(c, rng);
  s.z.resize(n, c);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) s.z(i, j) = rng.normal_c();
  s.q = random_hermitian(c + n, rng);
  s.lambda = random_hermitian(c + n, rng);
  // W: selection-embedded random PSD
  const Eigen::MatrixXcd w_sub = random_psd(fx.g.m, fx.g.m, rng) +
                                 Eigen::MatrixXcd::Identity(fx.g.m, fx.g.m);
  s.w = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i < fx.g.m; ++i)
    for (int j = 0; j < fx.g.m; ++j)
      s.w(fx.g.indices[static_cast<std::size_t>(i)] - 1,
          fx.g.indices[static_cast<std::size_t>(j)] - 1) = w_sub(i, j);
  s.mu = fx.cfg.mu;
  s.sigma = 0.0;
  return fx;
}

Eigen::MatrixXcd bordered_of(const SolverState& s) {
  const int c = s.cols();
  const int n = s.t.n;
  Eigen::MatrixXcd b(c + n, c + n);
  b.topLeftCorner(c, c) = s.x;
  b.bottomLeftCorner(n, c) = s.z;
  b.topRightCorner(c, n) = s.z.adjoint();
  b.bottomRightCorner(n, n) = materialize(s.t);
  return b;
}

}  // namespace

TEST_CASE("nll closed-form values") {
  const ArrayGeometry g = ula(4);
  const ToeplitzParam t0 = ToeplitzParam::zero(4);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(4, 4);
  CHECK(nll(t0, 1.0, eye, g) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(nll(t0, 2.0, eye, g) ==
        doctest::Approx(4.0 * std::log(2.0) + 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(nll(t0, 0.0, eye, g), std::domain_error);
}

TEST_CASE("nll matches a dense determinant/inverse oracle") {
  Rng rng(21);
  const ArrayGeometry g = from_indices({1, 3, 4, 6});
  for (int trial = 0; trial < 20; ++trial) {
    ToeplitzParam t = ToeplitzParam::zero(g.aperture_n);
    t.t0 = 2.0 + rng.uniform();
    for (int d = 1; d < g.aperture_n; ++d)
      t.t_pos(d - 1) = 0.3 * rng.normal_c();
    const double sigma = 0.5 + rng.uniform();
    const Eigen::MatrixXcd r_hat = random_psd(g.m, g.m, rng);

    Eigen::MatrixXcd r(g.m, g.m);
    const Eigen::MatrixXcd tm = materialize(t);
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        r(i, j) = tm(g.indices[static_cast<std::size_t>(i)] - 1,
                     g.indices[static_cast<std::size_t>(j)] - 1);
    r.diagonal().array() += sigma;

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(r);
    const double oracle = std::log(std::abs(lu.determinant())) +
                          std::real((lu.inverse() * r_hat).trace());
    CHECK(std::abs(nll(t, sigma, r_hat, g) - oracle) <
          1e-10 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("shrinkage closed form") {
  Rng rng(22);
  Eigen::MatrixXcd l(3, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) l(i, j) = rng.normal_c();

  CHECK((shrinkage(l, 0.0) - l).norm() == 0.0);

  const double beta = l.norm() / 2.0;
  CHECK((shrinkage(l, beta) - 0.5 * l).norm() < 1e-14);

  CHECK(shrinkage(Eigen::MatrixXcd::Zero(2, 2), 1.0).norm() == 0.0);
  CHECK(shrinkage(l, 10.0 * l.norm()).norm() == 0.0);
}

TEST_CASE("shrinkage is the Frobenius prox minimizer") {
  Rng rng(23);
  const auto objective = [](const Eigen::MatrixXcd& cand,
                            const Eigen::MatrixXcd& l, double beta) {
    return beta * cand.norm() + 0.5 * (cand - l).squaredNorm();
  };
  for (int instance = 0; instance < 5; ++instance) {
    Eigen::MatrixXcd l(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) l(i, j) = rng.normal_c();
    const double beta = rng.uniform() * 1.5 * l.norm();
    const Eigen::MatrixXcd s = shrinkage(l, beta);
    const double at_min = objective(s, l, beta);
    for (int trial = 0; trial < 2000; ++trial) {
      Eigen::MatrixXcd pert(3, 2);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) pert(i, j) = rng.normal_c();
      const double scale = trial % 2 == 0 ? 0.01 : 1.0;
      CHECK(at_min <= objective(s + scale * pert, l, beta) + 1e-12);
    }
  }
}

TEST_CASE("t update is stationary for the augmented Lagrangian") {
  Rng rng(24);
  Fixture fx = random_fixture(rng);
  const SolverState before = fx.state;
  admm_step(fx.state, fx.y, fx.g, fx.cfg);
  const ToeplitzParam t_star = fx.state.t;

  const int n = fx.g.aperture_n;
  const double mu = before.mu;
  const Eigen::MatrixXcd q3 = before.q.bottomRightCorner(n, n);
  const Eigen::MatrixXcd l3 = before.lambda.bottomRightCorner(n, n);
  const auto lagrangian_t = [&](const ToeplitzParam& t) {
    const Eigen::MatrixXcd tm = materialize(t);
    return std::real((before.w * tm).trace()) +
           0.5 * mu * (q3 - tm + l3 / mu).squaredNorm();
  };

  const double h = 1e-5;
  const auto check_direction = [&](auto&& bump) {
    ToeplitzParam plus = t_star, minus = t_star;
    bump(plus, h);
    bump(minus, -h);
    const double grad = (lagrangian_t(plus) - lagrangian_t(minus)) / (2 * h);
    CHECK(std::abs(grad) < 1e-6);
  };
  check_direction([](ToeplitzParam& t, double d) { t.t0 += d; });
  for (int d = 1; d < n; ++d) {
    check_direction([d](ToeplitzParam& t, double e) { t.t_pos(d - 1) += e; });
    check_direction(
        [d](ToeplitzParam& t, double e) { t.t_pos(d - 1) += cx(0.0, e); });
  }
}

TEST_CASE("ULA Z update degenerates to the unselected formula") {
  Rng rng(25);
  Fixture fx = random_fixture(rng);
  // rebuild the fixture on a ULA of the same aperture
  fx.g = ula(5);
  fx.y.resize(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) fx.y(i, j) = rng.normal_c();

  const SolverState before = fx.state;
  admm_step(fx.state, fx.y, fx.g, fx.cfg);

  const int n = 5, c = 3;
  const double mu = before.mu;
  const Eigen::MatrixXcd l =
      fx.y - before.q.bottomLeftCorner(n, c) -
      before.lambda.bottomLeftCorner(n, c) / mu;
  const double beta = std::sqrt(std::real(before.w.trace())) / mu;
  const Eigen::MatrixXcd z_expect = fx.y - shrinkage(l, beta);
  CHECK((fx.state.z - z_expect).norm() < 1e-12);
}

TEST_CASE("X update and multiplier update identities") {
  Rng rng(26);
  Fixture fx = random_fixture(rng);
  const SolverState before = fx.state;
  const AdmmResiduals res = admm_step(fx.state, fx.y, fx.g, fx.cfg);

  const int c = 3;
  const Eigen::MatrixXcd x_expect =
      before.q.topLeftCorner(c, c) +
      (before.lambda.topLeftCorner(c, c) -
       Eigen::MatrixXcd::Identity(c, c)) /
          before.mu;
  CHECK((fx.state.x - x_expect).norm() < 1e-12);

  // multiplier moves exactly mu times the primal residual
  CHECK((fx.state.lambda - before.lambda).norm() ==
        doctest::Approx(before.mu * res.primal).epsilon(1e-10));

  // Q is PSD with rank at most k
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(fx.state.q);
  const Eigen::VectorXd lam = eig.eigenvalues();
  CHECK(lam.minCoeff() > -1e-10);
  int positive = 0;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (lam(i) > 1e-10 * lam.maxCoeff()) ++positive;
  CHECK(positive <= fx.cfg.k);
}

TEST_CASE("sigma update closed form and 1-D oracle") {
  Rng rng(27);
  Fixture fx = random_fixture(rng);

  // Z matching the data on the observed rows makes sigma zero
  {
    SolverState s = fx.state;
    for (int i = 0; i < fx.g.m; ++i)
      s.z.row(fx.g.indices[static_cast<std::size_t>(i)] - 1) = fx.y.row(i);
    CHECK(sigma_from_state(s, fx.y, fx.g) == doctest::Approx(0.0));
  }

  // W = I_N (trace N) and a residual of norm sqrt(N) give sigma = 1
  {
    SolverState s = fx.state;
    const int n = fx.g.aperture_n;
    s.w = Eigen::MatrixXcd::Identity(n, n);
    s.z.setZero();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(fx.g.m, 1);
    y(0, 0) = std::sqrt(static_cast<double>(n));
    SolverState sized = s;
    sized.x = Eigen::MatrixXcd::Zero(1, 1);
    sized.z = Eigen::MatrixXcd::Zero(n, 1);
    CHECK(sigma_from_state(sized, y, fx.g) == doctest::Approx(1.0));
  }

  // golden-section minimization of tr(W) sigma + ||resid||^2 / sigma
  {
    const double trw = std::real(fx.state.w.trace());
    Eigen::MatrixXcd z_omega(fx.g.m, 3);
    for (int i = 0; i < fx.g.m; ++i)
      z_omega.row(i) =
          fx.state.z.row(fx.g.indices[static_cast<std::size_t>(i)] - 1);
    const double resid2 = (fx.y - z_omega).squaredNorm();
    const auto objective = [&](double s) { return trw * s + resid2 / s; };
    double lo = 1e-8, hi = 1e4;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    for (int it = 0; it < 200; ++it) {
      if (objective(x1) < objective(x2)) {
        hi = x2;
        x2 = x1;
        x1 = hi - phi * (hi - lo);
      } else {
        lo = x1;
        x1 = x2;
        x2 = lo + phi * (hi - lo);
      }
    }
    const double numeric = (lo + hi) / 2.0;
    const double closed = sigma_from_state(fx.state, fx.y, fx.g);
    CHECK(std::abs(closed - numeric) < 1e-6 * closed);
  }

  // tr W = 0 is a domain error
  {
    SolverState s = fx.state;
    s.w.setZero();
    CHECK_THROWS_AS(sigma_from_state(s, fx.y, fx.g), std::domain_error);
  }
}

TEST_CASE("initialization follows the eigenvalue-ratio rule") {
  const ArrayGeometry g = from_indices({1, 2, 3, 4, 5, 10, 15, 20});
  SolverConfig cfg;
  cfg.k = 3;

  // well separated uncorrelated sources: data-covariance initialization
  {
    SourceModel model;
    model.freqs = {-0.2, -0.1, 0.2};
    model.powers = {1.0, 1.0, 1.0};
    const Eigen::MatrixXcd r = population_cov(model, 0.01, g);
    const Eigen::MatrixXcd y = covariance_sqrt(r, 100);
    const SolverState s = initial_state(r, y, cfg, g);
    Eigen::MatrixXcd w_sub(g.m, g.m);
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        w_sub(i, j) = s.w(g.indices[static_cast<std::size_t>(i)] - 1,
                          g.indices[static_cast<std::size_t>(j)] - 1);
    CHECK((w_sub * r - Eigen::MatrixXcd::Identity(g.m, g.m)).norm() < 1e-6);

    // Z and Q3 seeded from the data factor / covariance
    for (int i = 0; i < g.m; ++i)
      CHECK((s.z.row(g.indices[static_cast<std::size_t>(i)] - 1) - y.row(i))
                .norm() == 0.0);
    const int c = static_cast<int>(y.cols());
    CHECK(std::abs(s.q(c + 0, c + 1) - r(0, 1)) < 1e-14);
    CHECK(s.sigma == 0.0);
    CHECK(s.t.t0 == 0.0);
  }

  // coherent pair collapses the signal subspace: identity initialization
  {
    SourceModel model;
    model.freqs = {-0.2, -0.1, 0.2};
    model.powers = {1.0, 1.0, 1.0};
    model.correlations = {{1, 2, std::polar(1.0, std::numbers::pi / 3.0)}};
    const Eigen::MatrixXcd r = population_cov(model, 0.01, g);
    const Eigen::MatrixXcd y = covariance_sqrt(r, 100);
    const SolverState s = initial_state(r, y, cfg, g);
    // W reduces to the selection pattern of the identity
    for (int i = 0; i < g.m; ++i)
      CHECK(std::abs(s.w(g.indices[static_cast<std::size_t>(i)] - 1,
                         g.indices[static_cast<std::size_t>(i)] - 1) -
                     1.0) < 1e-14);
    CHECK(std::abs(std::real(s.w.trace()) - g.m) < 1e-12);
  }

  // M = 1 edge
  {
    const ArrayGeometry single = ula(1);
    Eigen::MatrixXcd r(1, 1);
    r(0, 0) = 4.0;
    SolverConfig c1;
    c1.k = 1;
    const Eigen::MatrixXcd y = covariance_sqrt(r, 3);
    const SolverState s = initial_state(r, y, c1, single);
    CHECK(std::abs(s.w(0, 0) - 0.25) < 1e-9);
  }
}

TEST_CASE("solve recovers noiseless ULA sources") {
  const ArrayGeometry g = ula(8);
  SourceModel model;
  model.freqs = {-0.3, 0.15};
  model.powers = {1.0, 2.0};
  const Eigen::MatrixXcd r = population_cov(model, 1e-6, g);
  SolverConfig cfg;
  cfg.k = 2;
  const SolveReport report = solve(r, 100, g, cfg);
  REQUIRE(report.sources_found == 2);
  CHECK(wrap_distance(report.estimate.freqs[0], -0.3) < 1e-4);
  CHECK(wrap_distance(report.estimate.freqs[1], 0.15) < 1e-4);
  CHECK(report.estimate.powers[0] == doctest::Approx(1.0).epsilon(0.01));
  CHECK(report.estimate.powers[1] == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("MM trace decreases and beats the ground truth (sampled runs)") {
  const ArrayGeometry g = ula(10);
  SourceModel model;
  model.freqs = {-0.5 + 4.0 / 19.0, -0.5 + 6.0 / 19.0, -0.5 + 17.0 / 19.0};
  model.powers = {1.0, 1.0, 1.0};
  const double sigma = 0.1;  // SNR 10 dB
  SolverConfig cfg;
  cfg.k = 3;
  const ToeplitzParam t_truth =
      ToeplitzParam::from_sources(10, model.freqs, model.powers);

  int beat_truth = 0;
  const int runs = 10;
  for (int r = 0; r < runs; ++r) {
    Rng rng(100 + static_cast<std::uint64_t>(r));
    const SnapshotSet data = synthesize(model, sigma, g, 100, rng);
    const Eigen::MatrixXcd r_hat = sample_covariance(data);
    const SolveReport report = solve(r_hat, 100, g, cfg);
    CHECK(report.mm_iters <= 20);
    CHECK(report.converged);
    for (std::size_t j = 1; j < report.nll_trace.size(); ++j)
      CHECK(report.nll_trace[j] <=
            report.nll_trace[j - 1] +
                1e-8 * std::abs(report.nll_trace[j - 1]));
    const double truth_nll = nll(t_truth, sigma, r_hat, g);
    if (report.nll_trace.back() <= truth_nll) ++beat_truth;
  }
  CHECK(beat_truth >= runs - 1);
}

TEST_CASE("rank equivalence at ADMM convergence") {
  const ArrayGeometry g = ula(8);
  SourceModel model;
  model.freqs = {-0.25, 0.1, 0.35};
  model.powers = {1.0, 1.0, 1.0};
  Rng rng(31);
  const SnapshotSet data = synthesize(model, 0.1, g, 100, rng);
  const Eigen::MatrixXcd r_hat = sample_covariance(data);
  SolverConfig cfg;
  cfg.k = 3;
  const Eigen::MatrixXcd y = covariance_sqrt(r_hat, 100);
  SolverState state = initial_state(r_hat, y, cfg, g);
  AdmmResiduals res;
  for (int i = 0; i < 800; ++i) res = admm_step(state, y, g, cfg);

  // feasibility: primal residual small at convergence
  CHECK(res.primal < 1e-2 * std::max(1.0, res.b_norm));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(materialize(state.t));
  const double lmax = eig.eigenvalues().maxCoeff();
  int numeric_rank = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (std::abs(eig.eigenvalues()(i)) > 1e-2 * lmax) ++numeric_rank;
  CHECK(numeric_rank <= cfg.k);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eq(state.q);
  int q_rank = 0;
  for (Eigen::Index i = 0; i < eq.eigenvalues().size(); ++i)
    if (eq.eigenvalues()(i) > 1e-10 * eq.eigenvalues().maxCoeff()) ++q_rank;
  CHECK(q_rank <= cfg.k);
  CHECK(eq.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("quadratic-form bound of the whitened steering vectors") {
  // a_k^H (A P A^H + sigma I)^{-1} a_k stays below 1/p_k and approaches it
  // as sigma vanishes.
  Rng rng(32);
  const int m = 8, k = 3;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXcd a(m, k);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) a(i, j) = rng.normal_c();
    Eigen::VectorXd p(k);
    for (int j = 0; j < k; ++j) p(j) = 0.5 + rng.uniform();
    const Eigen::MatrixXcd apa =
        a * p.asDiagonal().toDenseMatrix().cast<cx>() * a.adjoint();
    std::vector<double> sigmas{1.0, 1e-3, 1e-9};
    for (int j = 0; j < k; ++j) {
      std::vector<double> quads;
      for (double sigma : sigmas) {
        Eigen::MatrixXcd r = apa;
        r.diagonal().array() += sigma;
        const double quad = std::real(
            cx(a.col(j).adjoint() * r.llt().solve(a.col(j))));
        CHECK(quad < 1.0 / p(j));
        quads.push_back(quad);
      }
      CHECK(quads[0] < quads[1]);
      CHECK(quads[1] < quads[2]);
      CHECK(std::abs(quads[2] - 1.0 / p(j)) < 1e-5 / p(j));
    }
  }
}

TEST_CASE("vanishing noise drives sigma and errors down (coherent pair)") {
  const ArrayGeometry g = from_indices({1, 2, 3, 4, 5, 10, 15, 20});
  SourceModel model;
  model.freqs = {-0.2, -0.1, 0.2};
  model.powers = {1.0, 1.0, 1.0};
  model.correlations = {{1, 2, std::polar(1.0, std::numbers::pi / 3.0)}};
  SolverConfig cfg;
  cfg.k = 3;

  std::vector<double> sigma_star, freq_err;
  for (double sigma0 : {1e-1, 1e-3}) {
    const Eigen::MatrixXcd r = population_cov(model, sigma0, g);
    const SolveReport report = solve(r, 100, g, cfg);
    REQUIRE(report.sources_found == 3);
    double err = 0.0;
    for (int i = 0; i < 3; ++i)
      err = std::max(err,
                     wrap_distance(report.estimate.freqs[
                                       static_cast<std::size_t>(i)],
                                   model.freqs[static_cast<std::size_t>(i)]));
    sigma_star.push_back(report.estimate.sigma);
    freq_err.push_back(err);
  }
  CHECK(sigma_star[1] < sigma_star[0]);
  CHECK(freq_err[1] < freq_err[0] + 1e-9);
}

TEST_CASE("solve input validation") {
  const ArrayGeometry g = ula(4);
  const Eigen::MatrixXcd r = Eigen::MatrixXcd::Identity(4, 4);
  SolverConfig cfg;
  cfg.k = 4;
  CHECK_THROWS_AS(solve(r, 10, g, cfg), std::invalid_argument);
  cfg.k = 0;
  CHECK_THROWS_AS(solve(r, 10, g, cfg), std::invalid_argument);
  cfg.k = 1;
  cfg.mu = 0.0;
  CHECK_THROWS_AS(solve(r, 10, g, cfg), std::invalid_argument);
}
