#include "mesa/signal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

namespace mesa {
namespace {

// |c| at or above this is treated as an exactly coherent pair.
constexpr double kCoherentEdge = 1.0 - 1e-12;

void validate_model(const SourceModel& model) {
  const int k = model.k();
  if (k == 0) throw std::invalid_argument("source model: no sources");
  if (static_cast<int>(model.powers.size()) != k)
    throw std::invalid_argument("source model: powers/freqs size mismatch");
  for (double p : model.powers)
    if (!(p > 0.0))
      throw std::invalid_argument("source model: powers must be positive");
  for (double f : model.freqs)
    if (!(f >= -0.5 && f < 0.5))
      throw std::invalid_argument(
          "source model: frequency outside [-1/2, 1/2)");
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (model.freqs[static_cast<std::size_t>(a)] ==
          model.freqs[static_cast<std::size_t>(b)])
        throw std::invalid_argument("source model: duplicate frequency");
  for (const auto& corr : model.correlations) {
    if (corr.i < 1 || corr.i > k || corr.j < 1 || corr.j > k ||
        corr.i == corr.j)
      throw std::invalid_argument("source model: bad correlation indices");
    if (std::abs(corr.c) > 1.0 + 1e-12)
      throw std::invalid_argument("source model: |correlation| > 1");
  }
}

// Factor c = F F^H. Cholesky when positive definite; eigocomposition square
// root otherwise (semidefinite blocks arising from near-coherent entries).
Eigen::MatrixXcd psd_factor(const Eigen::MatrixXcd& c) {
  Eigen::LLT<Eigen::MatrixXcd> llt(c);
  if (llt.info() == Eigen::Success)
    return Eigen::MatrixXcd(llt.matrixL());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(c);
  if (eig.info() != Eigen::Success)
    throw std::invalid_argument("source covariance: eigensolver failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double lmax = std::max(lam.maxCoeff(), 0.0);
  const double tol = 1e-10 * std::max(1.0, lmax);
  Eigen::VectorXd s(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < -tol)
      throw std::invalid_argument("source covariance: not PSD");
    s(i) = std::sqrt(std::max(lam(i), 0.0));
  }
  return eig.eigenvectors() * s.asDiagonal();
}

struct CoherencePlan {
  std::vector<int> rep;                       // rep[i] == i for free sources
  std::vector<std::complex<double>> alpha;    // x_i = alpha[i] x_{rep[i]}
  std::vector<int> free_sources;              // 0-based, ascending
};

// Resolve coherent groups into (representative, scalar) assignments so that
// every coherent relation holds exactly per snapshot, and every source keeps
// its declared power.
CoherencePlan plan_coherence(const SourceModel& model,
                             const Eigen::MatrixXcd& cov) {
  const int k = model.k();
  std::vector<std::vector<std::pair<int, std::complex<double>>>> adj(
      static_cast<std::size_t>(k));
  for (const auto& corr : model.correlations) {
    if (std::abs(corr.c) < kCoherentEdge) continue;
    const int u = corr.i - 1;
    const int v = corr.j - 1;
    // E[x_u conj(x_v)] = c sqrt(p_u p_v)
    const std::complex<double> value =
        corr.c * std::sqrt(model.powers[static_cast<std::size_t>(u)] *
                           model.powers[static_cast<std::size_t>(v)]);
    adj[static_cast<std::size_t>(u)].push_back({v, value});
    adj[static_cast<std::size_t>(v)].push_back({u, std::conj(value)});
  }

  CoherencePlan plan;
  plan.rep.resize(static_cast<std::size_t>(k));
  plan.alpha.assign(static_cast<std::size_t>(k), {1.0, 0.0});
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int start = 0; start < k; ++start) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    if (adj[static_cast<std::size_t>(start)].empty()) {
      seen[static_cast<std::size_t>(start)] = true;
      plan.rep[static_cast<std::size_t>(start)] = start;
      plan.free_sources.push_back(start);
      continue;
    }
    // BFS the coherent component rooted at its smallest member.
    const double p_rep = model.powers[static_cast<std::size_t>(start)];
    seen[static_cast<std::size_t>(start)] = true;
    plan.rep[static_cast<std::size_t>(start)] = start;
    plan.free_sources.push_back(start);
    std::queue<int> frontier;
    frontier.push(start);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      for (const auto& [v, value] : adj[static_cast<std::size_t>(u)]) {
        // value = E[x_u conj(x_v)] = alpha_u conj(alpha_v) p_rep
        const std::complex<double> alpha_v =
            std::conj(value / (plan.alpha[static_cast<std::size_t>(u)] *
                               p_rep));
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          plan.rep[static_cast<std::size_t>(v)] = start;
          plan.alpha[static_cast<std::size_t>(v)] = alpha_v;
          frontier.push(v);
        } else if (plan.rep[static_cast<std::size_t>(v)] != start ||
                   std::abs(plan.alpha[static_cast<std::size_t>(v)] -
                            alpha_v) > 1e-8) {
          throw std::invalid_argument(
              "source model: inconsistent coherence structure");
        }
      }
    }
  }

  // The generated ensemble must reproduce the declared covariance: any
  // mismatch means the correlation list is self-contradictory.
  const double scale =
      *std::max_element(model.powers.begin(), model.powers.end());
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const int ri = plan.rep[static_cast<std::size_t>(i)];
      const int rj = plan.rep[static_cast<std::size_t>(j)];
      const std::complex<double> implied =
          plan.alpha[static_cast<std::size_t>(i)] *
          std::conj(plan.alpha[static_cast<std::size_t>(j)]) * cov(ri, rj);
      if (std::abs(implied - cov(i, j)) > 1e-8 * scale)
        throw std::invalid_argument(
            "source model: correlations inconsistent with coherent groups");
    }
  }
  return plan;
}

}  // namespace

Eigen::MatrixXcd source_covariance(const SourceModel& model) {
  validate_model(model);
  const int k = model.k();
  Eigen::MatrixXcd cov = Eigen::MatrixXcd::Zero(k, k);
  for (int i = 0; i < k; ++i)
    cov(i, i) = model.powers[static_cast<std::size_t>(i)];
  for (const auto& corr : model.correlations) {
    const int i = corr.i - 1;
    const int j = corr.j - 1;
    if (cov(i, j) != std::complex<double>(0.0))
      throw std::invalid_argument("source model: duplicate correlation pair");
    const std::complex<double> value =
        corr.c * std::sqrt(model.powers[static_cast<std::size_t>(i)] *
                           model.powers[static_cast<std::size_t>(j)]);
    cov(i, j) = value;
    cov(j, i) = std::conj(value);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::invalid_argument("source covariance: eigensolver failed");
  const double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, lmax))
    throw std::invalid_argument("source model: implied covariance not PSD");
  return cov;
}

Eigen::MatrixXcd draw_sources(const SourceModel& model, int snapshots,
                              Rng& rng) {
  if (snapshots < 1)
    throw std::invalid_argument("draw_sources: snapshots must be >= 1");
  const Eigen::MatrixXcd cov = source_covariance(model);
  const int k = model.k();
  const CoherencePlan plan = plan_coherence(model, cov);

  const int nf = static_cast<int>(plan.free_sources.size());
  Eigen::MatrixXcd cov_free(nf, nf);
  for (int a = 0; a < nf; ++a)
    for (int b = 0; b < nf; ++b)
      cov_free(a, b) = cov(plan.free_sources[static_cast<std::size_t>(a)],
                           plan.free_sources[static_cast<std::size_t>(b)]);
  const Eigen::MatrixXcd factor = psd_factor(cov_free);

  Eigen::MatrixXcd white(nf, snapshots);
  for (int l = 0; l < snapshots; ++l)
    for (int a = 0; a < nf; ++a) white(a, l) = rng.normal_c();
  const Eigen::MatrixXcd free_draws = factor * white;

  Eigen::MatrixXcd x(k, snapshots);
  std::vector<int> free_slot(static_cast<std::size_t>(k), -1);
  for (int a = 0; a < nf; ++a)
    free_slot[static_cast<std::size_t>(
        plan.free_sources[static_cast<std::size_t>(a)])] = a;
  for (int i = 0; i < k; ++i) {
    const int r = plan.rep[static_cast<std::size_t>(i)];
    const int slot = free_slot[static_cast<std::size_t>(r)];
    if (i == r)
      x.row(i) = free_draws.row(slot);
    else
      x.row(i) = plan.alpha[static_cast<std::size_t>(i)] *
                 free_draws.row(slot);
  }
  return x;
}

SnapshotSet synthesize(const SourceModel& model, double sigma,
                       const ArrayGeometry& g, int snapshots, Rng& rng) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("synthesize: sigma must be >= 0");
  const Eigen::MatrixXcd x = draw_sources(model, snapshots, rng);
  const Eigen::MatrixXcd a = steering_matrix(model.freqs, g);
  Eigen::MatrixXcd data = a * x;
  if (sigma > 0.0) {
    const double amp = std::sqrt(sigma);
    for (int l = 0; l < snapshots; ++l)
      for (int r = 0; r < g.m; ++r) data(r, l) += amp * rng.normal_c();
  }
  SnapshotSet out;
  out.data = std::move(data);
  out.geometry = g;
  out.truth = GroundTruth{model, sigma};
  return out;
}

Eigen::MatrixXcd sample_covariance(const SnapshotSet& s) {
  const Eigen::Index l = s.data.cols();
  if (l < 1) throw std::invalid_argument("sample_covariance: no snapshots");
  Eigen::MatrixXcd r =
      (s.data * s.data.adjoint()) / static_cast<double>(l);
  return (r + r.adjoint().eval()) / 2.0;
}

Eigen::MatrixXcd covariance_sqrt(const Eigen::MatrixXcd& r, int snapshots) {
  if (r.rows() != r.cols())
    throw std::invalid_argument("covariance_sqrt: matrix not square");
  if (snapshots < 1)
    throw std::invalid_argument("covariance_sqrt: snapshots must be >= 1");
  const int m = static_cast<int>(r.rows());
  const Eigen::MatrixXcd rs = (r + r.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(rs);
  if (eig.info() != Eigen::Success)
    throw std::invalid_argument("covariance_sqrt: eigensolver failed");
  const Eigen::VectorXd& lam = eig.eigenvalues();  // ascending
  const double lmax = std::max(lam.maxCoeff(), 0.0);
  const double tol = 1e-10 * std::max(1.0, lmax);
  if (lam.minCoeff() < -tol)
    throw std::invalid_argument("covariance_sqrt: materially indefinite");

  const int cols = std::min(snapshots, m);
  // Discarded eigenvalues must be numerically zero or the factor would not
  // reproduce r.
  for (int i = 0; i + cols < m; ++i)
    if (lam(i) > tol)
      throw std::invalid_argument(
          "covariance_sqrt: rank exceeds snapshot count");
  Eigen::MatrixXcd y(m, cols);
  for (int c = 0; c < cols; ++c) {
    const int src = m - 1 - c;  // largest eigenvalues first
    y.col(c) =
        eig.eigenvectors().col(src) * std::sqrt(std::max(lam(src), 0.0));
  }
  return y;
}

}  // namespace mesa
