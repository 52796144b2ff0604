#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "mesa/geometry.hpp"
#include "mesa/rng.hpp"

namespace mesa {

/// Declared pairwise source correlation: E[x_i conj(x_j)] = c sqrt(p_i p_j),
/// |c| <= 1. Indices are 1-based source numbers; |c| = 1 declares a coherent
/// pair.
struct Correlation {
  int i = 0;
  int j = 0;
  std::complex<double> c;
};

/// Gaussian source ensemble: frequencies, powers and declared correlations.
struct SourceModel {
  std::vector<double> freqs;
  std::vector<double> powers;
  std::vector<Correlation> correlations;

  int k() const { return static_cast<int>(freqs.size()); }
};

struct GroundTruth {
  SourceModel model;
  double sigma = 0.0;
};

/// A batch of array snapshots; column l of `data` is the array output at
/// snapshot l.
struct SnapshotSet {
  Eigen::MatrixXcd data;  // M x L
  ArrayGeometry geometry;
  std::optional<GroundTruth> truth;

  int snapshots() const { return static_cast<int>(data.cols()); }
};

/// The K x K Hermitian source covariance implied by the model (diagonal
/// powers, declared correlations, Hermitian completion). Throws
/// std::invalid_argument if the model is malformed or the matrix is not PSD.
Eigen::MatrixXcd source_covariance(const SourceModel& model);

/// Draws L i.i.d. circular complex Gaussian source snapshots (K x L) with the
/// model covariance. Coherent pairs are realized as exact scalar multiples of
/// a group representative; the remaining block is Cholesky-factored.
Eigen::MatrixXcd draw_sources(const SourceModel& model, int snapshots,
                              Rng& rng);

/// Synthesizes array data A(f) X + E with per-entry complex noise variance
/// `sigma`. SNR convention: SNR = p / sigma.
SnapshotSet synthesize(const SourceModel& model, double sigma,
                       const ArrayGeometry& g, int snapshots, Rng& rng);

/// Sample covariance (1/L) sum_l y_l y_l^H, explicitly Hermitian-symmetrized.
Eigen::MatrixXcd sample_covariance(const SnapshotSet& s);

/// A factor Y with Y Y^H = r and min(L, M) columns, via the Hermitian
/// eigendecomposition square root (handles rank-deficient sample covariances
/// uniformly). Small negative eigenvalues are clamped to zero; materially
/// indefinite input throws std::invalid_argument.
Eigen::MatrixXcd covariance_sqrt(const Eigen::MatrixXcd& r, int snapshots);

}  // namespace mesa
