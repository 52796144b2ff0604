#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace mesa {

/// Parameter vector of an N x N Hermitian Toeplitz matrix: real main
/// diagonal value t0 and the first column below it (t_1 .. t_{N-1}); the
/// upper diagonals follow by conjugate symmetry. PSD is not an invariant of
/// the type — intermediate solver iterates may be indefinite.
struct ToeplitzParam {
  int n = 0;
  double t0 = 0.0;
  Eigen::VectorXcd t_pos;  // length n-1

  static ToeplitzParam zero(int n) {
    ToeplitzParam t;
    t.n = n;
    t.t_pos = Eigen::VectorXcd::Zero(n > 0 ? n - 1 : 0);
    return t;
  }

  /// Builds the rank-K parameterization sum_k p_k a(f_k) a(f_k)^H directly
  /// from frequencies and powers (lag d entry = sum_k p_k e^{i 2 pi f_k d}).
  static ToeplitzParam from_sources(int n, const std::vector<double>& freqs,
                                    const std::vector<double>& powers);
};

/// Frequencies, powers and noise level of a retrieved source set. Frequencies
/// are sorted ascending; `powers` may be empty for estimators that do not
/// produce them.
struct SourceEstimate {
  std::vector<double> freqs;
  std::vector<double> powers;
  double sigma = 0.0;
};

/// Dense N x N Hermitian Toeplitz matrix with entry (i, j) = t_{i-j}.
Eigen::MatrixXcd materialize(const ToeplitzParam& t);

/// Adjoint of the materialization map: component d is the sum of the entries
/// on subdiagonal d of the Hermitian-symmetrized input, so that
/// <materialize(t), m>_F = <t, adjoint(m)> under the real inner product
/// t0 s0 + 2 Re sum_d conj(t_d) s_d.
ToeplitzParam adjoint(const Eigen::MatrixXcd& m);

/// Applies (T* T)^{-1}, which is diagonal in this parameterization: component
/// d is divided by (N - d). gram_solve(adjoint(m)) gives the parameters of
/// the Frobenius-nearest Hermitian Toeplitz matrix to m.
ToeplitzParam gram_solve(const ToeplitzParam& v);

/// Frobenius projection onto the PSD matrices of rank at most k: keeps only
/// the largest k positive eigenvalues. Throws numeric_failure if the
/// eigensolver fails.
Eigen::MatrixXcd psd_rank_projection(const Eigen::MatrixXcd& h, int k);

/// root-MUSIC frequency retrieval from a Hermitian matrix: noise subspace
/// spanned by the eigenvectors beyond the k largest eigenvalues, null
/// spectrum rooted via a companion matrix, and the k in-disk roots of largest
/// modulus selected. Returns the located frequencies sorted ascending; may
/// return fewer than k when the spectrum is degenerate.
std::vector<double> root_music_freqs(const Eigen::MatrixXcd& r, int k);

/// Carathéodory retrieval of (frequencies, powers) from a Toeplitz parameter
/// vector: root-MUSIC for the frequencies, then nonnegative least squares
/// for the powers. Throws std::invalid_argument if k >= N and
/// degenerate_spectrum if fewer than k spectral roots exist; the lenient
/// variant returns however many sources were found instead of throwing.
SourceEstimate vandermonde_decompose(const ToeplitzParam& t, int k);
SourceEstimate vandermonde_decompose_lenient(const ToeplitzParam& t, int k);

}  // namespace mesa
