#include "mesa/toeplitz.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mesa/errors.hpp"
#include "mesa/geometry.hpp"

namespace mesa {
namespace {

using cx = std::complex<double>;

// Sum of the entries on subdiagonal d (d >= 0).
cx diagonal_sum(const Eigen::MatrixXcd& m, int d) {
  cx s = 0.0;
  for (Eigen::Index i = 0; i + d < m.rows(); ++i) s += m(i + d, i);
  return s;
}

// Roots of sum_p coeffs[p] z^p via the companion matrix, after stripping
// numerically zero leading/trailing coefficients.
std::vector<cx> polynomial_roots(std::vector<cx> coeffs) {
  double maxc = 0.0;
  for (const cx& c : coeffs) maxc = std::max(maxc, std::abs(c));
  if (maxc == 0.0) return {};
  const double tol = 1e-12 * maxc;
  std::size_t hi = coeffs.size();
  while (hi > 0 && std::abs(coeffs[hi - 1]) <= tol) --hi;
  std::size_t lo = 0;
  while (lo < hi && std::abs(coeffs[lo]) <= tol) ++lo;
  if (hi - lo < 2) return {};
  const std::size_t deg = hi - 1 - lo;
  Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(
      static_cast<Eigen::Index>(deg), static_cast<Eigen::Index>(deg));
  const cx lead = coeffs[hi - 1];
  for (std::size_t i = 0; i < deg; ++i) {
    if (i + 1 < deg) companion(static_cast<Eigen::Index>(i + 1),
                               static_cast<Eigen::Index>(i)) = 1.0;
    companion(static_cast<Eigen::Index>(i),
              static_cast<Eigen::Index>(deg - 1)) = -coeffs[lo + i] / lead;
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(companion);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("polynomial_roots: eigensolver failed");
  std::vector<cx> roots(static_cast<std::size_t>(deg));
  for (std::size_t i = 0; i < deg; ++i)
    roots[i] = eig.eigenvalues()(static_cast<Eigen::Index>(i));
  return roots;
}

// Nonnegative least-squares fit of the powers: minimize
// ||T - A diag(p) A^H||_F over p >= 0 via the normal equations with
// negative components clamped.
std::vector<double> fit_powers(const Eigen::MatrixXcd& t,
                               const std::vector<double>& freqs) {
  const int k = static_cast<int>(freqs.size());
  const int n = static_cast<int>(t.rows());
  const Eigen::MatrixXcd a = steering_matrix(freqs, ula(n));
  Eigen::MatrixXd gram(k, k);
  Eigen::VectorXd rhs(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j)
      gram(i, j) = std::norm(cx(a.col(i).adjoint() * a.col(j)));
    rhs(i) = std::real(cx(a.col(i).adjoint() * t * a.col(i)));
  }
  const Eigen::VectorXd p = gram.ldlt().solve(rhs);
  std::vector<double> powers(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) powers[static_cast<std::size_t>(i)] =
      std::max(p(i), 0.0);
  return powers;
}

SourceEstimate decompose_impl(const ToeplitzParam& t, int k, bool lenient) {
  if (k < 1) throw std::invalid_argument("vandermonde_decompose: k < 1");
  if (k >= t.n)
    throw std::invalid_argument("vandermonde_decompose: k must be < N");
  std::vector<double> freqs = root_music_freqs(materialize(t), k);
  if (static_cast<int>(freqs.size()) < k && !lenient)
    throw degenerate_spectrum(
        "vandermonde_decompose: fewer admissible roots than sources");
  SourceEstimate est;
  est.freqs = freqs;
  est.powers = fit_powers(materialize(t), freqs);
  return est;
}

}  // namespace

ToeplitzParam ToeplitzParam::from_sources(int n,
                                          const std::vector<double>& freqs,
                                          const std::vector<double>& powers) {
  if (n < 1) throw std::invalid_argument("from_sources: n < 1");
  if (freqs.size() != powers.size())
    throw std::invalid_argument("from_sources: freqs/powers size mismatch");
  ToeplitzParam t = ToeplitzParam::zero(n);
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    t.t0 += powers[k];
    for (int d = 1; d < n; ++d)
      t.t_pos(d - 1) += powers[k] * std::polar(1.0, 2.0 * std::numbers::pi *
                                                        freqs[k] * d);
  }
  return t;
}

Eigen::MatrixXcd materialize(const ToeplitzParam& t) {
  Eigen::MatrixXcd m(t.n, t.n);
  for (int i = 0; i < t.n; ++i) {
    m(i, i) = t.t0;
    for (int j = 0; j < i; ++j) {
      m(i, j) = t.t_pos(i - j - 1);
      m(j, i) = std::conj(t.t_pos(i - j - 1));
    }
  }
  return m;
}

ToeplitzParam adjoint(const Eigen::MatrixXcd& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("adjoint: matrix not square");
  const Eigen::MatrixXcd sym = (m + m.adjoint()) / 2.0;
  const int n = static_cast<int>(sym.rows());
  ToeplitzParam t = ToeplitzParam::zero(n);
  t.t0 = std::real(diagonal_sum(sym, 0));
  for (int d = 1; d < n; ++d) t.t_pos(d - 1) = diagonal_sum(sym, d);
  return t;
}

ToeplitzParam gram_solve(const ToeplitzParam& v) {
  ToeplitzParam t = v;
  t.t0 /= static_cast<double>(v.n);
  for (int d = 1; d < v.n; ++d) t.t_pos(d - 1) /= static_cast<double>(v.n - d);
  return t;
}

Eigen::MatrixXcd psd_rank_projection(const Eigen::MatrixXcd& h, int k) {
  if (h.rows() != h.cols())
    throw std::invalid_argument("psd_rank_projection: matrix not square");
  const int n = static_cast<int>(h.rows());
  if (k < 1 || k > n)
    throw std::invalid_argument("psd_rank_projection: bad rank bound");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig((h + h.adjoint()) / 2.0);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("psd_rank_projection: eigensolver failed");
  // eigenvalues ascending: keep the positive ones among the top k
  int kept = 0;
  while (kept < k && eig.eigenvalues()(n - 1 - kept) > 0.0) ++kept;
  if (kept == 0) return Eigen::MatrixXcd::Zero(n, n);
  const auto vecs = eig.eigenvectors().rightCols(kept);
  return vecs * eig.eigenvalues().tail(kept).asDiagonal() * vecs.adjoint();
}

std::vector<double> root_music_freqs(const Eigen::MatrixXcd& r, int k) {
  if (r.rows() != r.cols())
    throw std::invalid_argument("root_music_freqs: matrix not square");
  const int n = static_cast<int>(r.rows());
  if (k < 1 || k >= n)
    throw std::invalid_argument("root_music_freqs: need 1 <= k < dim");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig((r + r.adjoint()) / 2.0);
  if (eig.info() != Eigen::Success)
    throw numeric_failure("root_music_freqs: eigensolver failed");
  // Noise subspace: all eigenvectors except the k of largest eigenvalue.
  const Eigen::MatrixXcd en = eig.eigenvectors().leftCols(n - k);
  const Eigen::MatrixXcd c = en * en.adjoint();

  // Null spectrum sum_d c_d z^{-d} scaled by z^{n-1}: coefficient of z^p is
  // the conjugated diagonal sum at lag n-1-p.
  std::vector<cx> coeffs(static_cast<std::size_t>(2 * n - 1));
  for (int p = 0; p <= 2 * n - 2; ++p) {
    const int d = n - 1 - p;
    const cx s = diagonal_sum(c, std::abs(d));
    coeffs[static_cast<std::size_t>(p)] = d >= 0 ? s : std::conj(s);
  }
  std::vector<cx> roots = polynomial_roots(std::move(coeffs));

  // Keep roots strictly inside the unit disk (a root at the origin carries no
  // spectral line), closest to the circle first; angle breaks ties.
  std::vector<cx> inside;
  for (const cx& z : roots) {
    const double mod = std::abs(z);
    if (mod < 1.0 && mod > 1e-8) inside.push_back(z);
  }
  std::sort(inside.begin(), inside.end(), [](const cx& a, const cx& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    return std::arg(a) < std::arg(b);
  });
  if (static_cast<int>(inside.size()) > k) inside.resize(static_cast<std::size_t>(k));

  std::vector<double> freqs;
  freqs.reserve(inside.size());
  for (const cx& z : inside)
    freqs.push_back(wrap_frequency(std::arg(z) / (2.0 * std::numbers::pi)));
  std::sort(freqs.begin(), freqs.end());
  return freqs;
}

SourceEstimate vandermonde_decompose(const ToeplitzParam& t, int k) {
  return decompose_impl(t, k, false);
}

SourceEstimate vandermonde_decompose_lenient(const ToeplitzParam& t, int k) {
  return decompose_impl(t, k, true);
}

}  // namespace mesa
