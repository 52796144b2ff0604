#include "mesa/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "mesa/errors.hpp"

namespace mesa {

CoarrayStructure coarray_structure(const ArrayGeometry& g) {
  CoarrayStructure s;
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j) {
      const int d = g.indices[static_cast<std::size_t>(i)] -
                    g.indices[static_cast<std::size_t>(j)];
      if (d >= 0) s.differences.push_back(d);
    }
  std::sort(s.differences.begin(), s.differences.end());

  int v = 0;
  while (std::binary_search(s.differences.begin(), s.differences.end(), v))
    ++v;
  s.contiguous_half_len = v;

  s.averaging_map.resize(static_cast<std::size_t>(v));
  for (int i = 0; i < g.m; ++i)
    for (int j = 0; j < g.m; ++j) {
      const int d = g.indices[static_cast<std::size_t>(i)] -
                    g.indices[static_cast<std::size_t>(j)];
      if (d >= 0 && d < v)
        s.averaging_map[static_cast<std::size_t>(d)].push_back({i, j});
    }
  return s;
}

ToeplitzParam coarray_covariance(const Eigen::MatrixXcd& r_hat,
                                 const ArrayGeometry& g) {
  if (r_hat.rows() != g.m || r_hat.cols() != g.m)
    throw std::invalid_argument("coarray_covariance: size mismatch");
  const CoarrayStructure s = coarray_structure(g);
  const int v = s.contiguous_half_len;
  if (v < 2)
    throw degenerate_coarray("coarray_covariance: contiguous coarray < 2");
  ToeplitzParam t = ToeplitzParam::zero(v);
  for (int d = 0; d < v; ++d) {
    std::complex<double> sum = 0.0;
    for (const auto& [i, j] : s.averaging_map[static_cast<std::size_t>(d)])
      sum += r_hat(i, j);
    sum /= static_cast<double>(
        s.averaging_map[static_cast<std::size_t>(d)].size());
    if (d == 0)
      t.t0 = std::real(sum);
    else
      t.t_pos(d - 1) = sum;
  }
  return t;
}

SourceEstimate ss_music(const Eigen::MatrixXcd& r_hat, const ArrayGeometry& g,
                        int k) {
  const ToeplitzParam tz = coarray_covariance(r_hat, g);
  if (k >= tz.n)
    throw std::invalid_argument("ss_music: k must be < coarray length");
  const Eigen::MatrixXcd tm = materialize(tz);
  // Spatial smoothing over the V overlapping coarray subarrays equals
  // (1/V) T T^H for the Hermitian Toeplitz lag matrix T.
  const Eigen::MatrixXcd rss =
      tm * tm.adjoint() / static_cast<double>(tz.n);
  // Forward-backward averaging: J conj(R) J with J the exchange matrix.
  Eigen::MatrixXcd fb(tz.n, tz.n);
  for (int i = 0; i < tz.n; ++i)
    for (int j = 0; j < tz.n; ++j)
      fb(i, j) = std::conj(rss(tz.n - 1 - i, tz.n - 1 - j));
  const Eigen::MatrixXcd r_fb = (rss + fb) / 2.0;
  SourceEstimate est;
  est.freqs = root_music_freqs(r_fb, k);
  return est;
}

std::vector<double> rootmusic_direct(const Eigen::MatrixXcd& r_hat, int k) {
  if (k >= r_hat.rows())
    throw std::invalid_argument("rootmusic_direct: k must be < N");
  return root_music_freqs(r_hat, k);
}

}  // namespace mesa
