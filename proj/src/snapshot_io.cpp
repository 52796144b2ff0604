#include "mesa/snapshot_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mesa {
namespace {

constexpr char kMagic[8] = {'M', 'E', 'S', 'A', 'S', 'N', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::invalid_argument("snapshot file: truncated");
  return v;
}

}  // namespace

void write_snapshots(const std::string& path, const SnapshotSet& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.geometry.m));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.geometry.aperture_n));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(s.data.cols()));
  for (int idx : s.geometry.indices) put<std::int32_t>(out, idx);
  for (Eigen::Index l = 0; l < s.data.cols(); ++l)
    for (Eigen::Index r = 0; r < s.data.rows(); ++r) {
      put<double>(out, s.data(r, l).real());
      put<double>(out, s.data(r, l).imag());
    }
  put<std::uint8_t>(out, s.truth.has_value() ? 1 : 0);
  if (s.truth) {
    const SourceModel& model = s.truth->model;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.k()));
    for (double f : model.freqs) put<double>(out, f);
    for (double p : model.powers) put<double>(out, p);
    put<double>(out, s.truth->sigma);
    put<std::uint32_t>(out,
                       static_cast<std::uint32_t>(model.correlations.size()));
    for (const Correlation& c : model.correlations) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(c.i));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(c.j));
      put<double>(out, c.c.real());
      put<double>(out, c.c.imag());
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

SnapshotSet read_snapshots(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::invalid_argument("snapshot file: bad magic");
  if (get<std::uint32_t>(in) != kVersion)
    throw std::invalid_argument("snapshot file: unsupported version");
  const auto m = get<std::uint32_t>(in);
  const auto n = get<std::uint32_t>(in);
  const auto l = get<std::uint64_t>(in);
  if (m == 0 || n == 0 || l == 0 || m > n || m > 4096 || n > 1u << 20 ||
      l > 1u << 28)
    throw std::invalid_argument("snapshot file: implausible dimensions");
  std::vector<int> indices(m);
  for (auto& idx : indices) idx = get<std::int32_t>(in);

  SnapshotSet s;
  s.geometry = from_indices(indices);
  if (s.geometry.aperture_n != static_cast<int>(n))
    throw std::invalid_argument("snapshot file: aperture/index mismatch");
  s.data.resize(m, static_cast<Eigen::Index>(l));
  for (std::uint64_t col = 0; col < l; ++col)
    for (std::uint32_t row = 0; row < m; ++row) {
      const double re = get<double>(in);
      const double im = get<double>(in);
      s.data(row, static_cast<Eigen::Index>(col)) = {re, im};
    }
  if (get<std::uint8_t>(in) != 0) {
    GroundTruth truth;
    const auto k = get<std::uint32_t>(in);
    if (k == 0 || k > 4096)
      throw std::invalid_argument("snapshot file: bad truth block");
    truth.model.freqs.resize(k);
    truth.model.powers.resize(k);
    for (auto& f : truth.model.freqs) f = get<double>(in);
    for (auto& p : truth.model.powers) p = get<double>(in);
    truth.sigma = get<double>(in);
    const auto ncorr = get<std::uint32_t>(in);
    if (ncorr > k * k)
      throw std::invalid_argument("snapshot file: bad truth block");
    for (std::uint32_t i = 0; i < ncorr; ++i) {
      Correlation c;
      c.i = static_cast<int>(get<std::uint32_t>(in));
      c.j = static_cast<int>(get<std::uint32_t>(in));
      const double re = get<double>(in);
      const double im = get<double>(in);
      c.c = {re, im};
      truth.model.correlations.push_back(c);
    }
    s.truth = std::move(truth);
  }
  return s;
}

}  // namespace mesa
