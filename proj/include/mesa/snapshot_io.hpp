#pragma once

#include <string>

#include "mesa/signal.hpp"

namespace mesa {

/// Writes a snapshot set to the versioned binary container (little-endian):
/// magic "MESASNP1", u32 version, u32 M, u32 N, u64 L, i32 indices[M],
/// f64 (re, im) pairs in snapshot-major order, then an optional embedded
/// ground-truth block.
void write_snapshots(const std::string& path, const SnapshotSet& s);

/// Reads a snapshot file; throws std::invalid_argument on malformed input.
SnapshotSet read_snapshots(const std::string& path);

}  // namespace mesa
