#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "oodkit/fitted_stats.hpp"

namespace oodkit {

// .oods stats bundle, little-endian:
//   "OODS", u16 version (1), u16 reserved, u64 d, u64 C, u32 section count,
//   then per section: u32 tag length, tag bytes, u64 payload length, payload.
//   A payload is u32 entry count followed by entries:
//   u32 name length, name, u8 kind (0 = f64, 1 = u64), u8 rank, u64 dims[rank], data.
// Sections are keyed by artifact ("class_means", "subspace", "knn", ...).
// Unknown sections are skipped so older readers accept newer bundles.

inline constexpr std::uint16_t kStatsVersion = 1;

std::vector<std::uint8_t> encode_stats(const FittedStats& stats);
FittedStats decode_stats(std::span<const std::uint8_t> bytes);

void save_stats(const FittedStats& stats, const std::filesystem::path& path);

/// When expected_dim is given, throws kDimensionMismatch if the bundle was
/// fitted for another feature dimension.
FittedStats load_stats(const std::filesystem::path& path,
                       std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace oodkit
