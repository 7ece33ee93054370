#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "oodkit/types.hpp"

namespace oodkit {

// .oodf layout, all integers little-endian:
//   0  char[4] magic "OODF"
//   4  u16     version (1)
//   6  u8      dtype (0 = float32)
//   7  u8      flags (bit0 labels, bit1 logits, bit2 dropout stack, bit3 odin logits)
//   8  u64     N
//   16 u64     d
//   24 u64     C
//   32 u64     T
//   40 f32[N*d] features, row-major
//      i32[N]    labels           (bit0)
//      f32[N*C]  logits           (bit1)
//      f32[N*T*C] dropout probs   (bit2) sample-major, then pass, then class
//      f32[N*C]  odin logits      (bit3)
//      f64 epsilon, u32 len, u8[len] checkpoint id   (present iff bit2 or bit3)

inline constexpr std::array<char, 4> kDumpMagic{'O', 'O', 'D', 'F'};
inline constexpr std::uint16_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderSize = 40;

enum DumpFlags : std::uint8_t {
  kHasLabels = 1u << 0,
  kHasLogits = 1u << 1,
  kHasDropoutStack = 1u << 2,
  kHasOdinLogits = 1u << 3,
};

struct DumpHeader {
  std::uint16_t version = kDumpVersion;
  std::uint8_t dtype = 0;
  std::uint8_t flags = 0;
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::uint64_t c = 0;
  std::uint64_t t = 0;

  bool has(DumpFlags f) const { return (flags & f) != 0; }
};

struct DumpContents {
  DumpHeader header;
  FeatureSet features;
  std::optional<AugmentedDump> augmented;
};

/// Header implied by the channels actually present.
DumpHeader header_for(const FeatureSet& fs, const AugmentedDump* aug);

/// Serialize with an explicit header. Throws kFlagPayloadMismatch when a flag
/// disagrees with the channels present, kDimensionOverflow when sizes do not
/// fit, kNonFinite / kInvalidArgument on invalid payloads.
std::vector<std::uint8_t> encode_dump(const DumpHeader& header, const FeatureSet& fs,
                                      const AugmentedDump* aug);
DumpContents decode_dump(std::span<const std::uint8_t> bytes);

void write_dump(const FeatureSet& fs, const AugmentedDump* aug,
                const std::filesystem::path& path);
DumpContents read_dump(const std::filesystem::path& path);

// .oodh linear head: "OODH", u16 version, u8 dtype (0 = float32), u8 reserved,
// u64 C, u64 d, f32[C*d] weights row-major, f32[C] bias.
void write_head(const LinearHead& head, const std::filesystem::path& path);
LinearHead read_head(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace oodkit
