#include "oodkit/dump_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "binary.hpp"

namespace oodkit {

namespace {

using binary::checked_add;
using binary::checked_mul;

float to_f32(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite value in payload");
  if (std::abs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
    throw Error(ErrorCode::kNonFinite, "value overflows float32");
  }
  return static_cast<float>(v);
}

void put_matrix(binary::Writer& w, const RowMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f32(to_f32(m(i, j)));
  }
}

RowMatrix get_matrix(binary::Reader& r, std::uint64_t rows, std::uint64_t cols, const char* what) {
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float v = r.f32();
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, std::string("non-finite value in ") + what + " at (" +
                                               std::to_string(i) + "," + std::to_string(j) + ")");
      }
      m(i, j) = static_cast<double>(v);
    }
  }
  return m;
}

std::uint64_t payload_size(const DumpHeader& h, std::uint64_t meta_bytes) {
  std::uint64_t total = kDumpHeaderSize;
  total = checked_add(total, checked_mul(checked_mul(h.n, h.d), 4));
  if (h.has(kHasLabels)) total = checked_add(total, checked_mul(h.n, 4));
  if (h.has(kHasLogits)) total = checked_add(total, checked_mul(checked_mul(h.n, h.c), 4));
  if (h.has(kHasDropoutStack)) {
    total = checked_add(total, checked_mul(checked_mul(checked_mul(h.n, h.t), h.c), 4));
  }
  if (h.has(kHasOdinLogits)) total = checked_add(total, checked_mul(checked_mul(h.n, h.c), 4));
  return checked_add(total, meta_bytes);
}

bool has_meta(const DumpHeader& h) { return h.has(kHasDropoutStack) || h.has(kHasOdinLogits); }

}  // namespace

DumpHeader header_for(const FeatureSet& fs, const AugmentedDump* aug) {
  DumpHeader h;
  h.n = fs.size();
  h.d = fs.dim();
  h.c = fs.num_classes;
  if (h.c == 0 && fs.logits) h.c = static_cast<std::uint64_t>(fs.logits->cols());
  if (fs.labels) h.flags |= kHasLabels;
  if (fs.logits) h.flags |= kHasLogits;
  if (aug && aug->dropout_prob_stacks) {
    h.flags |= kHasDropoutStack;
    h.t = aug->dropout_samples;
  }
  if (aug && aug->odin_logits) h.flags |= kHasOdinLogits;
  return h;
}

std::vector<std::uint8_t> encode_dump(const DumpHeader& h, const FeatureSet& fs,
                                      const AugmentedDump* aug) {
  if (h.version != kDumpVersion) {
    throw Error(ErrorCode::kUnsupportedVersion, "unsupported version");
  }
  if (h.dtype != 0) throw Error(ErrorCode::kUnsupportedDtype, "unsupported dtype");
  const bool has_drop = aug && aug->dropout_prob_stacks;
  const bool has_odin = aug && aug->odin_logits;
  if (h.has(kHasLabels) != fs.labels.has_value() || h.has(kHasLogits) != fs.logits.has_value() ||
      h.has(kHasDropoutStack) != has_drop || h.has(kHasOdinLogits) != has_odin ||
      (h.flags & 0xF0u) != 0) {
    throw Error(ErrorCode::kFlagPayloadMismatch, "flag/payload mismatch");
  }
  if (h.n != fs.size() || h.d != fs.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "header N/d disagree with features");
  }
  FeatureSet declared = fs;
  declared.num_classes = h.c;
  if (const auto v = validate_feature_set(declared); !v.ok()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid feature set: " + v.summary());
  }
  if (aug) {
    if (has_drop && h.t != aug->dropout_samples) {
      throw Error(ErrorCode::kDimensionMismatch, "header T disagrees with dropout stack");
    }
    if (const auto v = validate_augmented(*aug, fs.size(), h.c); !v.ok()) {
      throw Error(ErrorCode::kInvalidArgument, "invalid augmented channels: " + v.summary());
    }
  }
  std::uint64_t meta_bytes = 0;
  if (has_meta(h)) meta_bytes = 8 + 4 + aug->source_checkpoint.size();
  const std::uint64_t total = payload_size(h, meta_bytes);
  if (total > static_cast<std::uint64_t>(std::numeric_limits<std::ptrdiff_t>::max())) {
    throw Error(ErrorCode::kDimensionOverflow, "dimension overflow");
  }

  binary::Writer w;
  w.reserve(static_cast<std::size_t>(total));
  w.bytes(kDumpMagic.data(), kDumpMagic.size());
  w.u16(h.version);
  w.u8(h.dtype);
  w.u8(h.flags);
  w.u64(h.n);
  w.u64(h.d);
  w.u64(h.c);
  w.u64(h.t);
  put_matrix(w, fs.features);
  if (fs.labels) {
    for (auto y : *fs.labels) w.i32(y);
  }
  if (fs.logits) put_matrix(w, *fs.logits);
  if (has_drop) put_matrix(w, *aug->dropout_prob_stacks);
  if (has_odin) put_matrix(w, *aug->odin_logits);
  if (has_meta(h)) {
    w.f64(aug->odin_epsilon);
    w.str(aug->source_checkpoint);
  }
  return w.take();
}

DumpContents decode_dump(std::span<const std::uint8_t> bytes) {
  binary::Reader r(bytes);
  if (bytes.size() < kDumpMagic.size()) throw Error(ErrorCode::kTruncatedPayload, "truncated payload");
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kDumpMagic) throw Error(ErrorCode::kBadMagic, "bad magic");

  DumpContents out;
  DumpHeader& h = out.header;
  h.version = r.u16();
  if (h.version != kDumpVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "unsupported version " + std::to_string(h.version));
  }
  h.dtype = r.u8();
  if (h.dtype != 0) throw Error(ErrorCode::kUnsupportedDtype, "unsupported dtype");
  h.flags = r.u8();
  if ((h.flags & 0xF0u) != 0) {
    throw Error(ErrorCode::kFlagPayloadMismatch, "unknown flag bits set");
  }
  h.n = r.u64();
  h.d = r.u64();
  h.c = r.u64();
  h.t = r.u64();
  if (h.d == 0) throw Error(ErrorCode::kDimensionMismatch, "feature dimension must be >= 1");
  if ((h.has(kHasLogits) || h.has(kHasDropoutStack) || h.has(kHasOdinLogits)) && h.c == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "class channels present but C = 0");
  }
  if (h.has(kHasDropoutStack) && h.t == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "dropout stack present but T = 0");
  }

  // Never trust declared lengths: compare against the actual byte count first.
  const std::uint64_t fixed = payload_size(h, 0);
  if (fixed > bytes.size()) throw Error(ErrorCode::kTruncatedPayload, "truncated payload");

  FeatureSet& fs = out.features;
  fs.num_classes = static_cast<std::size_t>(h.c);
  fs.features = get_matrix(r, h.n, h.d, "features");
  if (h.has(kHasLabels)) {
    std::vector<std::int32_t> labels(static_cast<std::size_t>(h.n));
    for (auto& y : labels) {
      y = r.i32();
      if (y < 0 || (h.c > 0 && static_cast<std::uint64_t>(y) >= h.c)) {
        throw Error(ErrorCode::kInvalidArgument, "label out of range");
      }
    }
    fs.labels = std::move(labels);
  }
  if (h.has(kHasLogits)) fs.logits = get_matrix(r, h.n, h.c, "logits");

  if (has_meta(h)) {
    AugmentedDump aug;
    if (h.has(kHasDropoutStack)) {
      aug.dropout_prob_stacks = get_matrix(r, h.n, h.t * h.c, "dropout stack");
      aug.dropout_samples = static_cast<std::size_t>(h.t);
    }
    if (h.has(kHasOdinLogits)) aug.odin_logits = get_matrix(r, h.n, h.c, "odin logits");
    aug.odin_epsilon = r.f64();
    aug.source_checkpoint = r.str();
    if (!std::isfinite(aug.odin_epsilon)) {
      throw Error(ErrorCode::kNonFinite, "non-finite perturbation magnitude");
    }
    if (const auto v = validate_augmented(aug, fs.size(), fs.num_classes); !v.ok()) {
      throw Error(ErrorCode::kInvalidArgument, "invalid augmented channels: " + v.summary());
    }
    out.augmented = std::move(aug);
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kTrailingBytes, "trailing bytes after payload");
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw Error(ErrorCode::kIo, "read failed: " + path.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

void write_dump(const FeatureSet& fs, const AugmentedDump* aug, const std::filesystem::path& path) {
  const auto bytes = encode_dump(header_for(fs, aug), fs, aug);
  write_file_bytes(path, bytes);
}

DumpContents read_dump(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_dump(bytes);
}

namespace {
constexpr std::array<char, 4> kHeadMagic{'O', 'O', 'D', 'H'};
}

void write_head(const LinearHead& head, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(head.bias.size()) != head.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch, "head bias length mismatch");
  }
  binary::Writer w;
  w.bytes(kHeadMagic.data(), kHeadMagic.size());
  w.u16(1);
  w.u8(0);
  w.u8(0);
  w.u64(head.num_classes());
  w.u64(head.feature_dim());
  put_matrix(w, head.weights);
  for (Eigen::Index c = 0; c < head.bias.size(); ++c) w.f32(to_f32(head.bias(c)));
  write_file_bytes(path, w.take());
}

LinearHead read_head(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  binary::Reader r(bytes);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kHeadMagic) throw Error(ErrorCode::kBadMagic, "bad magic");
  if (r.u16() != 1) throw Error(ErrorCode::kUnsupportedVersion, "unsupported version");
  if (r.u8() != 0) throw Error(ErrorCode::kUnsupportedDtype, "unsupported dtype");
  r.u8();
  const std::uint64_t c = r.u64();
  const std::uint64_t d = r.u64();
  if (c == 0 || d == 0) throw Error(ErrorCode::kDimensionMismatch, "empty head");
  const std::uint64_t need = checked_mul(checked_add(checked_mul(c, d), c), 4);
  if (need > r.remaining()) throw Error(ErrorCode::kTruncatedPayload, "truncated payload");
  LinearHead head;
  head.weights = get_matrix(r, c, d, "head weights");
  const RowMatrix bias = get_matrix(r, 1, c, "head bias");
  head.bias = bias.row(0).transpose();
  if (r.remaining() != 0) throw Error(ErrorCode::kTrailingBytes, "trailing bytes after payload");
  return head;
}

}  // namespace oodkit
