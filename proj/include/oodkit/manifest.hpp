#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace oodkit {

/// One OoD group ("near", "far_bp", "far_general" or a user extension) and
/// the dumps it averages over.
struct OodGroup {
  std::string name;
  std::vector<std::filesystem::path> datasets;
};

/// Dumps of one trained checkpoint (backbone, seed).
struct RunPaths {
  std::filesystem::path id_train;
  std::filesystem::path id_val;
  std::filesystem::path id_test;
  std::filesystem::path head;
  std::vector<OodGroup> ood_groups;  // manifest order
};

struct BenchmarkManifest {
  std::vector<std::string> backbones;
  std::vector<std::string> seeds;
  std::vector<std::string> class_names;
  /// runs[b][s] belongs to (backbones[b], seeds[s]). Paths are absolute
  /// after loading.
  std::vector<std::vector<RunPaths>> runs;

  const RunPaths& run(std::size_t backbone, std::size_t seed) const { return runs.at(backbone).at(seed); }
  /// Union of group names over all runs, first-seen order.
  std::vector<std::string> group_names() const;
};

// manifest.json:
// {
//   "backbones": ["resnet18", ...],
//   "seeds": ["s0", ...],
//   "class_names": [...],                       (optional)
//   "runs": { "<backbone>": { "<seed>": {
//       "id_train": "...", "id_val": "...", "id_test": "...", "head": "...",
//       "ood_groups": { "near": ["..."], "far_bp": ["..."], "far_general": ["..."] } } } }
// }
// Relative paths resolve against the manifest's directory. Seeds may be
// given as strings or integers.

/// Parses and checks structure (every backbone x seed present, no duplicate
/// ids, non-empty groups). File existence is not checked here.
BenchmarkManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir);
BenchmarkManifest load_manifest(const std::filesystem::path& path);

/// Serializes with paths relative to base_dir where possible.
std::string manifest_to_json(const BenchmarkManifest& m, const std::filesystem::path& base_dir);
void save_manifest(const BenchmarkManifest& m, const std::filesystem::path& path);

/// Referenced files that do not exist, in manifest order.
std::vector<std::filesystem::path> missing_paths(const BenchmarkManifest& m);

}  // namespace oodkit
