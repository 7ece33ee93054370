#include "oodkit/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oodkit/error.hpp"

namespace oodkit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, "manifest: " + msg); }

std::string id_string(const json& v, const char* what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  bad(std::string(what) + " ids must be strings or integers");
}

std::vector<std::string> id_list(const json& root, const char* key) {
  if (!root.contains(key) || !root[key].is_array() || root[key].empty()) {
    bad(std::string("'") + key + "' must be a non-empty list");
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : root[key]) {
    out.push_back(id_string(v, key));
    if (!seen.insert(out.back()).second) bad("duplicate id '" + out.back() + "' in " + key);
  }
  return out;
}

fs::path resolve(const json& v, const fs::path& base, const std::string& where) {
  if (!v.is_string() || v.get<std::string>().empty()) bad(where + " must be a non-empty path");
  fs::path p(v.get<std::string>());
  return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

}  // namespace

std::vector<std::string> BenchmarkManifest::group_names() const {
  std::vector<std::string> out;
  for (const auto& per_seed : runs) {
    for (const auto& run : per_seed) {
      for (const auto& g : run.ood_groups) {
        if (std::find(out.begin(), out.end(), g.name) == out.end()) out.push_back(g.name);
      }
    }
  }
  return out;
}

BenchmarkManifest parse_manifest(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) bad("top level must be an object");

  BenchmarkManifest m;
  m.backbones = id_list(root, "backbones");
  m.seeds = id_list(root, "seeds");
  if (root.contains("class_names")) {
    if (!root["class_names"].is_array()) bad("'class_names' must be a list");
    for (const auto& v : root["class_names"]) {
      if (!v.is_string()) bad("class names must be strings");
      m.class_names.push_back(v.get<std::string>());
    }
  }
  if (!root.contains("runs") || !root["runs"].is_object()) bad("'runs' must be an object");
  const auto& runs = root["runs"];
  for (const auto& b : m.backbones) {
    if (!runs.contains(b)) bad("no runs for backbone '" + b + "'");
  }
  for (const auto& [b, _] : runs.items()) {
    if (std::find(m.backbones.begin(), m.backbones.end(), b) == m.backbones.end()) {
      bad("runs lists undeclared backbone '" + b + "'");
    }
  }

  for (const auto& b : m.backbones) {
    const auto& per_seed = runs[b];
    if (!per_seed.is_object()) bad("runs." + b + " must be an object");
    std::vector<RunPaths> row;
    for (const auto& s : m.seeds) {
      const std::string where = "runs." + b + "." + s;
      if (!per_seed.contains(s)) bad("missing " + where);
      const auto& r = per_seed[s];
      if (!r.is_object()) bad(where + " must be an object");
      RunPaths run;
      for (auto [key, dst] : {std::pair{"id_train", &run.id_train}, std::pair{"id_val", &run.id_val},
                              std::pair{"id_test", &run.id_test}, std::pair{"head", &run.head}}) {
        if (!r.contains(key)) bad(where + " lacks '" + key + "'");
        *dst = resolve(r[key], base_dir, where + "." + key);
      }
      if (!r.contains("ood_groups") || !r["ood_groups"].is_object() || r["ood_groups"].empty()) {
        bad(where + ".ood_groups must be a non-empty object");
      }
      for (const auto& [name, list] : r["ood_groups"].items()) {
        if (name.empty()) bad(where + ": empty group name");
        if (!list.is_array() || list.empty()) bad(where + ".ood_groups." + name + " must be a non-empty list");
        OodGroup g{name, {}};
        for (const auto& p : list) g.datasets.push_back(resolve(p, base_dir, where + ".ood_groups." + name));
        run.ood_groups.push_back(std::move(g));
      }
      row.push_back(std::move(run));
    }
    m.runs.push_back(std::move(row));
  }
  return m;
}

BenchmarkManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), fs::absolute(path).parent_path());
}

std::string manifest_to_json(const BenchmarkManifest& m, const fs::path& base_dir) {
  json root;
  root["backbones"] = m.backbones;
  root["seeds"] = m.seeds;
  if (!m.class_names.empty()) root["class_names"] = m.class_names;
  json runs = json::object();
  for (std::size_t b = 0; b < m.backbones.size(); ++b) {
    json per_seed = json::object();
    for (std::size_t s = 0; s < m.seeds.size(); ++s) {
      const auto& run = m.run(b, s);
      json r;
      r["id_train"] = relative_to(run.id_train, base_dir);
      r["id_val"] = relative_to(run.id_val, base_dir);
      r["id_test"] = relative_to(run.id_test, base_dir);
      r["head"] = relative_to(run.head, base_dir);
      json groups = json::object();
      for (const auto& g : run.ood_groups) {
        json list = json::array();
        for (const auto& p : g.datasets) list.push_back(relative_to(p, base_dir));
        groups[g.name] = list;
      }
      r["ood_groups"] = groups;
      per_seed[m.seeds[s]] = r;
    }
    runs[m.backbones[b]] = per_seed;
  }
  root["runs"] = runs;
  return root.dump(2) + "\n";
}

void save_manifest(const BenchmarkManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
  out << manifest_to_json(m, fs::absolute(path).parent_path());
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<fs::path> missing_paths(const BenchmarkManifest& m) {
  std::vector<fs::path> out;
  auto check = [&](const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) out.push_back(p);
  };
  for (const auto& per_seed : m.runs) {
    for (const auto& run : per_seed) {
      check(run.id_train);
      check(run.id_val);
      check(run.id_test);
      check(run.head);
      for (const auto& g : run.ood_groups) {
        for (const auto& p : g.datasets) check(p);
      }
    }
  }
  return out;
}

}  // namespace oodkit
