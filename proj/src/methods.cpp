#include "oodkit/methods.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "oodkit/error.hpp"

namespace oodkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MethodEntry {
  Method method;
  std::string_view id;
  std::string_view display;
  Family family;
};

constexpr std::array<MethodEntry, kMethodCount> kEntries{{
    {Method::kMahalanobis, "mahalanobis", "Mahalanobis", Family::kDistance},
    {Method::kRmds, "rmds", "RMDS", Family::kDistance},
    {Method::kKnn, "knn", "KNN", Family::kDistance},
    {Method::kFdbd, "fdbd", "fDBD", Family::kDistance},
    {Method::kVim, "vim", "ViM", Family::kClassification},
    {Method::kResidual, "residual", "Residual", Family::kClassification},
    {Method::kOdin, "odin", "ODIN", Family::kClassification},
    {Method::kOpenMax, "openmax", "OpenMax", Family::kClassification},
    {Method::kRelation, "relation", "Relation", Family::kClassification},
    {Method::kTempScale, "tempscale", "TempScale", Family::kClassification},
    {Method::kGen, "gen", "GEN", Family::kClassification},
    {Method::kMsp, "msp", "MSP", Family::kClassification},
    {Method::kMcDropout, "mcdropout", "MCDropout", Family::kClassification},
    {Method::kMls, "mls", "MLS", Family::kClassification},
    {Method::kKlMatching, "klmatch", "KL Matching", Family::kClassification},
    {Method::kReact, "react", "ReAct", Family::kClassification},
    {Method::kAsh, "ash", "ASH", Family::kClassification},
    {Method::kShe, "she", "SHE", Family::kClassification},
    {Method::kRankFeat, "rankfeat", "RankFeat", Family::kClassification},
    {Method::kGradNorm, "gradnorm", "GradNorm", Family::kClassification},
    {Method::kEnergy, "energy", "Energy", Family::kDensity},
    {Method::kDice, "dice", "DICE", Family::kDensity},
}};

const MethodEntry& entry(Method m) {
  for (const auto& e : kEntries) {
    if (e.method == m) return e;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method");
}

ParamSpec flag(const char* key, double def) { return {key, def, 0, 1, false, false, true}; }

}  // namespace

const std::array<Method, kMethodCount>& all_methods() {
  static const std::array<Method, kMethodCount> methods = [] {
    std::array<Method, kMethodCount> out{};
    for (std::size_t i = 0; i < kMethodCount; ++i) out[i] = kEntries[i].method;
    return out;
  }();
  return methods;
}

std::string_view method_id(Method m) { return entry(m).id; }
std::string_view method_display(Method m) { return entry(m).display; }
Family method_family(Method m) { return entry(m).family; }

std::string_view family_display(Family f) {
  switch (f) {
    case Family::kDistance: return "Distance-based Methods";
    case Family::kClassification: return "Classification-based Methods";
    case Family::kDensity: return "Density-based Methods";
  }
  return "";
}

Method parse_method(std::string_view id) {
  for (const auto& e : kEntries) {
    if (e.id == id) return e.method;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method id '" + std::string(id) + "'");
}

std::vector<Method> parse_method_list(std::string_view text) {
  std::vector<Method> out;
  if (text == "all") {
    const auto& all = all_methods();
    return {all.begin(), all.end()};
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto token = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    if (!token.empty()) out.push_back(parse_method(token));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

const std::vector<ParamSpec>& method_params(Method m) {
  // dim = -1 selects min(256, d / 2).
  static const std::vector<ParamSpec> none;
  static const std::vector<ParamSpec> energy{{"T", 1.0, 0, kInf, true}};
  static const std::vector<ParamSpec> gen{
      {"gamma", 0.01, 0, 1, true, true}, {"M", 10, 1, kInf, false, false, true}, flag("sum_all", 0)};
  static const std::vector<ParamSpec> odin{{"T", 1.0, 0, kInf, true}, {"noise", 0.0014, 0, kInf}};
  static const std::vector<ParamSpec> knn{{"K", 50, 1, kInf, false, false, true}};
  static const std::vector<ParamSpec> fdbd{flag("distance_as_normalizer", 1), flag("negate", 0)};
  static const std::vector<ParamSpec> subspace{{"dim", -1, -1, kInf, false, false, true}};
  static const std::vector<ParamSpec> react{{"percentile", 99, 0, 100, true},
                                            flag("energy_on_top", 0)};
  static const std::vector<ParamSpec> ash{{"percentile", 95, 0, 100, false, true}};
  static const std::vector<ParamSpec> she{{"beta", 1.0, 0, kInf, true}};
  static const std::vector<ParamSpec> relation{{"pow", 8, 0, kInf, true}};
  static const std::vector<ParamSpec> openmax{{"eta", 20, 2, kInf, false, false, true},
                                              {"alpha_top", 10, 1, kInf, false, false, true}};
  static const std::vector<ParamSpec> dice{{"sparsity", 90, 0, 100}};
  switch (m) {
    case Method::kEnergy: return energy;
    case Method::kGen: return gen;
    case Method::kOdin: return odin;
    case Method::kKnn: return knn;
    case Method::kFdbd: return fdbd;
    case Method::kVim:
    case Method::kResidual: return subspace;
    case Method::kReact: return react;
    case Method::kAsh: return ash;
    case Method::kShe: return she;
    case Method::kRelation: return relation;
    case Method::kOpenMax: return openmax;
    case Method::kDice: return dice;
    default: return none;
  }
}

MethodConfig::MethodConfig(Method m, std::map<std::string, double> params) : method_(m) {
  for (const auto& [k, v] : params) set(k, v);
}

MethodConfig& MethodConfig::set(const std::string& key, double value) {
  for (const auto& p : method_params(method_)) {
    if (p.key != key) continue;
    const bool below = p.min_exclusive ? !(value > p.min) : !(value >= p.min);
    const bool above = p.max_exclusive ? !(value < p.max) : !(value <= p.max);
    if (!std::isfinite(value) || below || above || (p.integer && value != std::floor(value))) {
      std::ostringstream os;
      os << "value " << value << " out of range for " << method_id(method_) << "." << key;
      throw Error(ErrorCode::kInvalidArgument, os.str());
    }
    params_[key] = value;
    return *this;
  }
  throw Error(ErrorCode::kInvalidArgument, "method " + std::string(method_id(method_)) +
                                               " has no hyperparameter '" + key + "'");
}

double MethodConfig::get(const std::string& key) const {
  if (auto it = params_.find(key); it != params_.end()) return it->second;
  for (const auto& p : method_params(method_)) {
    if (p.key == key) return p.default_value;
  }
  throw Error(ErrorCode::kInvalidArgument, "method " + std::string(method_id(method_)) +
                                               " has no hyperparameter '" + key + "'");
}

std::string MethodConfig::describe() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : params_) {
    if (!first) os << ';';
    first = false;
    os << k << '=' << v;
  }
  return os.str();
}

}  // namespace oodkit
