#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oodkit {

enum class Method {
  kMahalanobis,
  kRmds,
  kKnn,
  kFdbd,
  kVim,
  kResidual,
  kOdin,
  kOpenMax,
  kRelation,
  kTempScale,
  kGen,
  kMsp,
  kMcDropout,
  kMls,
  kKlMatching,
  kReact,
  kAsh,
  kShe,
  kRankFeat,
  kGradNorm,
  kEnergy,
  kDice,
};

enum class Family { kDistance, kClassification, kDensity };

inline constexpr std::size_t kMethodCount = 22;

/// Every method in report order (distance, classification, density).
const std::array<Method, kMethodCount>& all_methods();

std::string_view method_id(Method m);       // stable CLI/config string, e.g. "vim"
std::string_view method_display(Method m);  // table label, e.g. "ViM"
Family method_family(Method m);
std::string_view family_display(Family f);

/// Throws kInvalidArgument for an unknown id.
Method parse_method(std::string_view id);
std::vector<Method> parse_method_list(std::string_view comma_separated);

struct ParamSpec {
  std::string key;
  double default_value;
  double min;
  double max;
  bool min_exclusive = false;
  bool max_exclusive = false;
  bool integer = false;
};

/// Hyperparameters accepted by a method, with defaults and valid ranges.
const std::vector<ParamSpec>& method_params(Method m);

/// A method together with its hyperparameters. Only keys declared by
/// method_params are accepted; missing keys take their default.
class MethodConfig {
 public:
  explicit MethodConfig(Method m) : method_(m) {}
  MethodConfig(Method m, std::map<std::string, double> params);

  Method method() const { return method_; }

  /// Throws kInvalidArgument for undeclared keys or out-of-range values.
  MethodConfig& set(const std::string& key, double value);
  double get(const std::string& key) const;
  bool has_explicit(const std::string& key) const { return params_.count(key) != 0; }
  const std::map<std::string, double>& explicit_params() const { return params_; }

  /// "gamma=0.1;M=50" in key order; empty when all defaults.
  std::string describe() const;

  bool operator==(const MethodConfig&) const = default;

 private:
  Method method_;
  std::map<std::string, double> params_;
};

}  // namespace oodkit
