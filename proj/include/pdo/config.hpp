#pragma once

// JSON experiment configurations: fields, manifolds, perturbations, symbols.
//
//   field:        number | {"constant", "trig": [{"k", "cos", "sin"}],
//                           "bumps": [{"center", "radius", "amplitude", "width"}], "exp"}
//   manifold:     {"dim", "period", "kappa", one of "flat": true | "christoffel": [field]
//                  (n³ entries, Γ^i_{jk} at (i*n + j)*n + k) | "metric_inverse": [field] (n²)}
//   perturbation: {"constant": c} | {"weyl": {"b": [field], "c": field}}
//   symbol:       [{"coef": field, "xi": [multi-index], "imag": bool,
//                   "omega": {"kind": "japanese" | "power", "a": number}}]
//                 each term is coef(x) · i^imag · ξ^xi · ω(|ξ|), |ξ| Euclidean.
//   scalar:       {"kind": "japanese" | "power" | "shifted_root", "a": number}

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "pdo/errors.hpp"
#include "pdo/laplacian.hpp"

namespace pdo {

struct ExperimentConfig {
  nlohmann::json doc;
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  int jobs = 1;

  /// The value at a '/'-separated path, or `fallback` when absent.
  template <class T>
  T get(const std::string& path, T fallback) const;
  bool has(const std::string& path) const;
  const nlohmann::json& at(const std::string& path) const;
};

/// ConfigInvalid on schema errors or orders beyond the supported caps.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
/// FNV-1a of the canonical serialisation, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

FieldExpr field_from_json(const nlohmann::json& j, int dim);
ManifoldModel manifold_from_json(const nlohmann::json& j);
MetricModel metric_model_from_json(const nlohmann::json& j);
Perturbation perturbation_from_json(const nlohmann::json& j, int dim, const std::vector<double>& period);
/// Sum of the symbol terms, one expansion term per distinct order.
Expansion expansion_from_json(const nlohmann::json& j, int dim, const std::vector<double>& period);
ScalarFunction scalar_from_json(const nlohmann::json& j);

template <class T>
T ExperimentConfig::get(const std::string& path, T fallback) const {
  if (!has(path)) return fallback;
  try {
    return at(path).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, path + ": " + e.what());
  }
}

}  // namespace pdo
