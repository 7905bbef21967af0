#pragma once
/*
Violation semantics over K binary constraints.

  aggregate      H = 1 iff any h_k = 1
  cost           C = sum_k w_k h_k            (w_k >= 0)
  severity_event 1[C > threshold]             (strict; C == threshold is safe)

A zero-weight constraint is invisible to cost, so H = 1[C > 0] only holds
when every weight is strictly positive.

Hierarchies certify levels in priority order. Each level draws its own fresh
samples and is certified on the OR of its constraints; a level is only reached
after every level above it was certified Feasible. Per-level delta is used
as given: a joint guarantee over L levels needs the caller to split delta.
*/

#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cci/certify.hpp"
#include "cci/error.hpp"
#include "cci/sample.hpp"
#include "json.hpp"

namespace cci {

struct ConstraintSpec {
  std::vector<double> weights;       // w_1..w_K
  double severity_threshold{0.0};
  // Priority levels, highest first; each a list of 0-based constraint indices.
  std::vector<std::vector<std::size_t>> levels;

  std::size_t k() const { return weights.size(); }

  void validate() const {
    if (weights.empty()) throw InvalidArgument("constraint spec needs at least one weight");
    for (double w : weights) {
      if (!(w >= 0.0) || w == std::numeric_limits<double>::infinity()) {
        throw InvalidArgument("weights must be finite and non-negative");
      }
    }
    if (!(severity_threshold >= 0.0)) {
      throw InvalidArgument("severity_threshold must be non-negative");
    }
    if (levels.empty()) return;
    std::set<std::size_t> seen;
    for (const auto& level : levels) {
      if (level.empty()) throw InvalidArgument("hierarchy levels must be non-empty");
      for (std::size_t idx : level) {
        if (idx >= k()) throw InvalidArgument("level index out of range");
        if (!seen.insert(idx).second) throw InvalidArgument("levels must be disjoint");
      }
    }
    if (seen.size() != k()) throw InvalidArgument("levels must cover every constraint");
  }
};

inline bool aggregate(const ViolationVector& v) { return v.any(); }

inline double cost(const ViolationVector& v, const ConstraintSpec& spec) {
  if (v.size() != spec.k()) {
    throw InvalidArgument("violation vector has " + std::to_string(v.size()) +
                          " flags, spec has " + std::to_string(spec.k()));
  }
  double c = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i]) c += spec.weights[i];
  }
  return c;
}

inline bool severity_event(const ViolationVector& v, const ConstraintSpec& spec) {
  return cost(v, spec) > spec.severity_threshold;
}

inline bool level_violated(const ViolationVector& v, const std::vector<std::size_t>& level) {
  for (std::size_t idx : level) {
    if (v[idx]) return true;
  }
  return false;
}

template <typename G>
concept VectorSource = requires(G g) {
  { g() } -> std::convertible_to<ViolationVector>;
};

// Entry l is empty when level l was skipped because a higher level failed.
template <VectorSource G>
std::vector<std::optional<Decision>> certify_hierarchy(G&& source, const ConstraintSpec& spec,
                                                       const std::vector<CertifyConfig>& configs) {
  spec.validate();
  if (spec.levels.empty()) throw InvalidArgument("hierarchy requires levels");
  if (configs.size() != spec.levels.size()) {
    throw InvalidArgument("need exactly one certify config per level");
  }
  std::vector<std::optional<Decision>> out(spec.levels.size());
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    const auto& level = spec.levels[l];
    out[l] = certify(
        [&] {
          ViolationVector v = source();
          if (v.size() != spec.k()) throw InvalidArgument("violation vector size mismatch");
          return level_violated(v, level);
        },
        configs[l]);
    if (out[l]->verdict != Verdict::Feasible) break;
  }
  return out;
}

// {"weights":[...], "severity_threshold": x, "levels":[[0,1],[2]]}
inline ConstraintSpec constraint_spec_from_json(const nlohmann::json& j) {
  ConstraintSpec spec;
  try {
    spec.weights = j.at("weights").get<std::vector<double>>();
    spec.severity_threshold = j.value("severity_threshold", 0.0);
    if (j.contains("levels")) {
      spec.levels = j.at("levels").get<std::vector<std::vector<std::size_t>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("constraint spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

inline ConstraintSpec load_constraint_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open constraint spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("constraint spec " + path + ": " + e.what());
  }
  return constraint_spec_from_json(j);
}

}  // namespace cci
