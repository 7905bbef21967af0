#pragma once
// Selective-prediction baselines. Neither carries a risk guarantee; they are
// here to be measured against certification on the same sample streams.
//
//   Conf-SP: accept one sample iff confidence >= t (inclusive).
//   SC-SP:   draw m samples, accept the modal normalized answer iff it occurs
//            at least ceil(gamma * m) times. Ties go to the answer seen first.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cci/error.hpp"
#include "cci/generators.hpp"
#include "cci/sample.hpp"

namespace cci {

struct ConfSPConfig {
  double threshold{0.5};
  void validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
      throw InvalidArgument("conf-sp threshold must lie in [0,1]");
    }
  }
};

struct SCSPConfig {
  std::size_t m{5};
  double gamma{0.6};
  void validate() const {
    if (m < 2) throw InvalidArgument("sc-sp needs m >= 2");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("sc-sp gamma must lie in (0,1]");
  }
  std::size_t required_agreement() const {
    // The 1e-9 keeps products like 0.6 * 5 from rounding up past 3.
    return static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(m) - 1e-9));
  }
};

struct SelectiveResult {
  bool accept{false};
  std::optional<std::string> payload;
  std::optional<std::size_t> index;  // which input sample was returned
};

inline SelectiveResult conf_sp(const GeneratorSample& sample, const ConfSPConfig& config) {
  config.validate();
  if (!sample.confidence) throw InvalidArgument("conf-sp requires a confidence score");
  if (*sample.confidence >= config.threshold) return {true, sample.payload, 0};
  return {};
}

inline SelectiveResult sc_sp(std::span<const GeneratorSample> samples, const SCSPConfig& config) {
  config.validate();
  if (samples.size() != config.m) {
    throw InvalidArgument("sc-sp expected " + std::to_string(config.m) + " samples, got " +
                          std::to_string(samples.size()));
  }
  std::vector<std::string> keys;
  keys.reserve(samples.size());
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    keys.push_back(normalize_answer(s.payload));
    ++counts[keys.back()];
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (counts[keys[i]] > counts[keys[best]]) best = i;
  }
  if (counts[keys[best]] < config.required_agreement()) return {};
  return {true, samples[best].payload, best};
}

}  // namespace cci
