#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "cci/error.hpp"

namespace cci {

// Per-constraint violation flags h_1..h_K, each 0 or 1.
class ViolationVector {
 public:
  ViolationVector() = default;
  explicit ViolationVector(std::size_t k, bool value = false) : flags_(k, value ? 1 : 0) {}
  ViolationVector(std::initializer_list<int> flags) {
    flags_.reserve(flags.size());
    for (int f : flags) push_back(f);
  }

  static ViolationVector single(bool violated) { return ViolationVector(1, violated); }

  void push_back(int flag) {
    if (flag != 0 && flag != 1) throw InvalidArgument("violation flags must be 0 or 1");
    flags_.push_back(static_cast<std::uint8_t>(flag));
  }

  std::size_t size() const { return flags_.size(); }
  bool operator[](std::size_t i) const { return flags_.at(i) != 0; }
  void set(std::size_t i, bool value) { flags_.at(i) = value ? 1 : 0; }
  bool any() const {
    return std::any_of(flags_.begin(), flags_.end(), [](std::uint8_t f) { return f != 0; });
  }

  friend bool operator==(const ViolationVector&, const ViolationVector&) = default;

 private:
  std::vector<std::uint8_t> flags_;
};

// One stochastic generation after verification.
struct GeneratorSample {
  std::string payload;
  std::optional<double> confidence;
  ViolationVector violation;

  // Aggregate indicator H(x,y): any constraint violated.
  bool violated() const { return violation.any(); }

  friend bool operator==(const GeneratorSample&, const GeneratorSample&) = default;
};

}  // namespace cci
