#pragma once
/*
Time-uniform confidence sequence for a Bernoulli mean (stitched Hoeffding).

With probability at least 1 - delta, simultaneously for every n >= 1,

  |R - R_hat_n| <= r_n,   r_n = sqrt( ln(2 * log2(2n) / delta) / (2n) ),

where R_hat_n = violations / n. The outer logarithm is natural, the inner one
base 2. Because the bound holds for all n at once, it stays valid under any
data-dependent stopping rule.

Counters are exact integers; the empirical rate is derived on demand.
*/

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "cci/error.hpp"

namespace cci {

inline void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidArgument("delta must lie in (0,1), got " + std::to_string(delta));
  }
}

// Stitched Hoeffding radius r_n. Unclipped: exceeds 1 for n <= 2 at delta=0.05.
inline double radius(std::uint64_t n, double delta) {
  if (n == 0) throw InvalidArgument("radius undefined for n = 0");
  require_delta(delta);
  const double nd = static_cast<double>(n);
  return std::sqrt(std::log(2.0 * std::log2(2.0 * nd) / delta) / (2.0 * nd));
}

struct Interval {
  double lower{0.0};
  double upper{1.0};
  double raw_radius{0.0};
};

class ConfidenceState {
 public:
  explicit ConfidenceState(double delta) : delta_(delta) { require_delta(delta); }

  ConfidenceState(std::uint64_t n, std::uint64_t violations, double delta)
      : n_(n), violations_(violations), delta_(delta) {
    require_delta(delta);
    if (violations > n) throw InvalidArgument("violations must not exceed n");
  }

  std::uint64_t n() const { return n_; }
  std::uint64_t violations() const { return violations_; }
  double delta() const { return delta_; }

  double empirical_rate() const {
    if (n_ == 0) throw InvalidArgument("empirical rate undefined for n = 0");
    return static_cast<double>(violations_) / static_cast<double>(n_);
  }

  double radius() const { return cci::radius(n_, delta_); }

  [[nodiscard]] ConfidenceState observe(bool violated) const {
    ConfidenceState next = *this;
    ++next.n_;
    if (violated) ++next.violations_;
    return next;
  }

  // Reported interval, clipped to [0,1]. Decision rules use radius() directly.
  Interval interval() const {
    const double r = radius();
    const double rate = empirical_rate();
    return {std::max(0.0, rate - r), std::min(1.0, rate + r), r};
  }

  friend bool operator==(const ConfidenceState&, const ConfidenceState&) = default;

 private:
  std::uint64_t n_{0};
  std::uint64_t violations_{0};
  double delta_;
};

}  // namespace cci
