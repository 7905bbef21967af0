#pragma once
/*
Sequential chance-constrained inference.

For a fixed input, draw generations one at a time, update the confidence
sequence, and stop as soon as

  R_hat_n + r_n <= epsilon   -> Feasible   (R <= epsilon with prob >= 1 - delta)
  R_hat_n - r_n >  epsilon   -> Infeasible (R >  epsilon with prob >= 1 - delta)

or return Undecided once n_max samples are spent. The radius here is the
unclipped r_n. The Feasible test runs first; both cannot hold when r_n > 0.

certify_and_respond additionally draws one fresh sample after a Feasible
verdict and returns it; on any other verdict the caller abstains.
*/

#include <concepts>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <utility>

#include "cci/confseq.hpp"
#include "cci/error.hpp"
#include "cci/sample.hpp"

namespace cci {

enum class Verdict { Feasible, Infeasible, Undecided };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Feasible: return "feasible";
    case Verdict::Infeasible: return "infeasible";
    case Verdict::Undecided: return "undecided";
  }
  return "?";
}

struct CertifyConfig {
  double epsilon{0.1};
  double delta{0.05};
  std::uint64_t n_max{40};

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw InvalidArgument("epsilon must lie in [0,1], got " + std::to_string(epsilon));
    }
    require_delta(delta);
    if (n_max < 1) throw InvalidArgument("n_max must be at least 1");
  }
};

struct Decision {
  Verdict verdict{Verdict::Undecided};
  std::uint64_t stopping_time{0};
  ConfidenceState final_state{0.05};
  std::optional<GeneratorSample> returned_sample;

  friend bool operator==(const Decision&, const Decision&) = default;
};

// Certification could not finish because the sample source failed.
class InferenceAborted : public GeneratorFailure {
 public:
  InferenceAborted(const std::string& what, ConfidenceState partial)
      : GeneratorFailure("inference aborted after " + std::to_string(partial.n()) +
                         " samples: " + what),
        partial_(partial) {}
  const ConfidenceState& partial_state() const { return partial_; }

 private:
  ConfidenceState partial_;
};

// Certification finished Feasible but drawing the returned sample failed.
class DeliveryError : public GeneratorFailure {
 public:
  DeliveryError(const std::string& what, Decision decision)
      : GeneratorFailure("post-certification delivery failed: " + what),
        decision_(std::move(decision)) {}
  const Decision& decision() const { return decision_; }

 private:
  Decision decision_;
};

template <typename G>
concept ViolationSource = requires(G g) {
  { g() } -> std::convertible_to<bool>;
};

template <typename G>
concept SampleSource = requires(G g) {
  { g() } -> std::convertible_to<GeneratorSample>;
};

struct StepResult {
  ConfidenceState state;
  std::optional<Verdict> verdict;  // empty: keep sampling
};

inline StepResult step(const ConfidenceState& state, const CertifyConfig& config, bool violated) {
  if (state.n() >= config.n_max) throw InvalidArgument("step called with n already at n_max");
  ConfidenceState next = state.observe(violated);
  const double rate = next.empirical_rate();
  const double r = next.radius();
  if (rate + r <= config.epsilon) return {next, Verdict::Feasible};
  if (rate - r > config.epsilon) return {next, Verdict::Infeasible};
  return {next, std::nullopt};
}

// Re-checks the verdict against the final evidence snapshot.
inline bool consistent(const Decision& d, const CertifyConfig& config) {
  const auto& s = d.final_state;
  if (s.n() != d.stopping_time || s.n() == 0 || s.n() > config.n_max) return false;
  const double rate = s.empirical_rate();
  const double r = s.radius();
  switch (d.verdict) {
    case Verdict::Feasible: return rate + r <= config.epsilon;
    case Verdict::Infeasible: return rate - r > config.epsilon;
    case Verdict::Undecided:
      return d.stopping_time == config.n_max && !(rate + r <= config.epsilon) &&
             !(rate - r > config.epsilon);
  }
  return false;
}

namespace detail {

template <typename Draw>
Decision run_certification(Draw&& draw, const CertifyConfig& config) {
  config.validate();
  ConfidenceState state(config.delta);
  while (state.n() < config.n_max) {
    bool violated = false;
    try {
      violated = static_cast<bool>(draw());
    } catch (const std::exception& e) {
      throw InferenceAborted(e.what(), state);
    }
    auto [next, verdict] = step(state, config, violated);
    state = next;
    if (verdict) return Decision{*verdict, state.n(), state, std::nullopt};
  }
  return Decision{Verdict::Undecided, state.n(), state, std::nullopt};
}

}  // namespace detail

// Consumes exactly stopping_time indicators from `source`.
template <ViolationSource G>
Decision certify(G&& source, const CertifyConfig& config) {
  return detail::run_certification([&] { return static_cast<bool>(source()); }, config);
}

template <SampleSource G>
Decision certify_and_respond(G&& source, const CertifyConfig& config) {
  Decision d = detail::run_certification(
      [&] { return static_cast<GeneratorSample>(source()).violated(); }, config);
  if (d.verdict != Verdict::Feasible) return d;
  try {
    d.returned_sample = static_cast<GeneratorSample>(source());
  } catch (const std::exception& e) {
    throw DeliveryError(e.what(), d);
  }
  return d;
}

// Delta(x) = R(x) - epsilon(x); only meaningful when R is known.
inline double feasibility_gap(double true_r, double epsilon) {
  if (!(true_r >= 0.0 && true_r <= 1.0)) throw InvalidArgument("true_r must lie in [0,1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0,1]");
  return true_r - epsilon;
}

// Smallest n with r_n <= |gap|: the horizon at which a gap of that size can
// first be resolved.
inline std::uint64_t plan_samples(double gap, double delta) {
  require_delta(delta);
  if (!(gap == gap) || gap == 0.0) {
    throw InvalidArgument("gap must be nonzero: no finite certification horizon");
  }
  const double target = gap < 0 ? -gap : gap;
  if (radius(1, delta) <= target) return 1;
  std::uint64_t lo = 1, hi = 2;  // radius(lo) > target
  while (radius(hi, delta) > target) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (radius(mid, delta) <= target) hi = mid; else lo = mid;
  }
  return hi;
}

}  // namespace cci
