#pragma once
/*
Utility-risk acceptance over a finite outcome distribution.

The conditional constraint  P(H=1 | A=1) <= eps  (defined when E[A] > 0) is
equivalent to the expectation form  E[H A] <= eps * E[A].  For a fixed
multiplier lambda >= 0 the Lagrangian

  L(A) = E[ A (U - lambda H + lambda eps) ]

is maximized pointwise by  A*(y) = 1[ U - lambda H + lambda eps >= 0 ].
*/

#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "cci/error.hpp"

namespace cci {

struct Outcome {
  double probability{0.0};
  double utility{0.0};
  bool violated{false};
  double confidence{1.0};  // only read by confidence-threshold policies
};

class FiniteOutcomeDistribution {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit FiniteOutcomeDistribution(std::vector<Outcome> outcomes)
      : outcomes_(std::move(outcomes)) {
    if (outcomes_.empty()) throw InvalidArgument("distribution needs at least one outcome");
    double total = 0.0;
    for (const auto& o : outcomes_) {
      if (!(o.probability >= 0.0)) throw InvalidArgument("probabilities must be non-negative");
      total += o.probability;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw InvalidArgument("probabilities must sum to 1");
    }
  }

  const std::vector<Outcome>& outcomes() const { return outcomes_; }
  std::size_t size() const { return outcomes_.size(); }

 private:
  std::vector<Outcome> outcomes_;
};

template <typename P>
concept AcceptanceRule = requires(P p, const Outcome& o) {
  { p(o) } -> std::convertible_to<bool>;
};

struct AcceptanceMoments {
  double accept{0.0};            // E[A]
  double violation_accept{0.0};  // E[H A]
  double utility{0.0};           // E[U A]
};

template <AcceptanceRule P>
AcceptanceMoments moments(const FiniteOutcomeDistribution& dist, P&& policy) {
  AcceptanceMoments m;
  for (const auto& o : dist.outcomes()) {
    if (!policy(o)) continue;
    m.accept += o.probability;
    if (o.violated) m.violation_accept += o.probability;
    m.utility += o.probability * o.utility;
  }
  return m;
}

// Deterministic policy given as one accept bit per outcome, in order.
inline AcceptanceMoments moments_of_mask(const FiniteOutcomeDistribution& dist,
                                         const std::vector<bool>& accept) {
  if (accept.size() != dist.size()) throw InvalidArgument("mask size mismatch");
  std::size_t i = 0;
  return moments(dist, [&](const Outcome&) { return accept[i++]; });
}

inline bool lagrangian_accept(double utility, bool violated, double lambda, double epsilon) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0,1]");
  const double h = violated ? 1.0 : 0.0;
  return utility - lambda * h + lambda * epsilon >= 0.0;
}

// The closed-form rule as an AcceptanceRule.
struct LagrangianPolicy {
  double lambda;
  double epsilon;
  bool operator()(const Outcome& o) const {
    return lagrangian_accept(o.utility, o.violated, lambda, epsilon);
  }
};

// Accepts iff confidence >= threshold.
struct ConfidenceThresholdPolicy {
  double threshold;
  bool operator()(const Outcome& o) const { return o.confidence >= threshold; }
};

// P(H=1 | A=1); empty when the policy accepts with probability zero.
template <AcceptanceRule P>
std::optional<double> conditional_risk(const FiniteOutcomeDistribution& dist, P&& policy) {
  const auto m = moments(dist, std::forward<P>(policy));
  if (m.accept <= 0.0) return std::nullopt;
  return m.violation_accept / m.accept;
}

struct EquivalenceResult {
  bool conditional_form;   // P(H=1 | A=1) <= eps
  bool expectation_form;   // E[HA] <= eps E[A]
};

// Both forms share a 1e-12 slack (scaled by E[A] on the expectation side) so
// exact boundary cases are not split by rounding.
template <AcceptanceRule P>
EquivalenceResult equivalence_check(const FiniteOutcomeDistribution& dist, P&& policy,
                                    double epsilon) {
  constexpr double kSlack = 1e-12;
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0,1]");
  const auto m = moments(dist, std::forward<P>(policy));
  if (m.accept <= 0.0) throw InvalidArgument("equivalence undefined when E[A] = 0");
  return {m.violation_accept / m.accept <= epsilon + kSlack,
          m.violation_accept <= epsilon * m.accept + kSlack * m.accept};
}

struct FrontierPoint {
  double lambda;
  double expected_utility;
  double acceptance;
  std::optional<double> conditional_risk;
};

// Utility/risk trade-off induced by the closed-form rule across a lambda grid.
inline std::vector<FrontierPoint> lambda_frontier(const FiniteOutcomeDistribution& dist,
                                                  double epsilon,
                                                  const std::vector<double>& lambdas) {
  std::vector<FrontierPoint> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const LagrangianPolicy rule{lambda, epsilon};
    const auto m = moments(dist, rule);
    out.push_back({lambda, m.utility, m.accept,
                   m.accept > 0.0 ? std::optional<double>(m.violation_accept / m.accept)
                                  : std::nullopt});
  }
  return out;
}

}  // namespace cci
