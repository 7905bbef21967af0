#pragma once
// Test-only brute-force oracles for the acceptance-policy checks. They
// enumerate every deterministic acceptance mask and recompute moments with
// their own loops, independent of cci::moments.

#include <cstdint>
#include <limits>
#include <vector>

#include "cci/policy.hpp"
#include "cci/rng.hpp"

namespace oracle {

struct Moments {
  double accept{0}, violation_accept{0}, utility{0};
};

inline Moments mask_moments(const std::vector<cci::Outcome>& outs, std::uint32_t mask) {
  Moments m;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (!((mask >> i) & 1u)) continue;
    m.accept += outs[i].probability;
    m.violation_accept += outs[i].violated ? outs[i].probability : 0.0;
    m.utility += outs[i].probability * outs[i].utility;
  }
  return m;
}

// Best expected utility over all masks with E[HA] <= eps E[A] + slack.
// The empty mask (utility 0) is always feasible.
inline double best_feasible_utility(const std::vector<cci::Outcome>& outs, double eps,
                                    double slack) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << outs.size()); ++mask) {
    const auto m = mask_moments(outs, mask);
    if (m.violation_accept <= eps * m.accept + slack && m.utility > best) best = m.utility;
  }
  return best;
}

struct MatchedInstance {
  std::vector<cci::Outcome> outcomes;
  double lambda;
  double epsilon;
};

// Random candidate set for which the closed-form rule at `lambda` has an
// active constraint: E[H A*] = eps E[A*]. The accept set of the closed form
// depends only on (U, H, lambda, eps), so the probabilities are chosen last to
// make the accepted violation mass exactly eps.
inline MatchedInstance matched_instance(cci::Rng& rng, std::size_t max_outcomes) {
  for (;;) {
    MatchedInstance inst;
    const std::size_t n = 2 + rng.below(max_outcomes - 1);
    inst.epsilon = 0.05 + 0.9 * rng.uniform();
    inst.lambda = 0.1 + 4.9 * rng.uniform();
    std::vector<double> w(n);
    double a0 = 0, a1 = 0;
    std::vector<bool> acc(n);
    for (std::size_t i = 0; i < n; ++i) {
      cci::Outcome o;
      o.violated = rng.bernoulli(0.5);
      o.utility = -2.0 + 4.0 * rng.uniform();
      w[i] = 0.05 + rng.uniform();
      acc[i] = o.utility - inst.lambda * (o.violated ? 1.0 : 0.0) + inst.lambda * inst.epsilon >= 0.0;
      if (acc[i]) (o.violated ? a1 : a0) += w[i];
      inst.outcomes.push_back(o);
    }
    if (a0 <= 0 || a1 <= 0) continue;
    const double scale = inst.epsilon / (1.0 - inst.epsilon) * a0 / a1;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (acc[i] && inst.outcomes[i].violated) w[i] *= scale;
      total += w[i];
    }
    for (std::size_t i = 0; i < n; ++i) inst.outcomes[i].probability = w[i] / total;
    // Renormalize so the sum is 1 to within the distribution's tolerance.
    double s = 0;
    for (const auto& o : inst.outcomes) s += o.probability;
    inst.outcomes.back().probability += 1.0 - s;
    if (inst.outcomes.back().probability < 0) continue;
    return inst;
  }
}

}  // namespace oracle
