#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rdt::checks {

// Finite-difference verification battery: every differentiable op and every
// loss combinator is rebuilt at `points` random non-degenerate inputs and its
// analytic gradient compared against f64 central differences. An entry's
// max_rel_err is the worst relative error seen across points and input
// coordinates; anything below 1e-4 is considered a pass.
//
// Non-degenerate means inputs are kept away from the few genuine kinks:
// leaky-relu/clamp inputs away from the hinge, arccos inputs away from +-1,
// norms away from zero. At those points the subgradient choice is tested
// separately by the unit suite, not by finite differences.

struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
};

std::vector<CheckResult> gradcheck_battery(uint64_t seed, int points = 100);

// Worst entry of the battery, for one-line summaries.
double worst_rel_err(const std::vector<CheckResult>& results);

}  // namespace rdt::checks
