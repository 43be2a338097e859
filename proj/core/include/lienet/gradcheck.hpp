#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lienet {

inline constexpr double kGradcheckTolerance = 1e-5;
inline constexpr double kGradcheckStep = 1e-6;

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int cases = 20;  // per component
    double step = kGradcheckStep;
};

struct GradcheckResult {
    std::string component;
    int cases = 0;
    double max_rel_error = 0;

    bool passed(double tolerance = kGradcheckTolerance) const {
        return max_rel_error <= tolerance;
    }
};

// Analytic backward passes against central differences in double precision:
// every tensor primitive, DSConv for each dilation rate and variant, the
// network in each tie/skip mode, and each loss term.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options = {});

} // namespace lienet
