#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "aissm/parameters.hpp"

namespace aissm {

struct GradCheckOptions {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    // Relative error is |analytic − numeric| / max(|analytic|, |numeric|, scale_floor),
    // so gradients at round-off level are compared absolutely.
    double scale_floor = 1e-6;
    // 0 checks every coordinate; otherwise a seeded random subset per parameter.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t coords_checked = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool passed = true;
    double max_rel_error = 0.0;
};

// Compares reverse-mode gradients of the scalar `loss` against central
// differences for every tensor in `params`. Throws if two evaluations at the
// same point disagree.
GradCheckReport grad_check(const std::function<ad::Tensor()>& loss, ParameterSet& params,
                           const GradCheckOptions& options = {});

void print_report(std::ostream& os, const std::string& title, const GradCheckReport& report);

}  // namespace aissm
