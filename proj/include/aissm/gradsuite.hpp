#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aissm/gradcheck.hpp"
#include "aissm/model.hpp"

namespace aissm {

struct SuiteOptions {
    std::size_t seeds = 20;
    std::uint64_t first_seed = 1;
    GradCheckOptions check;
};

struct SuiteResult {
    std::string name;
    std::size_t seeds = 0;
    // Per-parameter maximum over seeds.
    GradCheckReport report;
};

// A model small enough for exhaustive finite differences.
ModelConfig tiny_model_config(Arch arch);

// Every primitive, then the assembled AISSM step (relaxed sampling, all five
// groups; argmax sampling, head and confidence) and both baselines.
std::vector<SuiteResult> run_gradient_suite(const SuiteOptions& options = {});

bool suite_passed(const std::vector<SuiteResult>& results);
void print_suite(std::ostream& os, const std::vector<SuiteResult>& results);

}  // namespace aissm
