#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aissm/parameters.hpp"

namespace aissm {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::map<std::string, std::vector<double>> first_moment;
    std::map<std::string, std::vector<double>> second_moment;

    // Zero moments shaped like params.
    static AdamState for_parameters(const ParameterSet& params, AdamConfig config = {});
};

// Bias-corrected Adam update using each parameter's accumulated grad buffer.
// A parameter without a gradient buffer is an error naming the parameter.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace aissm
