#include "aissm/adam.hpp"

#include <cmath>

#include "aissm/errors.hpp"

namespace aissm {

AdamState AdamState::for_parameters(const ParameterSet& params, AdamConfig config) {
    AdamState state;
    state.config = config;
    for (const auto& [name, t] : params) {
        state.first_moment.emplace(name, std::vector<double>(t.numel(), 0.0));
        state.second_moment.emplace(name, std::vector<double>(t.numel(), 0.0));
    }
    return state;
}

void adam_step(ParameterSet& params, AdamState& state) {
    for (auto& [name, t] : params) {
        if (!t.has_grad()) throw Error("adam_step: missing gradient for parameter '" + name + "'");
        auto m = state.first_moment.find(name);
        auto v = state.second_moment.find(name);
        if (m == state.first_moment.end() || v == state.second_moment.end() ||
            m->second.size() != t.numel() || v->second.size() != t.numel()) {
            throw ShapeError("adam_step: optimizer state does not match parameter '" + name + "'");
        }
    }

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    for (auto& [name, param] : params) {
        auto values = param.mutable_data();
        const auto grads = param.grad();
        auto& m = state.first_moment[name];
        auto& v = state.second_moment[name];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grads[i];
            if (g == 0.0 && m[i] == 0.0 && v[i] == 0.0) continue;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            values[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

}  // namespace aissm
