#include "aissm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "aissm/errors.hpp"

namespace aissm {

namespace {

double evaluate(const std::function<ad::Tensor()>& loss) {
    ad::NoGradGuard guard;
    return loss().item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (limit == 0 || limit >= n) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<ad::Tensor()>& loss, ParameterSet& params,
                           const GradCheckOptions& options) {
    if (options.epsilon < 1e-7 || options.epsilon > 1e-3) {
        throw ConfigError("grad_check: epsilon must lie in [1e-7, 1e-3]");
    }
    params.zero_grad();
    const ad::Tensor root = loss();
    const double base = root.item();
    const double again = evaluate(loss);
    if (base != again) {
        throw Error("grad_check: function is not deterministic (" + std::to_string(base) + " vs " +
                    std::to_string(again) + ")");
    }
    root.backward();

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (auto& [name, param] : params) {
        GradCheckEntry entry;
        entry.name = name;
        std::vector<double> analytic = param.has_grad()
                                           ? std::vector<double>(param.grad().begin(), param.grad().end())
                                           : std::vector<double>(param.numel(), 0.0);
        auto values = param.mutable_data();
        for (std::size_t i : pick_coords(param.numel(), options.max_coords_per_param, rng)) {
            const double original = values[i];
            values[i] = original + options.epsilon;
            const double up = evaluate(loss);
            values[i] = original - options.epsilon;
            const double down = evaluate(loss);
            values[i] = original;
            const double numeric = (up - down) / (2.0 * options.epsilon);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.scale_floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
            entry.coords_checked += 1;
        }
        entry.passed = entry.max_rel_error < options.tolerance;
        report.passed = report.passed && entry.passed;
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    params.zero_grad();
    return report;
}

void print_report(std::ostream& os, const std::string& title, const GradCheckReport& report) {
    char line[256];
    os << title << (report.passed ? "  PASS" : "  FAIL") << '\n';
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof line, "  %-36s coords=%-6zu max_rel=%.3e max_abs=%.3e %s\n", e.name.c_str(),
                      e.coords_checked, e.max_rel_error, e.max_abs_error, e.passed ? "ok" : "FAIL");
        os << line;
    }
}

}  // namespace aissm
