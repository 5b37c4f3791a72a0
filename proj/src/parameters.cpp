#include "aissm/parameters.hpp"

#include <cmath>

#include "aissm/errors.hpp"

namespace aissm {

ad::Tensor& ParameterSet::add(const std::string& name, ad::Tensor tensor) {
    if (!tensor.requires_grad()) tensor = ad::Tensor::from(tensor.shape(), tensor.to_vector(), true);
    auto [it, inserted] = params_.emplace(name, std::move(tensor));
    if (!inserted) throw ConfigError("duplicate parameter '" + name + "'");
    return it->second;
}

ad::Tensor& ParameterSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

const ad::Tensor& ParameterSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParameterSet::count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
}

ParameterSet ParameterSet::subset(const std::string& prefix) const {
    return subset_if([&](const std::string& name) { return name.rfind(prefix, 0) == 0; });
}

ParameterSet ParameterSet::subset_if(const std::function<bool(const std::string&)>& keep) const {
    ParameterSet out;
    for (const auto& [name, t] : params_) {
        if (keep(name)) out.params_.emplace(name, t);
    }
    return out;
}

void ParameterSet::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

namespace init {

void kaiming_uniform(ad::Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.mutable_data()) v = dist(rng);
}

void orthogonal_blocks(ad::Tensor& t, std::size_t block_rows, std::mt19937_64& rng) {
    if (t.rank() != 2 || t.dim(0) % block_rows != 0) {
        throw ShapeError("orthogonal_blocks: " + ad::shape_str(t.shape()) + " is not a stack of " +
                         std::to_string(block_rows) + "-row blocks");
    }
    const std::size_t cols = t.dim(1);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto data = t.mutable_data();
    for (std::size_t b = 0; b < t.dim(0) / block_rows; ++b) {
        double* block = data.data() + b * block_rows * cols;
        for (std::size_t i = 0; i < block_rows * cols; ++i) block[i] = normal(rng);
        // Modified Gram–Schmidt on rows.
        for (std::size_t r = 0; r < block_rows; ++r) {
            double* row = block + r * cols;
            for (std::size_t q = 0; q < r && q < cols; ++q) {
                const double* prev = block + q * cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += row[c] * prev[c];
                for (std::size_t c = 0; c < cols; ++c) row[c] -= dot * prev[c];
            }
            double norm = 0.0;
            for (std::size_t c = 0; c < cols; ++c) norm += row[c] * row[c];
            norm = std::sqrt(norm);
            if (norm > 1e-12) {
                for (std::size_t c = 0; c < cols; ++c) row[c] /= norm;
            }
        }
    }
}

}  // namespace init

}  // namespace aissm
