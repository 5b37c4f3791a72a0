#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "aissm/tensor.hpp"

namespace aissm {

// Named trainable tensors, iterated lexicographically by path.
class ParameterSet {
public:
    using Map = std::map<std::string, ad::Tensor>;

    // Registers a leaf tensor with requires_grad set; names must be unique.
    ad::Tensor& add(const std::string& name, ad::Tensor tensor);

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    ad::Tensor& at(const std::string& name);
    const ad::Tensor& at(const std::string& name) const;

    std::size_t size() const { return params_.size(); }
    std::size_t count() const;

    // Parameters whose path starts with prefix; tensors are shared, not copied.
    ParameterSet subset(const std::string& prefix) const;
    ParameterSet subset_if(const std::function<bool(const std::string&)>& keep) const;

    void zero_grad();

    Map::iterator begin() { return params_.begin(); }
    Map::iterator end() { return params_.end(); }
    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }

private:
    Map params_;
};

namespace init {

// U(−√(6/fan_in), √(6/fan_in)).
void kaiming_uniform(ad::Tensor& t, std::size_t fan_in, std::mt19937_64& rng);
// Each stacked [rows, cols] block with rows == cols becomes orthogonal.
void orthogonal_blocks(ad::Tensor& t, std::size_t block_rows, std::mt19937_64& rng);

}  // namespace init

}  // namespace aissm
