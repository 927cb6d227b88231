#pragma once

#include "genshin/rng.hpp"
#include "genshin/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace genshin {

struct Parameter {
    std::string name;
    Tensor value;
    bool decay = true;  // subject to decoupled weight decay
};

/// Named, ordered collection of trainable leaves.
///
/// Each parameter draws its initial values from its own generator, seeded
/// from the model seed and the parameter name, so variants that add or drop
/// parameters still agree on every parameter they share.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor& add(const std::string& name, Tensor init, bool decay = true);
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = shape[0].
    Tensor& add_fan_in(const std::string& name, Shape shape);
    Tensor& add_uniform(const std::string& name, Shape shape, double bound, bool decay = true);
    Tensor& add_normal(const std::string& name, Shape shape, double stddev, bool decay = true);
    Tensor& add_constant(const std::string& name, Shape shape, double value, bool decay = false);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }
    /// Total number of scalar parameters.
    std::size_t count() const;

    void zero_grad();
    /// Generator for `name`, independent of creation order.
    Rng rng_for(const std::string& name) const;

private:
    std::uint64_t seed_;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace genshin
