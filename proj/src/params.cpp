#include "genshin/params.hpp"

#include <cmath>
#include <stdexcept>

namespace genshin {

namespace {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor init, bool decay) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    init.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, std::move(init), decay});
    return params_.back().value;
}

Tensor& ParamStore::add_fan_in(const std::string& name, Shape shape) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.at(0)));
    return add_uniform(name, std::move(shape), bound);
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, double bound, bool decay) {
    Rng rng = rng_for(name);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return add(name, Tensor(std::move(shape), std::move(v)), decay);
}

Tensor& ParamStore::add_normal(const std::string& name, Shape shape, double stddev, bool decay) {
    Rng rng = rng_for(name);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = stddev * rng.normal();
    return add(name, Tensor(std::move(shape), std::move(v)), decay);
}

Tensor& ParamStore::add_constant(const std::string& name, Shape shape, double value, bool decay) {
    return add(name, Tensor(std::move(shape), value), decay);
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second].value;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second].value;
}

std::size_t ParamStore::count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p.value.numel();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

Rng ParamStore::rng_for(const std::string& name) const { return Rng(splitmix(seed_ ^ splitmix(fnv1a(name)))); }

}  // namespace genshin
