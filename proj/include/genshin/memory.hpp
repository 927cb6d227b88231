#pragma once

#include "genshin/tensor.hpp"

#include <span>
#include <utility>
#include <vector>

namespace genshin {

struct MemoryReadout {
    Tensor q;      // B×N×d_m
    Tensor s;      // B×N×K attention scores
    Tensor h_mem;  // B×N×d_m
    std::vector<std::size_t> pos_idx;  // B·N, top-1 prototype per (b, n)
    std::vector<std::size_t> neg_idx;  // B·N, top-2 prototype
};

/// Largest and second-largest entries; equal scores go to the lower index.
std::pair<std::size_t, std::size_t> top2(std::span<const double> row);

/// Q = H_t·W_q, S = softmax(Q Mᵀ / sqrt(d_m)), H_mem = S·M.
MemoryReadout query_memory(const Tensor& h_t, const Tensor& w_q, const Tensor& memory);

}  // namespace genshin
