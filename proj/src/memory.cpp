#include "genshin/memory.hpp"

#include <cmath>
#include <stdexcept>

namespace genshin {

std::pair<std::size_t, std::size_t> top2(std::span<const double> row) {
    if (row.size() < 2) throw std::invalid_argument("top2: need at least 2 scores");
    std::size_t first = 0;
    std::size_t second = 1;
    if (row[1] > row[0]) std::swap(first, second);
    for (std::size_t k = 2; k < row.size(); ++k) {
        if (row[k] > row[first]) {
            second = first;
            first = k;
        } else if (row[k] > row[second]) {
            second = k;
        }
    }
    return {first, second};
}

MemoryReadout query_memory(const Tensor& h_t, const Tensor& w_q, const Tensor& memory) {
    if (memory.rank() != 2 || memory.shape()[0] < 2) {
        throw std::invalid_argument("query_memory: memory must hold at least 2 prototypes, got " +
                                    shape_str(memory.shape()));
    }
    if (h_t.rank() != 3 || w_q.rank() != 2 || h_t.shape()[2] != w_q.shape()[0] ||
        w_q.shape()[1] != memory.shape()[1]) {
        throw ShapeError("query_memory: state " + shape_str(h_t.shape()) + ", projection " + shape_str(w_q.shape()) +
                         " and memory " + shape_str(memory.shape()) + " do not conform");
    }
    const std::size_t k = memory.shape()[0];
    const double temperature = std::sqrt(static_cast<double>(memory.shape()[1]));
    MemoryReadout r;
    r.q = matmul(h_t, w_q);
    r.s = softmax(scale(matmul(r.q, transpose(memory, 0, 1)), 1.0 / temperature), -1);
    r.h_mem = matmul(r.s, memory);
    const auto scores = r.s.data();
    const std::size_t rows = scores.size() / k;
    r.pos_idx.resize(rows);
    r.neg_idx.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        std::tie(r.pos_idx[i], r.neg_idx[i]) = top2(scores.subspan(i * k, k));
    }
    return r;
}

}  // namespace genshin
