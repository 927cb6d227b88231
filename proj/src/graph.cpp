#include "genshin/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace genshin {

namespace {

void require_square(const Tensor& a, const char* what) {
    if (a.rank() != 2 || a.shape()[0] != a.shape()[1]) {
        throw ShapeError(std::string(what) + ": expected a square matrix, got " + shape_str(a.shape()));
    }
}

// Constant diagonal mask with ones on zero-degree rows, or an undefined tensor if none.
Tensor zero_degree_loops(const Tensor& a) {
    const std::size_t n = a.shape()[0];
    const auto v = a.data();
    std::vector<double> loops(n * n, 0.0);
    bool any = false;
    for (std::size_t r = 0; r < n; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += v[r * n + c];
        if (total == 0.0) {
            loops[r * n + r] = 1.0;
            any = true;
        }
    }
    return any ? Tensor(Shape{n, n}, std::move(loops)) : Tensor();
}

}  // namespace

Tensor row_normalize_real(const Tensor& adjacency) {
    require_square(adjacency, "row_normalize_real");
    const std::size_t n = adjacency.shape()[0];
    std::vector<double> out(adjacency.data().begin(), adjacency.data().end());
    for (std::size_t r = 0; r < n; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (out[r * n + c] < 0.0) throw std::invalid_argument("row_normalize_real: negative adjacency entry");
            total += out[r * n + c];
        }
        if (total == 0.0) {
            out[r * n + r] = 1.0;
            total = 1.0;
        }
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= total;
    }
    return Tensor(Shape{n, n}, std::move(out));
}

void require_row_stochastic(const Tensor& a, const char* what, double tol) {
    const std::size_t cols = a.shape().back();
    const auto v = a.data();
    for (std::size_t r = 0; r * cols < v.size(); ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += v[r * cols + c];
        if (std::abs(total - 1.0) > tol) {
            throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) + " sums to " +
                                        std::to_string(total) + ", expected 1");
        }
    }
}

std::pair<Tensor, Tensor> compute_embeddings(const Tensor& w_e1, const Tensor& w_e2, const Tensor& memory) {
    if (w_e1.rank() != 2 || w_e2.shape() != w_e1.shape() || memory.rank() != 2 ||
        w_e1.shape()[1] != memory.shape()[0]) {
        throw ShapeError("compute_embeddings: association matrices " + shape_str(w_e1.shape()) + " and " +
                         shape_str(w_e2.shape()) + " do not match memory " + shape_str(memory.shape()));
    }
    return {matmul(w_e1, memory), matmul(w_e2, memory)};
}

LearnedGraphs build_learned_graphs(const Tensor& z1, const Tensor& z2, bool tied) {
    if (z1.rank() != 2 || z1.shape() != z2.shape()) {
        throw ShapeError("build_learned_graphs: embeddings " + shape_str(z1.shape()) + " and " +
                         shape_str(z2.shape()) + " differ");
    }
    Tensor raw = matmul(z1, transpose(z2, 0, 1));
    if (tied) raw = scale(add(raw, transpose(raw, 0, 1)), 0.5);
    LearnedGraphs g;
    g.score1 = relu(raw);
    g.score2 = transpose(g.score1, 0, 1);
    g.tilde1 = softmax(g.score1, -1);
    g.tilde2 = softmax(g.score2, -1);
    return g;
}

std::pair<Tensor, Tensor> fuse_with_real(const Tensor& tilde1, const Tensor& tilde2, const Tensor& a_real,
                                         const Tensor& alpha) {
    require_square(a_real, "fuse_with_real");
    if (tilde1.shape() != a_real.shape() || tilde2.shape() != a_real.shape()) {
        throw ShapeError("fuse_with_real: learned graphs " + shape_str(tilde1.shape()) + " vs real " +
                         shape_str(a_real.shape()));
    }
    if (alpha.numel() != 1) throw ShapeError("fuse_with_real: alpha must have one element");
    require_row_stochastic(a_real, "fuse_with_real: A_real is not row-normalized");
    const Tensor real_part = mul(alpha, a_real);
    const Tensor rest = 1.0 - alpha;
    return {add(real_part, mul(rest, tilde1)), add(real_part, mul(rest, tilde2))};
}

Tensor scaled_laplacian(const Tensor& a, LaplacianKind kind) {
    require_square(a, "scaled_laplacian");
    const std::size_t n = a.shape()[0];
    Tensor adj = a;
    if (kind == LaplacianKind::symmetric) adj = scale(add(a, transpose(a, 0, 1)), 0.5);
    if (Tensor loops = zero_degree_loops(adj); loops.defined()) adj = add(adj, loops);
    const Tensor degree = sum(adj, 1, true);  // N×1
    if (kind == LaplacianKind::directed) return neg(div(adj, degree));
    const Tensor inv_sqrt = div(Tensor::ones({n, 1}), sqrt(degree));
    return neg(mul(mul(inv_sqrt, adj), reshape(inv_sqrt, {1, n})));
}

std::vector<Tensor> chebyshev_supports(const Tensor& a, std::size_t order, LaplacianKind kind) {
    if (order < 1) throw std::invalid_argument("chebyshev_supports: order must be at least 1");
    const Tensor lap = scaled_laplacian(a, kind);
    std::vector<Tensor> terms{Tensor::eye(a.shape()[0]), lap};
    for (std::size_t k = 2; k <= order; ++k) {
        terms.push_back(sub(scale(matmul(lap, terms[k - 1]), 2.0), terms[k - 2]));
    }
    return terms;
}

std::vector<Tensor> GraphSet::encoder_supports() const {
    std::vector<Tensor> all = supports1;
    all.insert(all.end(), supports2.begin() + 1, supports2.end());
    return all;
}

}  // namespace genshin
