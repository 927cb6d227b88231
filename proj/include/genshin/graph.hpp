#pragma once

#include "genshin/config.hpp"
#include "genshin/tensor.hpp"

#include <utility>
#include <vector>

namespace genshin {

/// Row-normalizes a nonnegative adjacency. Rows summing to zero receive a
/// self-loop first. The result carries no gradient history.
Tensor row_normalize_real(const Tensor& adjacency);

/// Throws std::invalid_argument unless every row of `a` sums to 1 within `tol`.
void require_row_stochastic(const Tensor& a, const char* what, double tol = 1e-9);

/// Z1 = W_e1·M, Z2 = W_e2·M.
std::pair<Tensor, Tensor> compute_embeddings(const Tensor& w_e1, const Tensor& w_e2, const Tensor& memory);

struct LearnedGraphs {
    Tensor score1;  // ReLU(Z1 Z2ᵀ)
    Tensor score2;  // ReLU(Z2 Z1ᵀ) == score1ᵀ
    Tensor tilde1;  // row softmax of score1
    Tensor tilde2;
};

/// With `tied` the embeddings are the same matrix and the score is made
/// exactly symmetric.
LearnedGraphs build_learned_graphs(const Tensor& z1, const Tensor& z2, bool tied = false);

/// A_i = alpha·A_real + (1-alpha)·Ã_i. `alpha` is a one-element tensor.
std::pair<Tensor, Tensor> fuse_with_real(const Tensor& tilde1, const Tensor& tilde2, const Tensor& a_real,
                                         const Tensor& alpha);

/// Rescaled Laplacian L̃ with λmax fixed at 2. Zero-degree rows get a self-loop.
Tensor scaled_laplacian(const Tensor& a, LaplacianKind kind);

/// [T_0, ..., T_order] of the rescaled Laplacian of `a`.
std::vector<Tensor> chebyshev_supports(const Tensor& a, std::size_t order, LaplacianKind kind = LaplacianKind::directed);

struct GraphSet {
    Tensor a_real;  // row-normalized
    LearnedGraphs learned;
    Tensor alpha;
    Tensor a1;
    Tensor a2;
    std::vector<Tensor> supports1;
    std::vector<Tensor> supports2;

    /// supports1 followed by supports2 without its identity term, the
    /// encoder's support list.
    std::vector<Tensor> encoder_supports() const;
};

}  // namespace genshin
