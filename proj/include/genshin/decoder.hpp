#pragma once

#include "genshin/config.hpp"
#include "genshin/params.hpp"
#include "genshin/rng.hpp"
#include "genshin/tensor.hpp"

#include <vector>

namespace genshin {

struct UpdaterWeights {
    Tensor w1, b1;  // (H [+ d_m]) × U, U
    Tensor wu, wv;  // U × d_g
    double eta = 0.1;
};

UpdaterWeights updater_weights(const ParamStore& store, double eta);

/// ΔA = eta·ReLU(U Vᵀ) from batch-averaged per-node factors;
/// A_t = (A_prev + ΔA) / (1 + rowsum(ΔA)). `h_mem` may be undefined.
Tensor update_graph(const Tensor& h_prev, const Tensor& h_mem, const Tensor& a_prev, const UpdaterWeights& w);

/// Registers decoder parameters under "dec." and, unless the graph is static, "upd.".
void add_decoder_params(ParamStore& store, const ModelConfig& cfg, std::size_t n_supports);

struct DecodeInputs {
    Tensor h_t;                           // B×N×H
    Tensor h_mem;                         // B×N×d_m, undefined without memory
    std::vector<Tensor> encoder_states;   // per layer, B×N×H
    Tensor a_init;                        // N×N row-stochastic seed graph
    const Tensor* teacher = nullptr;      // B×τ×N×C normalized targets
    double tf_prob = 0.0;
};

struct DecodeOutput {
    Tensor y_hat;                   // B×τ×N×C
    std::vector<Tensor> graphs;     // A_t per step, kept when requested
};

DecodeOutput decode(const DecodeInputs& in, const ParamStore& store, const ModelConfig& cfg, std::size_t horizon,
                    Rng& rng, bool keep_graphs = false);

}  // namespace genshin
