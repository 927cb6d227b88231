#pragma once

#include "genshin/config.hpp"
#include "genshin/params.hpp"
#include "genshin/rng.hpp"
#include "genshin/tensor.hpp"

#include <string>
#include <vector>

namespace genshin {

struct GcruWeights {
    Tensor wz, wr, wh;  // (S·(F_in+H)) × H
    Tensor bz, br, bh;  // H
};

void add_gcru_params(ParamStore& store, const std::string& prefix, std::size_t in_width, std::size_t hidden,
                     std::size_t n_supports);
GcruWeights gcru_weights(const ParamStore& store, const std::string& prefix);

struct GcruStep {
    Tensor h;          // new state
    Tensor z;          // update gate
    Tensor r;          // reset gate
    Tensor candidate;  // ĥ
};

/// One GCRU step. x: B×N×F_in, h_prev: B×N×H.
GcruStep gcru_cell(const Tensor& x, const Tensor& h_prev, const std::vector<Tensor>& supports, const GcruWeights& w);

struct TransformerWeights {
    Tensor wq, bq, wk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor w1, b1, w2, b2;
    Tensor ln2_g, ln2_b;
};

void add_transformer_params(ParamStore& store, const std::string& prefix, std::size_t hidden, std::size_t ffn);
TransformerWeights transformer_weights(const ParamStore& store, const std::string& prefix);

/// Sinusoidal encoding, T×H.
Tensor positional_encoding(std::size_t steps, std::size_t hidden);

/// Post-norm encoder layer over x: S×T×H. When `attention` is non-null the
/// S×heads×T×T weights are stored there.
Tensor transformer_layer(const Tensor& x, const TransformerWeights& w, std::size_t n_heads, double dropout_rate,
                         bool train, Rng& rng, Tensor* attention = nullptr);

struct EncoderOutput {
    Tensor h_gcru;                     // B×T×N×H top-layer states
    Tensor h_t;                        // B×N×H encoding
    std::vector<Tensor> final_states;  // per layer, B×N×H at the last step
    std::vector<Tensor> attention;     // per Transformer layer, (B·N)×heads×T×T
};

/// Registers encoder parameters under "enc.".
void add_encoder_params(ParamStore& store, const ModelConfig& cfg, std::size_t n_supports);

/// X: B×T×N×C.
EncoderOutput encode(const Tensor& x, const std::vector<Tensor>& supports, const ParamStore& store,
                     const ModelConfig& cfg, bool train, Rng& rng, bool keep_attention = false);

}  // namespace genshin
