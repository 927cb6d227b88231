#include "genshin/decoder.hpp"

#include "genshin/encoder.hpp"
#include "genshin/graph.hpp"

#include <stdexcept>

namespace genshin {

UpdaterWeights updater_weights(const ParamStore& store, double eta) {
    return {store.get("upd.w1"), store.get("upd.b1"), store.get("upd.wu"), store.get("upd.wv"), eta};
}

Tensor update_graph(const Tensor& h_prev, const Tensor& h_mem, const Tensor& a_prev, const UpdaterWeights& w) {
    const Tensor features = h_mem.defined() ? concat({h_prev, h_mem}, -1) : h_prev;
    const Tensor hidden = tanh(add(matmul(features, w.w1), w.b1));  // B×N×U
    const Tensor pooled = mean(hidden, 0);                           // N×U
    const Tensor u = matmul(pooled, w.wu);
    const Tensor v = matmul(pooled, w.wv);
    const Tensor delta = scale(relu(matmul(u, transpose(v, 0, 1))), w.eta);
    if (delta.shape() != a_prev.shape()) {
        throw ShapeError("update_graph: update " + shape_str(delta.shape()) + " vs graph " + shape_str(a_prev.shape()));
    }
    return div(add(a_prev, delta), add_scalar(sum(delta, 1, true), 1.0));
}

void add_decoder_params(ParamStore& store, const ModelConfig& cfg, std::size_t n_supports) {
    const bool memory = !cfg.ablation.no_memory;
    for (std::size_t l = 0; l < cfg.gcru_layers; ++l) {
        const std::size_t in_width = l == 0 ? cfg.in_channels + (memory ? cfg.proto_dim : 0) : cfg.hidden_dim;
        add_gcru_params(store, "dec.gcru" + std::to_string(l), in_width, cfg.hidden_dim, n_supports);
    }
    store.add_fan_in("dec.out.w", {cfg.hidden_dim, cfg.in_channels});
    store.add_constant("dec.out.b", {cfg.in_channels}, 0.0);
    if (cfg.ablation.static_graph) return;
    const std::size_t feature_width = cfg.hidden_dim + (memory ? cfg.proto_dim : 0);
    store.add_fan_in("upd.w1", {feature_width, cfg.updater_hidden});
    store.add_constant("upd.b1", {cfg.updater_hidden}, 0.0);
    store.add_fan_in("upd.wu", {cfg.updater_hidden, cfg.updater_dim});
    store.add_fan_in("upd.wv", {cfg.updater_hidden, cfg.updater_dim});
}

DecodeOutput decode(const DecodeInputs& in, const ParamStore& store, const ModelConfig& cfg, std::size_t horizon,
                    Rng& rng, bool keep_graphs) {
    if (horizon == 0) throw std::invalid_argument("decode: horizon must be at least 1");
    if (in.tf_prob < 0.0 || in.tf_prob > 1.0) throw std::invalid_argument("decode: tf_prob must be in [0, 1]");
    if (in.tf_prob > 0.0 && !in.teacher) throw std::invalid_argument("decode: teacher forcing needs targets");
    if (in.encoder_states.size() != cfg.gcru_layers) {
        throw std::invalid_argument("decode: expected one encoder state per GCRU layer");
    }
    const std::size_t batch = in.h_t.shape()[0];
    const std::size_t nodes = in.h_t.shape()[1];
    const std::size_t channels = cfg.in_channels;

    std::vector<Tensor> h = in.encoder_states;
    h.back() = in.h_t;
    std::vector<GcruWeights> layers;
    for (std::size_t l = 0; l < cfg.gcru_layers; ++l) layers.push_back(gcru_weights(store, "dec.gcru" + std::to_string(l)));
    const Tensor& w_out = store.get("dec.out.w");
    const Tensor& b_out = store.get("dec.out.b");
    const bool dynamic = !cfg.ablation.static_graph;
    UpdaterWeights upd;
    if (dynamic) upd = updater_weights(store, cfg.updater_eta);

    Tensor graph = in.a_init;
    std::vector<Tensor> supports = chebyshev_supports(graph, cfg.cheb_order, cfg.laplacian);
    Tensor frame = Tensor::zeros({batch, nodes, channels});
    DecodeOutput out;
    std::vector<Tensor> frames;
    for (std::size_t t = 0; t < horizon; ++t) {
        if (dynamic) {
            graph = update_graph(h.back(), in.h_mem, graph, upd);
            supports = chebyshev_supports(graph, cfg.cheb_order, cfg.laplacian);
        }
        if (keep_graphs) out.graphs.push_back(graph);

        Tensor input = in.h_mem.defined() ? concat({frame, in.h_mem}, -1) : frame;
        for (std::size_t l = 0; l < cfg.gcru_layers; ++l) {
            h[l] = gcru_cell(input, h[l], supports, layers[l]).h;
            input = h[l];
        }
        const Tensor y = add(matmul(h.back(), w_out), b_out);  // B×N×C
        frames.push_back(reshape(y, {batch, 1, nodes, channels}));

        bool use_truth = in.tf_prob >= 1.0;
        if (in.tf_prob > 0.0 && in.tf_prob < 1.0) use_truth = rng.uniform() < in.tf_prob;
        frame = use_truth ? reshape(slice(*in.teacher, 1, t, 1), {batch, nodes, channels}) : y;
    }
    out.y_hat = concat(frames, 1);
    return out;
}

}  // namespace genshin
