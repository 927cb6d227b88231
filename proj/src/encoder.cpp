#include "genshin/encoder.hpp"

#include <cmath>

namespace genshin {

void add_gcru_params(ParamStore& store, const std::string& prefix, std::size_t in_width, std::size_t hidden,
                     std::size_t n_supports) {
    // Fan-in counts one support block: the blocks act on correlated aggregates.
    const std::size_t rows = n_supports * (in_width + hidden);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_width + hidden));
    store.add_uniform(prefix + ".wz", {rows, hidden}, bound);
    store.add_uniform(prefix + ".wr", {rows, hidden}, bound);
    store.add_uniform(prefix + ".wh", {rows, hidden}, bound);
    store.add_constant(prefix + ".bz", {hidden}, 0.0);
    store.add_constant(prefix + ".br", {hidden}, 0.0);
    store.add_constant(prefix + ".bh", {hidden}, 0.0);
}

GcruWeights gcru_weights(const ParamStore& store, const std::string& prefix) {
    return {store.get(prefix + ".wz"), store.get(prefix + ".wr"), store.get(prefix + ".wh"),
            store.get(prefix + ".bz"), store.get(prefix + ".br"), store.get(prefix + ".bh")};
}

GcruStep gcru_cell(const Tensor& x, const Tensor& h_prev, const std::vector<Tensor>& supports, const GcruWeights& w) {
    if (x.rank() != 3 || h_prev.rank() != 3 || x.shape()[0] != h_prev.shape()[0] ||
        x.shape()[1] != h_prev.shape()[1]) {
        throw ShapeError("gcru_cell: input " + shape_str(x.shape()) + " and state " + shape_str(h_prev.shape()) +
                         " do not conform");
    }
    const std::size_t hidden = h_prev.shape()[2];
    const Tensor xh = concat({x, h_prev}, -1);
    const Tensor gates =
        sigmoid(add(graph_conv(xh, supports, concat({w.wz, w.wr}, 1)), concat({w.bz, w.br}, 0)));
    GcruStep step;
    step.z = slice(gates, -1, 0, hidden);
    step.r = slice(gates, -1, hidden, hidden);
    const Tensor xrh = concat({x, mul(step.r, h_prev)}, -1);
    step.candidate = tanh(add(graph_conv(xrh, supports, w.wh), w.bh));
    step.h = add(mul(step.z, h_prev), mul(1.0 - step.z, step.candidate));
    return step;
}

void add_transformer_params(ParamStore& store, const std::string& prefix, std::size_t hidden, std::size_t ffn) {
    // No key bias: softmax over keys cancels it exactly.
    for (const char* p : {"q", "k", "v", "o"}) store.add_fan_in(prefix + ".w" + p, {hidden, hidden});
    for (const char* p : {"q", "v", "o"}) store.add_constant(prefix + ".b" + p, {hidden}, 0.0);
    store.add_constant(prefix + ".ln1.g", {hidden}, 1.0);
    store.add_constant(prefix + ".ln1.b", {hidden}, 0.0);
    store.add_fan_in(prefix + ".ff.w1", {hidden, ffn});
    store.add_constant(prefix + ".ff.b1", {ffn}, 0.0);
    store.add_fan_in(prefix + ".ff.w2", {ffn, hidden});
    store.add_constant(prefix + ".ff.b2", {hidden}, 0.0);
    store.add_constant(prefix + ".ln2.g", {hidden}, 1.0);
    store.add_constant(prefix + ".ln2.b", {hidden}, 0.0);
}

TransformerWeights transformer_weights(const ParamStore& s, const std::string& p) {
    return {s.get(p + ".wq"),    s.get(p + ".bq"),    s.get(p + ".wk"),
            s.get(p + ".wv"),    s.get(p + ".bv"),    s.get(p + ".wo"),    s.get(p + ".bo"),
            s.get(p + ".ln1.g"), s.get(p + ".ln1.b"), s.get(p + ".ff.w1"), s.get(p + ".ff.b1"),
            s.get(p + ".ff.w2"), s.get(p + ".ff.b2"), s.get(p + ".ln2.g"), s.get(p + ".ln2.b")};
}

Tensor positional_encoding(std::size_t steps, std::size_t hidden) {
    std::vector<double> pe(steps * hidden);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < hidden; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(hidden));
            const double angle = static_cast<double>(t) * freq;
            pe[t * hidden + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor(Shape{steps, hidden}, std::move(pe));
}

Tensor transformer_layer(const Tensor& x, const TransformerWeights& w, std::size_t n_heads, double dropout_rate,
                         bool train, Rng& rng, Tensor* attention) {
    const std::size_t seqs = x.shape()[0];
    const std::size_t steps = x.shape()[1];
    const std::size_t hidden = x.shape()[2];
    const std::size_t head_dim = hidden / n_heads;

    auto heads = [&](const Tensor& t) {
        return transpose(reshape(t, {seqs, steps, n_heads, head_dim}), 1, 2);  // S×h×T×d
    };
    const Tensor q = heads(add(matmul(x, w.wq), w.bq));
    const Tensor k = heads(matmul(x, w.wk));
    const Tensor v = heads(add(matmul(x, w.wv), w.bv));
    const Tensor scores = scale(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    const Tensor weights = softmax(scores, -1);
    if (attention) *attention = weights;
    const Tensor context = reshape(transpose(matmul(weights, v), 1, 2), {seqs, steps, hidden});
    const Tensor attended = add(matmul(context, w.wo), w.bo);

    const Tensor x1 = layer_norm(add(x, dropout(attended, dropout_rate, train, rng)), w.ln1_g, w.ln1_b);
    const Tensor ff = add(matmul(relu(add(matmul(x1, w.w1), w.b1)), w.w2), w.b2);
    return layer_norm(add(x1, dropout(ff, dropout_rate, train, rng)), w.ln2_g, w.ln2_b);
}

void add_encoder_params(ParamStore& store, const ModelConfig& cfg, std::size_t n_supports) {
    for (std::size_t l = 0; l < cfg.gcru_layers; ++l) {
        const std::size_t in_width = l == 0 ? cfg.in_channels : cfg.hidden_dim;
        add_gcru_params(store, "enc.gcru" + std::to_string(l), in_width, cfg.hidden_dim, n_supports);
    }
    if (cfg.ablation.no_transformer) return;
    for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
        add_transformer_params(store, "enc.tf" + std::to_string(l), cfg.hidden_dim, cfg.effective_ffn_dim());
    }
}

EncoderOutput encode(const Tensor& x, const std::vector<Tensor>& supports, const ParamStore& store,
                     const ModelConfig& cfg, bool train, Rng& rng, bool keep_attention) {
    if (x.rank() != 4) throw ShapeError("encode: expected B×T×N×C input, got " + shape_str(x.shape()));
    const std::size_t batch = x.shape()[0];
    const std::size_t steps = x.shape()[1];
    const std::size_t nodes = x.shape()[2];
    const std::size_t channels = x.shape()[3];
    const std::size_t hidden = cfg.hidden_dim;
    if (channels != cfg.in_channels) {
        throw ShapeError("encode: input has " + std::to_string(channels) + " channels, model expects " +
                         std::to_string(cfg.in_channels));
    }

    std::vector<Tensor> sequence(steps);
    for (std::size_t t = 0; t < steps; ++t) sequence[t] = reshape(slice(x, 1, t, 1), {batch, nodes, channels});

    EncoderOutput out;
    for (std::size_t l = 0; l < cfg.gcru_layers; ++l) {
        const GcruWeights w = gcru_weights(store, "enc.gcru" + std::to_string(l));
        Tensor h = Tensor::zeros({batch, nodes, hidden});
        for (std::size_t t = 0; t < steps; ++t) {
            h = gcru_cell(sequence[t], h, supports, w).h;
            sequence[t] = h;
        }
        out.final_states.push_back(h);
    }

    std::vector<Tensor> frames;
    frames.reserve(steps);
    for (const auto& h : sequence) frames.push_back(reshape(h, {batch, 1, nodes, hidden}));
    out.h_gcru = concat(frames, 1);

    if (cfg.ablation.no_transformer) {
        out.h_t = out.final_states.back();
        return out;
    }

    // Temporal attention independently per node: (B·N)×T×H.
    Tensor seq = reshape(transpose(out.h_gcru, 1, 2), {batch * nodes, steps, hidden});
    seq = add(seq, positional_encoding(steps, hidden));
    for (std::size_t l = 0; l < cfg.transformer_layers; ++l) {
        Tensor attn;
        seq = transformer_layer(seq, transformer_weights(store, "enc.tf" + std::to_string(l)), cfg.n_heads,
                                cfg.dropout, train, rng, keep_attention ? &attn : nullptr);
        if (keep_attention) out.attention.push_back(attn);
    }
    out.h_t = reshape(slice(seq, 1, steps - 1, 1), {batch, nodes, hidden});
    return out;
}

}  // namespace genshin
