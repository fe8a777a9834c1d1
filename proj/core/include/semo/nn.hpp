#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "semo/graph.hpp"
#include "semo/rng.hpp"
#include "semo/tensor.hpp"

namespace semo {

template <typename T>
Tensor<T> randn_tensor(std::vector<int> shape, RngStream& rng, T stddev) {
    Tensor<T> t(std::move(shape));
    for (auto& x : t.data) x = static_cast<T>(rng.normal()) * stddev;
    return t;
}

template <typename T>
struct Linear {
    Parameter<T> w;  // [in, out]
    Parameter<T> b;  // [1, out]

    void init(const std::string& name, int in, int out, RngStream& rng, bool zero = false) {
        T std = zero ? T(0) : static_cast<T>(1.0 / std::sqrt(static_cast<double>(in)));
        w = Parameter<T>(name + ".w", randn_tensor<T>({in, out}, rng, std));
        b = Parameter<T>(name + ".b", Tensor<T>({1, out}));
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x) {
        return g.add_row(g.matmul(x, g.param(w)), g.param(b));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct LayerNormParams {
    Parameter<T> gain, bias;

    void init(const std::string& name, int dim) {
        gain = Parameter<T>(name + ".gain", Tensor<T>::full({1, dim}, T(1)));
        bias = Parameter<T>(name + ".bias", Tensor<T>({1, dim}));
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x) {
        return g.layernorm(x, g.param(gain), g.param(bias));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

template <typename T>
struct Mlp {
    Linear<T> fc1, fc2;

    void init(const std::string& name, int dim, int hidden, RngStream& rng) {
        fc1.init(name + ".fc1", dim, hidden, rng);
        fc2.init(name + ".fc2", hidden, dim, rng);
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x) {
        return fc2.forward(g, g.gelu(fc1.forward(g, x)));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        fc1.collect(out);
        fc2.collect(out);
    }
};

template <typename T>
struct SelfAttention {
    Linear<T> wq, wk, wv, wo;
    int heads = 1;

    void init(const std::string& name, int dim, int n_heads, RngStream& rng) {
        heads = n_heads;
        wq.init(name + ".q", dim, dim, rng);
        wk.init(name + ".k", dim, dim, rng);
        wv.init(name + ".v", dim, dim, rng);
        wo.init(name + ".o", dim, dim, rng);
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x,
                                   AttentionCapture<T>* cap = nullptr) {
        auto a = g.attention(wq.forward(g, x), wk.forward(g, x), wv.forward(g, x), heads, cap);
        return wo.forward(g, a);
    }
    void collect(std::vector<Parameter<T>*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

// Queries from x, keys/values from a context sequence.
template <typename T>
struct CrossAttention {
    Linear<T> wq, wk, wv, wo;
    int heads = 1;

    void init(const std::string& name, int dim, int n_heads, RngStream& rng) {
        heads = n_heads;
        wq.init(name + ".q", dim, dim, rng);
        wk.init(name + ".k", dim, dim, rng);
        wv.init(name + ".v", dim, dim, rng);
        wo.init(name + ".o", dim, dim, rng);
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x,
                                   typename Graph<T>::Ref ctx,
                                   AttentionCapture<T>* cap = nullptr) {
        auto a = g.attention(wq.forward(g, x), wk.forward(g, ctx), wv.forward(g, ctx), heads, cap);
        return wo.forward(g, a);
    }
    void collect(std::vector<Parameter<T>*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

// Pre-norm ViT encoder block: x + attn(ln(x)), then x + mlp(ln(x)).
template <typename T>
struct ViTBlock {
    LayerNormParams<T> ln1, ln2;
    SelfAttention<T> attn;
    Mlp<T> mlp;

    void init(const std::string& name, int dim, int heads, RngStream& rng) {
        ln1.init(name + ".ln1", dim);
        ln2.init(name + ".ln2", dim);
        attn.init(name + ".attn", dim, heads, rng);
        mlp.init(name + ".mlp", dim, dim * 4, rng);
    }
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x,
                                   AttentionCapture<T>* cap = nullptr) {
        x = g.add(x, attn.forward(g, ln1.forward(g, x), cap));
        return g.add(x, mlp.forward(g, ln2.forward(g, x)));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        ln1.collect(out);
        ln2.collect(out);
        attn.collect(out);
        mlp.collect(out);
    }
};

// DiT block with adaLN-zero conditioning: the time embedding produces
// shift/scale/gate for the attention and MLP branches. Gates start at
// zero so a freshly initialized block is the identity.
template <typename T>
struct DiTBlock {
    SelfAttention<T> attn;
    Mlp<T> mlp;
    Linear<T> modulation;  // time_dim -> 6*dim
    int dim = 0;

    void init(const std::string& name, int d, int heads, int time_dim, RngStream& rng) {
        dim = d;
        attn.init(name + ".attn", d, heads, rng);
        mlp.init(name + ".mlp", d, d * 4, rng);
        modulation.init(name + ".mod", time_dim, 6 * d, rng, /*zero=*/true);
    }

    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x,
                                   typename Graph<T>::Ref time_emb,
                                   AttentionCapture<T>* cap = nullptr) {
        auto mod = modulation.forward(g, g.silu(time_emb));  // [1, 6*dim]
        auto shift_a = g.slice_cols(mod, 0 * dim, dim);
        auto scale_a = g.slice_cols(mod, 1 * dim, dim);
        auto gate_a = g.slice_cols(mod, 2 * dim, dim);
        auto shift_m = g.slice_cols(mod, 3 * dim, dim);
        auto scale_m = g.slice_cols(mod, 4 * dim, dim);
        auto gate_m = g.slice_cols(mod, 5 * dim, dim);

        auto h = modulate(g, g.layernorm_plain(x), shift_a, scale_a);
        x = g.add(x, g.mul_row(attn.forward(g, h, cap), gate_a));
        auto h2 = modulate(g, g.layernorm_plain(x), shift_m, scale_m);
        return g.add(x, g.mul_row(mlp.forward(g, h2), gate_m));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        attn.collect(out);
        mlp.collect(out);
        modulation.collect(out);
    }

    static typename Graph<T>::Ref modulate(Graph<T>& g, typename Graph<T>::Ref x,
                                           typename Graph<T>::Ref shift,
                                           typename Graph<T>::Ref scale) {
        auto one = g.constant(Tensor<T>::full(g.val(scale).shape, T(1)));
        return g.add_row(g.mul_row(x, g.add(scale, one)), shift);
    }
};

// Sinusoidal embedding of a scalar time value into [1, dim].
template <typename T>
Tensor<T> sinusoidal_time_embed(T time, int dim, T max_period = T(10000)) {
    Tensor<T> out({1, dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        T freq = std::exp(-std::log(max_period) * static_cast<T>(i) / static_cast<T>(half));
        out.data[static_cast<std::size_t>(i)] = std::cos(time * freq);
        out.data[static_cast<std::size_t>(half + i)] = std::sin(time * freq);
    }
    if (dim % 2) out.data[static_cast<std::size_t>(dim - 1)] = time;
    return out;
}

// Shared time-conditioning trunk: sinusoid -> mlp -> embedding.
template <typename T>
struct TimeEmbed {
    Linear<T> fc1, fc2;
    int dim = 0;

    void init(const std::string& name, int d, RngStream& rng) {
        dim = d;
        fc1.init(name + ".fc1", d, d, rng);
        fc2.init(name + ".fc2", d, d, rng);
    }
    typename Graph<T>::Ref forward(Graph<T>& g, T time) {
        auto t = g.constant(sinusoidal_time_embed<T>(time, dim));
        return fc2.forward(g, g.silu(fc1.forward(g, t)));
    }
    void collect(std::vector<Parameter<T>*>& out) {
        fc1.collect(out);
        fc2.collect(out);
    }
};

}  // namespace semo
