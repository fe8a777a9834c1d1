#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "semo/config.hpp"
#include "semo/encoder.hpp"
#include "semo/nn.hpp"

namespace semo {

struct decoder_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rectified-flow noising: (1-t)*z + t*eps. t=0 is clean data, t=1 noise.
template <typename T>
Tensor<T> noise_latent(const Tensor<T>& z, T time, const Tensor<T>& eps) {
    if (!z.same_shape(eps)) throw decoder_error("noise_latent: shape mismatch");
    Tensor<T> out(z.shape);
    for (std::int64_t i = 0; i < z.size(); ++i)
        out.data[i] = (T(1) - time) * z.data[i] + time * eps.data[i];
    return out;
}

// Velocity regression target z - eps.
template <typename T>
Tensor<T> true_velocity(const Tensor<T>& z, const Tensor<T>& eps) {
    if (!z.same_shape(eps)) throw decoder_error("true_velocity: shape mismatch");
    Tensor<T> out(z.shape);
    for (std::int64_t i = 0; i < z.size(); ++i) out.data[i] = z.data[i] - eps.data[i];
    return out;
}

// Euler integration of dz = v(z, t) dt from t=1 down to t=0 in uniform
// steps. The field is evaluated at the left edge of each sub-interval.
template <typename T>
Tensor<T> euler_sample(Tensor<T> z, int steps,
                       const std::function<Tensor<T>(const Tensor<T>&, T)>& velocity) {
    if (steps < 1) throw decoder_error("euler_sample: steps must be >= 1");
    T dt = T(1) / static_cast<T>(steps);
    for (int s = 0; s < steps; ++s) {
        T time = T(1) - static_cast<T>(s) * dt;
        Tensor<T> v = velocity(z, time);
        if (!v.same_shape(z)) throw decoder_error("euler_sample: velocity shape mismatch");
        for (std::int64_t i = 0; i < z.size(); ++i) {
            z.data[i] += dt * v.data[i];
            if (!std::isfinite(z.data[i]))
                throw decoder_error("euler_sample: non-finite value (diverged model)");
        }
    }
    return z;
}

// DiT stack over the concatenated sequence [z_r ⊕ z_t_noisy ⊕ m_r ⊕ m_t]
// with adaLN time conditioning. The velocity is read at the noisy-target
// token positions only.
template <typename T>
struct TransferBlock {
    Linear<T> z_embed;       // d_patch -> dim
    Linear<T> m_embed;       // d_m -> dim
    Parameter<T> pos_embed;  // [t, dim], shared by ref and target grids
    Parameter<T> seg_embed;  // [4, dim]: ref, target, m_r, m_t
    TimeEmbed<T> time_embed;
    std::vector<DiTBlock<T>> blocks;
    Linear<T> final_mod;  // dim -> 2*dim, zero-init
    Linear<T> head;       // dim -> d_patch, zero-init
    // Patch tokens are wider than the trunk, so denoising needs a path
    // around the input embedding: full-width linear skips from the
    // noisy target and the reference, each gated by the time embedding.
    // All start at zero, keeping the fresh-decoder output at zero.
    Linear<T> skip_noisy;     // d_patch -> d_patch, zero-init
    Linear<T> skip_ref;       // d_patch -> d_patch, zero-init
    Linear<T> skip_mod;       // dim -> 2*d_patch gates, zero-init
    int t = 0, l = 0, dim = 0, d_patch = 0;

    void init(const RunConfig& cfg, RngStream rng) {
        t = cfg.tokens_per_frame();
        l = cfg.motion_tokens;
        dim = cfg.decoder_dim;
        z_embed.init("z_embed", cfg.patch_dim(), dim, rng);
        m_embed.init("m_embed", cfg.motion_dim, dim, rng);
        pos_embed = Parameter<T>("pos_embed", randn_tensor<T>({t, dim}, rng, T(0.02)));
        seg_embed = Parameter<T>("seg_embed", randn_tensor<T>({4, dim}, rng, T(0.02)));
        time_embed.init("time", dim, rng);
        blocks.resize(static_cast<std::size_t>(cfg.decoder_layers));
        for (int i = 0; i < cfg.decoder_layers; ++i)
            blocks[static_cast<std::size_t>(i)].init("block" + std::to_string(i), dim,
                                                     cfg.decoder_heads, dim, rng);
        final_mod.init("final_mod", dim, 2 * dim, rng, /*zero=*/true);
        head.init("head", dim, cfg.patch_dim(), rng, /*zero=*/true);
        d_patch = cfg.patch_dim();
        skip_noisy.init("skip_noisy", d_patch, d_patch, rng, /*zero=*/true);
        skip_ref.init("skip_ref", d_patch, d_patch, rng, /*zero=*/true);
        skip_mod.init("skip_mod", dim, 2 * d_patch, rng, /*zero=*/true);
    }

    typename Graph<T>::Ref time_cond(Graph<T>& g, T time) {
        return time_embed.forward(g, time * T(1000));
    }

    // Hidden states at the target token positions, [t, dim].
    typename Graph<T>::Ref trunk(Graph<T>& g, typename Graph<T>::Ref z_r,
                                 typename Graph<T>::Ref z_t_noisy, typename Graph<T>::Ref m_r,
                                 typename Graph<T>::Ref m_t, typename Graph<T>::Ref time_emb,
                                 AttentionCapture<T>* cap = nullptr) {
        auto seg = g.param(seg_embed);
        auto pos = g.param(pos_embed);
        auto zr = g.add_row(g.add(z_embed.forward(g, z_r), pos), g.slice_rows(seg, 0, 1));
        auto zt = g.add_row(g.add(z_embed.forward(g, z_t_noisy), pos), g.slice_rows(seg, 1, 1));
        auto mr = g.add_row(m_embed.forward(g, m_r), g.slice_rows(seg, 2, 1));
        auto mt = g.add_row(m_embed.forward(g, m_t), g.slice_rows(seg, 3, 1));
        auto seq = g.concat_rows({zr, zt, mr, mt});
        for (auto& b : blocks) seq = b.forward(g, seq, time_emb, cap);
        return g.slice_rows(seq, t, t);
    }

    // Modulated final norm + linear head back to patch space, plus the
    // time-gated full-width skips.
    typename Graph<T>::Ref head_forward(Graph<T>& g, typename Graph<T>::Ref hidden,
                                        typename Graph<T>::Ref z_r,
                                        typename Graph<T>::Ref z_t_noisy,
                                        typename Graph<T>::Ref time_emb) {
        auto mod = final_mod.forward(g, g.silu(time_emb));
        auto shift = g.slice_cols(mod, 0, dim);
        auto scale = g.slice_cols(mod, dim, dim);
        auto h = DiTBlock<T>::modulate(g, g.layernorm_plain(hidden), shift, scale);
        auto out = head.forward(g, h);

        auto gates = skip_mod.forward(g, g.silu(time_emb));
        auto one = g.constant(Tensor<T>::full({1, d_patch}, T(1)));
        auto gate_n = g.add(g.slice_cols(gates, 0, d_patch), one);
        auto gate_r = g.add(g.slice_cols(gates, d_patch, d_patch), one);
        out = g.add(out, g.mul_row(skip_noisy.forward(g, z_t_noisy), gate_n));
        return g.add(out, g.mul_row(skip_ref.forward(g, z_r), gate_r));
    }

    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref z_r,
                                   typename Graph<T>::Ref z_t_noisy, typename Graph<T>::Ref m_r,
                                   typename Graph<T>::Ref m_t, T time,
                                   AttentionCapture<T>* cap = nullptr) {
        auto te = time_cond(g, time);
        return head_forward(g, trunk(g, z_r, z_t_noisy, m_r, m_t, te, cap), z_r, z_t_noisy, te);
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        z_embed.collect(out);
        m_embed.collect(out);
        out.push_back(&pos_embed);
        out.push_back(&seg_embed);
        time_embed.collect(out);
        for (auto& b : blocks) b.collect(out);
        final_mod.collect(out);
        head.collect(out);
        skip_noisy.collect(out);
        skip_ref.collect(out);
        skip_mod.collect(out);
        return out;
    }
};

// Self-attention across the f frames of a clip, independently at each
// spatial position. Output projections start at zero so a fresh block
// is the identity.
template <typename T>
struct TemporalAlignBlock {
    LayerNormParams<T> ln1, ln2;
    SelfAttention<T> attn;
    Mlp<T> mlp;
    int dim = 0;

    void init(const RunConfig& cfg, RngStream rng) {
        dim = cfg.decoder_dim;
        ln1.init("ta.ln1", dim);
        ln2.init("ta.ln2", dim);
        attn.init("ta.attn", dim, cfg.decoder_heads, rng);
        mlp.init("ta.mlp", dim, dim * 4, rng);
        // identity at init
        attn.wo.w.value.fill(T(0));
        mlp.fc2.w.value.fill(T(0));
    }

    // frames: f hidden-state refs of identical shape [t, dim]. Returns f
    // aligned refs. Attention mixes only across the frame axis.
    std::vector<typename Graph<T>::Ref> forward(Graph<T>& g,
                                                const std::vector<typename Graph<T>::Ref>& frames) {
        int f = static_cast<int>(frames.size());
        int t = g.val(frames[0]).rows();
        auto all = g.concat_rows(frames);  // frame-major [f*t, dim]
        std::vector<int> to_pos_major(static_cast<std::size_t>(f * t));
        std::vector<int> to_frame_major(static_cast<std::size_t>(f * t));
        for (int j = 0; j < t; ++j)
            for (int i = 0; i < f; ++i) {
                to_pos_major[static_cast<std::size_t>(j * f + i)] = i * t + j;
                to_frame_major[static_cast<std::size_t>(i * t + j)] = j * f + i;
            }
        auto x = g.gather_rows(all, to_pos_major);
        std::vector<typename Graph<T>::Ref> cols;
        cols.reserve(static_cast<std::size_t>(t));
        for (int j = 0; j < t; ++j) {
            auto xi = g.slice_rows(x, j * f, f);
            xi = g.add(xi, attn.forward(g, ln1.forward(g, xi)));
            xi = g.add(xi, mlp.forward(g, ln2.forward(g, xi)));
            cols.push_back(xi);
        }
        auto aligned = g.gather_rows(g.concat_rows(cols), to_frame_major);
        std::vector<typename Graph<T>::Ref> out;
        out.reserve(static_cast<std::size_t>(f));
        for (int i = 0; i < f; ++i) out.push_back(g.slice_rows(aligned, i * t, t));
        return out;
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        ln1.collect(out);
        ln2.collect(out);
        attn.collect(out);
        mlp.collect(out);
        return out;
    }
};

// Transfer Block plus Temporal Align plus the shared output head.
template <typename T>
struct DiffusionDecoder {
    TransferBlock<T> transfer;
    TemporalAlignBlock<T> align;

    void init(const RunConfig& cfg, RngStream rng) {
        transfer.init(cfg, rng.split("transfer"));
        align.init(cfg, rng.split("align"));
    }

    // Joint velocity for f frames sharing one reference; per-frame
    // trunks, temporal alignment, shared head. Set use_align=false for
    // the image-to-image mode.
    std::vector<typename Graph<T>::Ref> forward_frames(
        Graph<T>& g, typename Graph<T>::Ref z_r, const std::vector<typename Graph<T>::Ref>& z_noisy,
        typename Graph<T>::Ref m_r, const std::vector<typename Graph<T>::Ref>& m_t, T time,
        bool use_align, AttentionCapture<T>* cap = nullptr) {
        auto te = transfer.time_cond(g, time);
        std::vector<typename Graph<T>::Ref> hidden;
        hidden.reserve(z_noisy.size());
        for (std::size_t i = 0; i < z_noisy.size(); ++i)
            hidden.push_back(transfer.trunk(g, z_r, z_noisy[i], m_r, m_t[i], te, cap));
        if (use_align && z_noisy.size() >= 1) hidden = align.forward(g, hidden);
        std::vector<typename Graph<T>::Ref> out;
        out.reserve(hidden.size());
        for (std::size_t i = 0; i < hidden.size(); ++i)
            out.push_back(transfer.head_forward(g, hidden[i], z_r, z_noisy[i], te));
        return out;
    }

    std::vector<Parameter<T>*> params() {
        auto out = transfer.params();
        for (auto* p : align.params()) out.push_back(p);
        return out;
    }
};

// Few-step Euler decoding of f frames from a reference latent and a
// motion sequence. Pure given (parameters, eps); not differentiable.
template <typename T>
std::vector<Tensor<T>> decode_frames(DiffusionDecoder<T>& dec, const PatchSeq<T>& z_r,
                                     const MotionTokenT<T>& m_r,
                                     const std::vector<MotionTokenT<T>>& m_t_seq, int steps,
                                     RngStream rng, bool use_align, int grid_side, int patch,
                                     int channels) {
    if (steps < 1) throw decoder_error("decode_frames: steps must be >= 1");
    int f = static_cast<int>(m_t_seq.size());
    int t = z_r.tokens.rows(), d = z_r.tokens.cols();
    std::vector<Tensor<T>> z(static_cast<std::size_t>(f));
    for (auto& zi : z) {
        zi = Tensor<T>({t, d});
        for (auto& x : zi.data) x = static_cast<T>(rng.normal());
    }
    T dt = T(1) / static_cast<T>(steps);
    for (int s = 0; s < steps; ++s) {
        T time = T(1) - static_cast<T>(s) * dt;
        Graph<T> g;
        auto zr_ref = g.constant(z_r.tokens);
        auto mr_ref = g.constant(m_r);
        std::vector<typename Graph<T>::Ref> zrefs, mrefs;
        for (int i = 0; i < f; ++i) {
            zrefs.push_back(g.constant(z[static_cast<std::size_t>(i)]));
            mrefs.push_back(g.constant(m_t_seq[static_cast<std::size_t>(i)]));
        }
        auto v = dec.forward_frames(g, zr_ref, zrefs, mr_ref, mrefs, time, use_align);
        for (int i = 0; i < f; ++i) {
            const auto& vi = g.val(v[static_cast<std::size_t>(i)]);
            auto& zi = z[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < zi.size(); ++j) {
                zi.data[j] += dt * vi.data[j];
                if (!std::isfinite(zi.data[j]))
                    throw decoder_error("decode_frames: non-finite value (diverged model)");
            }
        }
    }
    std::vector<Tensor<T>> latents;
    latents.reserve(static_cast<std::size_t>(f));
    for (auto& zi : z) latents.push_back(unpatchify(zi, grid_side, patch, channels));
    return latents;
}

}  // namespace semo
