#pragma once

#include <string>
#include <vector>

#include "semo/config.hpp"
#include "semo/decoder.hpp"
#include "semo/encoder.hpp"
#include "semo/nn.hpp"

namespace semo {

struct generator_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct MotionWindow {
    std::vector<MotionTokenT<T>> prev;    // n_p motions from masked previous frames
    std::vector<MotionTokenT<T>> target;  // window motions, unmasked encodings
    MotionTokenT<T> ref;                  // unmasked, random clip frame
    Tensor<T> control;                    // [window, d_a]
};

// Motions for [start, start+window) with n_p masked previous frames.
// latents: per-frame patch sequences of one clip. The optional cache
// holds unmasked encodings per frame (valid only while the encoder is
// frozen).
template <typename T>
MotionWindow<T> build_window(const std::vector<PatchSeq<T>>& latents, const Tensor<T>& control,
                             int start, const RunConfig& cfg, MotionEncoder<T>& enc,
                             RngStream& rng, std::vector<MotionTokenT<T>>* unmasked_cache = nullptr) {
    int f = static_cast<int>(latents.size());
    if (start < cfg.n_prev || start + cfg.window > f)
        throw generator_error("build_window: clip too short for window plus previous frames");
    if (control.rows() < f) throw generator_error("build_window: control shorter than clip");

    auto unmasked = [&](int idx) -> MotionTokenT<T> {
        if (unmasked_cache) {
            auto& slot = (*unmasked_cache)[static_cast<std::size_t>(idx)];
            if (slot.empty()) {
                MaskedPatchSeq<T> none;
                none.tokens = latents[static_cast<std::size_t>(idx)].tokens;
                none.positions = latents[static_cast<std::size_t>(idx)].positions;
                slot = enc.encode_motion(none);
            }
            return slot;
        }
        MaskedPatchSeq<T> none;
        none.tokens = latents[static_cast<std::size_t>(idx)].tokens;
        none.positions = latents[static_cast<std::size_t>(idx)].positions;
        return enc.encode_motion(none);
    };

    MotionWindow<T> w;
    for (int i = start - cfg.n_prev; i < start; ++i) {
        double ratio = sample_mask_ratio(cfg.gen_mask_range, rng);
        auto masked = apply_mask(latents[static_cast<std::size_t>(i)], ratio, rng);
        w.prev.push_back(enc.encode_motion(masked));
    }
    for (int i = start; i < start + cfg.window; ++i) w.target.push_back(unmasked(i));
    int ref_idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(f)));
    w.ref = unmasked(ref_idx);
    w.control = Tensor<T>({cfg.window, control.cols()});
    for (int i = 0; i < cfg.window; ++i)
        std::copy(control.row_ptr(start + i), control.row_ptr(start + i) + control.cols(),
                  w.control.row_ptr(i));
    return w;
}

// Same affine map as noise_latent, in motion space.
template <typename T>
Tensor<T> noise_motion(const Tensor<T>& m, T time, const Tensor<T>& eps) {
    return noise_latent(m, time, eps);
}

// One generator layer: modulated self-attention over the motion
// sequence, cross-attention to the control track, cross-attention to
// the reference motion, modulated MLP.
template <typename T>
struct GeneratorBlock {
    SelfAttention<T> self_attn;
    CrossAttention<T> ctrl_attn, ref_attn;
    LayerNormParams<T> ln_ctrl, ln_ref;
    Mlp<T> mlp;
    Linear<T> modulation;  // time -> 6*dim, zero-init
    int dim = 0;

    void init(const std::string& name, int d, int heads, RngStream& rng) {
        dim = d;
        self_attn.init(name + ".self", d, heads, rng);
        ctrl_attn.init(name + ".ctrl", d, heads, rng);
        ref_attn.init(name + ".ref", d, heads, rng);
        ln_ctrl.init(name + ".ln_ctrl", d);
        ln_ref.init(name + ".ln_ref", d);
        mlp.init(name + ".mlp", d, d * 4, rng);
        modulation.init(name + ".mod", d, 6 * d, rng, /*zero=*/true);
    }

    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref x,
                                   typename Graph<T>::Ref ctrl, typename Graph<T>::Ref ref,
                                   typename Graph<T>::Ref time_emb) {
        auto mod = modulation.forward(g, g.silu(time_emb));
        auto shift_a = g.slice_cols(mod, 0 * dim, dim);
        auto scale_a = g.slice_cols(mod, 1 * dim, dim);
        auto gate_a = g.slice_cols(mod, 2 * dim, dim);
        auto shift_m = g.slice_cols(mod, 3 * dim, dim);
        auto scale_m = g.slice_cols(mod, 4 * dim, dim);
        auto gate_m = g.slice_cols(mod, 5 * dim, dim);

        auto h = DiTBlock<T>::modulate(g, g.layernorm_plain(x), shift_a, scale_a);
        x = g.add(x, g.mul_row(self_attn.forward(g, h), gate_a));
        x = g.add(x, ctrl_attn.forward(g, ln_ctrl.forward(g, x), ctrl));
        x = g.add(x, ref_attn.forward(g, ln_ref.forward(g, x), ref));
        auto h2 = DiTBlock<T>::modulate(g, g.layernorm_plain(x), shift_m, scale_m);
        return g.add(x, g.mul_row(mlp.forward(g, h2), gate_m));
    }

    void collect(std::vector<Parameter<T>*>& out) {
        self_attn.collect(out);
        ctrl_attn.collect(out);
        ref_attn.collect(out);
        ln_ctrl.collect(out);
        ln_ref.collect(out);
        mlp.collect(out);
        modulation.collect(out);
    }
};

// Diffusion transformer over motion-token sequences (Reasoning step).
template <typename T>
struct MotionGenerator {
    Linear<T> m_embed;        // d_m -> dim
    Linear<T> ctrl_embed;     // d_a -> dim
    Parameter<T> frame_pos;   // [n_prev + window, dim]
    Parameter<T> token_pos;   // [l, dim]
    Parameter<T> ctrl_pos;    // [window, dim]
    Parameter<T> seg_embed;   // [2, dim]: prev, target
    TimeEmbed<T> time_embed;
    std::vector<GeneratorBlock<T>> blocks;
    Linear<T> final_mod;  // dim -> 2*dim, zero-init
    Linear<T> head;       // dim -> d_m, zero-init
    int l = 0, d_m = 0, dim = 0, n_prev = 0, window = 0;

    void init(const RunConfig& cfg, RngStream rng) {
        l = cfg.motion_tokens;
        d_m = cfg.motion_dim;
        dim = cfg.generator_dim;
        n_prev = cfg.n_prev;
        window = cfg.window;
        m_embed.init("m_embed", d_m, dim, rng);
        ctrl_embed.init("ctrl_embed", cfg.control_dim, dim, rng);
        frame_pos = Parameter<T>("frame_pos", randn_tensor<T>({n_prev + window, dim}, rng, T(0.02)));
        token_pos = Parameter<T>("token_pos", randn_tensor<T>({l, dim}, rng, T(0.02)));
        ctrl_pos = Parameter<T>("ctrl_pos", randn_tensor<T>({window, dim}, rng, T(0.02)));
        seg_embed = Parameter<T>("seg_embed", randn_tensor<T>({2, dim}, rng, T(0.02)));
        time_embed.init("time", dim, rng);
        blocks.resize(static_cast<std::size_t>(cfg.generator_layers));
        for (int i = 0; i < cfg.generator_layers; ++i)
            blocks[static_cast<std::size_t>(i)].init("block" + std::to_string(i), dim,
                                                     cfg.generator_heads, rng);
        final_mod.init("final_mod", dim, 2 * dim, rng, /*zero=*/true);
        head.init("head", dim, d_m, rng, /*zero=*/true);
    }

    // prev: [n_prev*l, d_m] rows frame-major; noisy_target: [window*l, d_m].
    // Returns velocity at target positions, [window*l, d_m].
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref prev,
                                   typename Graph<T>::Ref noisy_target,
                                   typename Graph<T>::Ref ref, typename Graph<T>::Ref control,
                                   T time) {
        auto te = time_embed.forward(g, time * T(1000));
        auto seg = g.param(seg_embed);

        auto embed_motion = [&](typename Graph<T>::Ref rows, int frame0, int frames, int seg_idx) {
            auto x = m_embed.forward(g, rows);
            std::vector<int> fidx, tidx;
            for (int i = 0; i < frames; ++i)
                for (int j = 0; j < l; ++j) {
                    fidx.push_back(frame0 + i);
                    tidx.push_back(j);
                }
            x = g.add(x, g.gather_rows(g.param(frame_pos), fidx));
            x = g.add(x, g.gather_rows(g.param(token_pos), tidx));
            return g.add_row(x, g.slice_rows(seg, seg_idx, 1));
        };

        auto xp = embed_motion(prev, 0, n_prev, 0);
        auto xt = embed_motion(noisy_target, n_prev, window, 1);
        auto seq = g.concat_rows({xp, xt});

        auto ctrl = g.add(ctrl_embed.forward(g, control), g.param(ctrl_pos));
        auto refctx = m_embed.forward(g, ref);
        for (auto& b : blocks) seq = b.forward(g, seq, ctrl, refctx, te);

        auto target_part = g.slice_rows(seq, n_prev * l, window * l);
        auto mod = final_mod.forward(g, g.silu(te));
        auto h = DiTBlock<T>::modulate(g, g.layernorm_plain(target_part),
                                       g.slice_cols(mod, 0, dim), g.slice_cols(mod, dim, dim));
        return head.forward(g, h);
    }

    std::vector<Parameter<T>*> params() {
        std::vector<Parameter<T>*> out;
        m_embed.collect(out);
        ctrl_embed.collect(out);
        out.push_back(&frame_pos);
        out.push_back(&token_pos);
        out.push_back(&ctrl_pos);
        out.push_back(&seg_embed);
        time_embed.collect(out);
        for (auto& b : blocks) b.collect(out);
        final_mod.collect(out);
        head.collect(out);
        return out;
    }
};

// Stack a list of per-frame [l, d_m] motions into [frames*l, d_m] rows.
template <typename T>
Tensor<T> stack_motions(const std::vector<MotionTokenT<T>>& ms) {
    int l = ms[0].rows(), d = ms[0].cols();
    Tensor<T> out({static_cast<int>(ms.size()) * l, d});
    for (std::size_t i = 0; i < ms.size(); ++i)
        std::copy(ms[i].data.begin(), ms[i].data.end(),
                  out.data.begin() + static_cast<std::int64_t>(i) * l * d);
    return out;
}

template <typename T>
std::vector<MotionTokenT<T>> unstack_motions(const Tensor<T>& rows, int l) {
    std::vector<MotionTokenT<T>> out;
    int frames = rows.rows() / l;
    int d = rows.cols();
    for (int i = 0; i < frames; ++i) {
        MotionTokenT<T> m({l, d});
        std::copy(rows.data.begin() + static_cast<std::int64_t>(i) * l * d,
                  rows.data.begin() + static_cast<std::int64_t>(i + 1) * l * d, m.data.begin());
        out.push_back(std::move(m));
    }
    return out;
}

// Euler-sample one window of motions (t: 1 -> 0).
template <typename T>
std::vector<MotionTokenT<T>> generate_window(MotionGenerator<T>& gen,
                                             const std::vector<MotionTokenT<T>>& prev,
                                             const MotionTokenT<T>& ref, const Tensor<T>& control,
                                             int steps, RngStream& rng) {
    if (steps < 1) throw generator_error("generate_window: steps must be >= 1");
    Tensor<T> prev_rows = stack_motions(prev);
    Tensor<T> z({gen.window * gen.l, gen.d_m});
    for (auto& x : z.data) x = static_cast<T>(rng.normal());
    Tensor<T> out = euler_sample<T>(std::move(z), steps, [&](const Tensor<T>& zt, T time) {
        Graph<T> g;
        auto v = gen.forward(g, g.constant(prev_rows), g.constant(zt), g.constant(ref),
                             g.constant(control), time);
        return g.val(v);
    });
    return unstack_motions(out, gen.l);
}

// Sliding-window autoregressive rollout to F frames. The first window
// is seeded with n_prev copies of the reference motion; later windows
// carry the last n_prev generated motions. No overlap blending.
template <typename T>
std::vector<MotionTokenT<T>> rollout(MotionGenerator<T>& gen, const MotionTokenT<T>& ref_motion,
                                     const Tensor<T>& control, int frames, int steps,
                                     RngStream rng, int* generator_calls = nullptr) {
    if (frames < 1) throw generator_error("rollout: frames must be >= 1");
    if (control.rows() < frames) throw generator_error("rollout: control shorter than requested frames");
    std::vector<MotionTokenT<T>> prev(static_cast<std::size_t>(gen.n_prev), ref_motion);
    std::vector<MotionTokenT<T>> out;
    int calls = 0;
    int start = 0;
    while (static_cast<int>(out.size()) < frames) {
        Tensor<T> ctrl({gen.window, control.cols()});
        for (int i = 0; i < gen.window; ++i) {
            int src = std::min(start + i, control.rows() - 1);
            std::copy(control.row_ptr(src), control.row_ptr(src) + control.cols(),
                      ctrl.row_ptr(i));
        }
        auto rng_w = rng.split("window", static_cast<std::uint64_t>(calls));
        auto motions = generate_window(gen, prev, ref_motion, ctrl, steps, rng_w);
        ++calls;
        for (auto& m : motions) {
            if (static_cast<int>(out.size()) < frames) out.push_back(m);
        }
        std::vector<MotionTokenT<T>> carried = prev;
        carried.insert(carried.end(), motions.begin(), motions.end());
        prev.assign(carried.end() - gen.n_prev, carried.end());
        start += gen.window;
    }
    if (generator_calls) *generator_calls = calls;
    return out;
}

}  // namespace semo
