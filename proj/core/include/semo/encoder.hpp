#pragma once

#include <string>
#include <vector>

#include "semo/config.hpp"
#include "semo/nn.hpp"
#include "semo/rng.hpp"

namespace semo {

// Ordered patch-token sequence of one frame latent. Tokens hold the raw
// p*p*c patch values; the linear embedding to model width happens inside
// the consuming network.
template <typename T>
struct PatchSeq {
    Tensor<T> tokens;            // [t, d_patch]
    std::vector<int> positions;  // raster-order grid indices, strictly increasing
};

template <typename T>
struct MaskedPatchSeq {
    Tensor<T> tokens;            // [k, d_patch]
    std::vector<int> positions;  // strictly increasing subsequence
    double ratio = 0.0;
};

// Latent motion matrix M, shape [l, d_m].
template <typename T>
using MotionTokenT = Tensor<T>;
using MotionToken = Tensor<float>;

struct encoder_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Split a {h,w,c} latent grid into non-overlapping p x p patches in
// raster order.
template <typename T>
PatchSeq<T> patchify(const Tensor<T>& latent, int p) {
    int h = latent.shape[0], w = latent.shape[1], c = latent.shape[2];
    if (p < 1 || h % p != 0 || w % p != 0)
        throw encoder_error("patchify: patch size must divide the latent grid");
    int gh = h / p, gw = w / p;
    PatchSeq<T> seq;
    seq.tokens = Tensor<T>({gh * gw, p * p * c});
    seq.positions.resize(static_cast<std::size_t>(gh * gw));
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            int idx = gy * gw + gx;
            seq.positions[static_cast<std::size_t>(idx)] = idx;
            T* dst = seq.tokens.row_ptr(idx);
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px) {
                    const T* src =
                        latent.data.data() +
                        ((static_cast<std::size_t>(gy * p + py) * w) + (gx * p + px)) * c;
                    std::copy(src, src + c, dst + (py * p + px) * c);
                }
        }
    return seq;
}

// Inverse of patchify for full (unmasked) sequences.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int grid_side, int p, int c) {
    Tensor<T> latent({grid_side * p, grid_side * p, c});
    int w = grid_side * p;
    for (int gy = 0; gy < grid_side; ++gy)
        for (int gx = 0; gx < grid_side; ++gx) {
            const T* src = tokens.row_ptr(gy * grid_side + gx);
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px) {
                    T* dst = latent.data.data() +
                             ((static_cast<std::size_t>(gy * p + py) * w) + (gx * p + px)) * c;
                    std::copy(src + (py * p + px) * c, src + (py * p + px + 1) * c, dst);
                }
        }
    return latent;
}

inline double sample_mask_ratio(const MaskRange& range, RngStream& rng) {
    return rng.uniform(range.lo, range.hi);
}

// Keep a uniformly random subset of k = t - floor(ratio*t) tokens in
// their original order. A ratio that would empty the sequence is
// clamped to keep one token.
template <typename T>
MaskedPatchSeq<T> apply_mask(const PatchSeq<T>& patches, double ratio, RngStream& rng) {
    if (ratio < 0.0 || ratio > 1.0) throw encoder_error("apply_mask: ratio must be in [0,1]");
    int t = patches.tokens.rows();
    int k = t - static_cast<int>(std::floor(ratio * t));
    if (k < 1) k = 1;
    std::vector<int> kept = rng.sorted_subset(t, k);
    MaskedPatchSeq<T> out;
    out.ratio = ratio;
    out.tokens = Tensor<T>({k, patches.tokens.cols()});
    out.positions.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        int src = kept[static_cast<std::size_t>(i)];
        std::copy(patches.tokens.row_ptr(src),
                  patches.tokens.row_ptr(src) + patches.tokens.cols(), out.tokens.row_ptr(i));
        out.positions[static_cast<std::size_t>(i)] = patches.positions[static_cast<std::size_t>(src)];
    }
    return out;
}

// Masked Motion Encoder: embeds the kept patch tokens, appends the
// learnable query tokens, runs pre-norm ViT blocks and reads the output
// at the query positions.
template <typename T>
struct MotionEncoder {
    Linear<T> patch_embed;
    Parameter<T> pos_embed;     // [t, dim]
    Parameter<T> query_tokens;  // [l, dim]
    std::vector<ViTBlock<T>> blocks;
    LayerNormParams<T> final_ln;
    Linear<T> head;  // dim -> d_m
    int l = 0, d_m = 0;

    void init(const RunConfig& cfg, RngStream rng) {
        int dim = cfg.encoder_dim;
        l = cfg.motion_tokens;
        d_m = cfg.motion_dim;
        patch_embed.init("patch_embed", cfg.patch_dim(), dim, rng);
        pos_embed = Parameter<T>("pos_embed",
                                 randn_tensor<T>({cfg.tokens_per_frame(), dim}, rng, T(0.02)));
        query_tokens =
            Parameter<T>("query_tokens", randn_tensor<T>({l, dim}, rng, T(0.02)));
        blocks.resize(static_cast<std::size_t>(cfg.encoder_layers));
        for (int i = 0; i < cfg.encoder_layers; ++i)
            blocks[static_cast<std::size_t>(i)].init("block" + std::to_string(i), dim,
                                                     cfg.encoder_heads, rng);
        final_ln.init("final_ln", dim);
        head.init("head", dim, d_m, rng);
    }

    // Differentiable forward from an already-inserted token node
    // [k, d_patch] with the matching kept positions.
    typename Graph<T>::Ref forward(Graph<T>& g, typename Graph<T>::Ref raw_tokens,
                                   const std::vector<int>& positions) {
        if (g.val(raw_tokens).rows() == 0) throw encoder_error("encode_motion: empty masked sequence");
        auto x = g.add(patch_embed.forward(g, raw_tokens),
                       g.gather_rows(g.param(pos_embed), positions));
        auto seq = g.concat_rows({x, g.param(query_tokens)});
        for (auto& b : blocks) seq = b.forward(g, seq);
        int n = g.val(seq).rows();
        auto q_out = g.slice_rows(seq, n - l, l);
        return head.forward(g, final_ln.forward(g, q_out));
    }

    MotionTokenT<T> encode_motion(const MaskedPatchSeq<T>& masked) {
        Graph<T> g;
        auto tokens = g.constant(masked.tokens);
        return g.val(forward(g, tokens, masked.positions));
    }

    // Parameters split into the two checkpoint components.
    std::vector<Parameter<T>*> trunk_params() {
        std::vector<Parameter<T>*> out;
        patch_embed.collect(out);
        out.push_back(&pos_embed);
        for (auto& b : blocks) b.collect(out);
        final_ln.collect(out);
        head.collect(out);
        return out;
    }
    std::vector<Parameter<T>*> query_params() { return {&query_tokens}; }
    std::vector<Parameter<T>*> params() {
        auto out = trunk_params();
        out.push_back(&query_tokens);
        return out;
    }
};

}  // namespace semo
