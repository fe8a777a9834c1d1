#pragma once

#include <stdexcept>

#include "semo/config.hpp"
#include "semo/graph.hpp"
#include "semo/rng.hpp"
#include "semo/sprite.hpp"
#include "semo/tensor.hpp"

namespace semo {

// Latent grid for one frame, shape {h, w, c}.
using FrameLatent = Tensor<float>;

struct codec_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exactly invertible 4x4 space-to-depth rearrangement: {H,W,C} ->
// {H/4, W/4, 16*C}.
FrameLatent space_to_depth_encode(const Frame& frame);
Frame space_to_depth_decode(const FrameLatent& latent);

// Learned linear patch autoencoder over 4x4 pixel patches. Stands in
// for a pretrained VAE when compression (c < 48) is wanted.
struct TinyAe {
    Parameter<float> enc_w, enc_b;  // [48, c], [1, c]
    Parameter<float> dec_w, dec_b;  // [c, 48], [1, 48]
    int latent_channels = 0;

    void init(int c, RngStream& rng);
    FrameLatent encode(const Frame& frame) const;
    Frame decode(const FrameLatent& latent) const;
    // Self-supervised reconstruction pretraining on synthetic clips.
    // Returns final train PSNR in dB.
    double pretrain(const RunConfig& cfg, int steps, int clips);
    std::vector<Parameter<float>*> params();
};

// Affine map between codec output in [0, 1] and the zero-centered
// range the diffusion stack trains on. Kept outside the codec so the
// space_to_depth round trip stays bit-exact.
inline FrameLatent normalize_latent(FrameLatent latent) {
    for (auto& v : latent.data) v = 2.0f * v - 1.0f;
    return latent;
}

inline FrameLatent denormalize_latent(FrameLatent latent) {
    for (auto& v : latent.data) v = 0.5f * (v + 1.0f);
    return latent;
}

// Frame <-> latent map selected by RunConfig. For tiny_ae the codec
// must have been pretrained (or loaded) before use.
class Codec {
public:
    explicit Codec(const RunConfig& cfg);

    FrameLatent encode_frame(const Frame& frame) const;
    Frame decode_frame(const FrameLatent& latent) const;
    int latent_channels() const { return channels_; }

    TinyAe& tiny_ae() { return ae_; }
    const TinyAe& tiny_ae() const { return ae_; }

private:
    FrameCodec kind_;
    int channels_;
    TinyAe ae_;
};

}  // namespace semo
