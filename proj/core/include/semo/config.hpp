#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace semo {

enum class FrameCodec { space_to_depth, tiny_ae };

std::string to_string(FrameCodec c);
FrameCodec frame_codec_from_string(const std::string& s);

struct MaskRange {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const MaskRange&) const = default;
};

// Full experiment configuration. Serialized as a flat `key = value`
// text file; unknown keys are rejected so typos fail loudly.
struct RunConfig {
    int image_size = 32;                      // square frames, RGB
    FrameCodec frame_codec = FrameCodec::space_to_depth;
    int codec_latent_channels = 32;           // tiny_ae only; s2d is fixed at 16*C
    int patch_size = 2;                       // on the latent grid
    int motion_tokens = 1;                    // l
    int motion_dim = 512;                     // d_m
    int encoder_layers = 6;
    int encoder_dim = 128;
    int encoder_heads = 4;
    int decoder_layers = 6;
    int decoder_dim = 128;
    int decoder_heads = 4;
    int generator_layers = 4;
    int generator_dim = 128;
    int generator_heads = 4;
    int frames_per_clip = 8;                  // f
    MaskRange ae_mask_range{0.0, 0.9};
    MaskRange gen_mask_range{0.0, 0.2};
    double learning_rate = 1e-4;
    int sample_steps = 4;
    int eval_avg = 4;                         // reconstructions averaged per clip
    std::uint64_t seed = 0;
    int window = 16;                          // generator target length
    int n_prev = 4;                           // previous motions fed to the generator
    int control_dim = 8;                      // d_a
    double control_noise = 0.0;
    int batch_ae_image = 32;
    int batch_ae_video = 8;
    int batch_generator = 32;
    int steps_ae_image = 5000;
    int steps_ae_video = 3000;
    int steps_generator = 5000;
    int checkpoint_every = 1000;
    int log_every = 50;

    bool operator==(const RunConfig&) const = default;

    // Latent grid side for the active codec (image_size / 4).
    int latent_side() const { return image_size / 4; }
    int latent_channels() const {
        return frame_codec == FrameCodec::space_to_depth ? 16 * 3 : codec_latent_channels;
    }
    int tokens_per_frame() const {
        int side = latent_side() / patch_size;
        return side * side;
    }
    int patch_dim() const { return patch_size * patch_size * latent_channels(); }

    // Throws config_error naming the offending field.
    void validate() const;
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace semo
