#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "semo/config.hpp"

namespace semo::testutil {

// Small configuration that keeps every model a few thousand parameters
// so unit tests run in milliseconds.
inline RunConfig tiny_config() {
    RunConfig cfg;
    cfg.image_size = 16;
    cfg.patch_size = 2;
    cfg.motion_tokens = 1;
    cfg.motion_dim = 8;
    cfg.encoder_layers = 1;
    cfg.encoder_dim = 16;
    cfg.encoder_heads = 2;
    cfg.decoder_layers = 1;
    cfg.decoder_dim = 16;
    cfg.decoder_heads = 2;
    cfg.generator_layers = 1;
    cfg.generator_dim = 16;
    cfg.generator_heads = 2;
    cfg.frames_per_clip = 4;
    cfg.window = 3;
    cfg.n_prev = 2;
    cfg.control_dim = 4;
    cfg.batch_ae_image = 2;
    cfg.batch_ae_video = 2;
    cfg.batch_generator = 2;
    cfg.sample_steps = 2;
    cfg.checkpoint_every = 1000;
    cfg.log_every = 1;
    return cfg;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() /
             ("semo_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace semo::testutil
