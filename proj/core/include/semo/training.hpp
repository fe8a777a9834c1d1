#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semo/checkpoint.hpp"
#include "semo/codec.hpp"
#include "semo/config.hpp"
#include "semo/decoder.hpp"
#include "semo/encoder.hpp"
#include "semo/generator.hpp"
#include "semo/optim.hpp"
#include "semo/sprite.hpp"

namespace semo {

struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Synthetic pool shared by training and evaluation harnesses.
inline constexpr int kDatasetClips = 200;
inline constexpr double kTrainSplit = 0.9;

// All model components of one run plus stage bookkeeping. The codec is
// part of the state because tiny_ae carries learned weights.
struct TrainState {
    RunConfig cfg;
    std::string stage = "ae_image";
    int step = 0;
    std::vector<std::pair<int, double>> loss_history;
    MotionEncoder<float> encoder;
    DiffusionDecoder<float> decoder;
    MotionGenerator<float> generator;
    std::optional<Codec> codec;
};

// Fresh weights from cfg.seed. With pretrain_codec the tiny_ae codec
// (if selected) runs its own reconstruction pretraining; pass false
// when weights will be restored from a checkpoint.
void init_models(TrainState& st, const RunConfig& cfg, bool pretrain_codec = true);

// Snapshot of all components; optimizer moments included when given so
// a resumed run is step-for-step identical.
Checkpoint make_checkpoint(const TrainState& st, const Adam<float>* opt = nullptr);
void restore_models(TrainState& st, const Checkpoint& ckpt);
void restore_optimizer(const Checkpoint& ckpt, Adam<float>& opt);
TrainState state_from_checkpoint(const Checkpoint& ckpt);

// Per-frame derived data of one clip, cached across steps while the
// encoder is frozen (stage generator only).
struct CachedClip {
    std::vector<PatchSeq<float>> latents;
    Tensor<float> control;
    SpriteParams params;
    std::vector<MotionToken> unmasked;
};

struct ClipCache {
    std::map<std::uint64_t, CachedClip> clips;
};

std::vector<PatchSeq<float>> clip_latents(const VideoClip& clip, const Codec& codec, int patch);

// Test seam: replaces the model's velocity prediction with a function
// of (clean tokens, eps). The oracle clean - eps drives the loss to 0.
using VelocityOracle = std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&)>;

// Velocity-regression loss of the autoencoder stage, averaged over the
// batch (and frames in video mode). Accumulates gradients into the
// encoder and decoder parameters unless an oracle bypasses the model.
// All randomness (reference pick, mask ratio and subsets, time, eps)
// derives from step_rng.
double loss_autoencoder(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                        RngStream step_rng, bool video_mode,
                        const VelocityOracle* oracle = nullptr);

// Alternative objective: runs the full Euler sampler inside the loss
// and penalizes MSE between the decoded and ground-truth latents.
double loss_autoencoder_image_space(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                                    RngStream step_rng);

// Velocity loss of the generator stage; the motion encoder stays out of
// the graph entirely (frozen).
double loss_generator(TrainState& st, const std::vector<std::uint64_t>& clip_ids,
                      RngStream step_rng, const VelocityOracle* oracle = nullptr,
                      ClipCache* cache = nullptr);

struct TrainOptions {
    std::filesystem::path out_dir;
    const Checkpoint* prev_stage = nullptr;  // result of the prerequisite stage
    const Checkpoint* resume = nullptr;      // mid-stage snapshot to continue from
    int steps_override = -1;
    int dataset_clips = kDatasetClips;
};

// Runs one stage ("ae_image", "ae_video" or "generator") to its step
// budget, logging `step loss wall_ms` lines and checkpointing into
// out_dir. Returns the final checkpoint.
Checkpoint train_stage(const std::string& stage, const RunConfig& cfg, const TrainOptions& opt);

}  // namespace semo
