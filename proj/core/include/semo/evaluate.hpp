#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semo/metrics.hpp"
#include "semo/training.hpp"

namespace semo {

struct eval_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Decode every frame of the clip from the reference frame plus motion
// tokens. mask_ratio forces the encoder mask during motion extraction
// (0 = unmasked).
std::vector<Frame> reconstruct_clip(TrainState& st, const VideoClip& clip, int ref_idx,
                                    double mask_ratio, RngStream rng);

// Mean metrics over the given clip ids (rendered on demand).
MetricReport evaluate_reconstruction(TrainState& st, const std::vector<std::uint64_t>& ids,
                                     double mask_ratio, RngStream rng);

// --- capacity sweep --------------------------------------------------

enum class SweepAxis { token_dim, token_num, mask_range };

std::string to_string(SweepAxis a);

struct SweepCell {
    std::string label;
    double axis_value = 0.0;
    MetricReport metrics;
    bool diverged = false;
    std::string error;
};

struct SweepReport {
    SweepAxis axis = SweepAxis::token_dim;
    std::vector<SweepCell> rows;     // sorted by axis value
    int nondecreasing_pairs = 0;     // adjacent PSNR pairs
    int total_pairs = 0;
};

struct SweepBudget {
    int steps_image = 400;
    int steps_video = 0;
    int eval_clips = 10;
    int dataset_clips = kDatasetClips;
};

// Train one AE under cfg and evaluate it; divergence is reported in the
// cell, not thrown.
SweepCell run_sweep_cell(const RunConfig& cfg, const SweepBudget& budget);

SweepReport run_capacity_sweep(SweepAxis axis, const std::vector<double>& values,
                               const RunConfig& base, const SweepBudget& budget);

std::string sweep_csv(const SweepReport& report);

// --- mask-strategy ablation ------------------------------------------

struct AblationVariant {
    std::string name;
    double recon_psnr = 0.0;
    double leakage = 0.0;  // background deviation under cross-identity transfer
};

struct MaskAblationReport {
    AblationVariant masked, unmasked;
    int pairs = 0;
};

// Decode clip A's motions against reference clip B and measure how far
// the output background drifts from B's true background. Averaged over
// n_pairs (A, B) draws; same_identity reuses A as its own reference.
double transfer_leakage(TrainState& st, const std::vector<std::uint64_t>& ids, int n_pairs,
                        RngStream rng, bool same_identity = false);

MaskAblationReport mask_ablation(TrainState& masked_ae, TrainState& unmasked_ae,
                                 const std::vector<std::uint64_t>& ids, int n_pairs,
                                 RngStream rng);

std::string mask_ablation_csv(const MaskAblationReport& report);

// --- attention maps ---------------------------------------------------

struct AttentionMaps {
    int layers = 0, heads = 0;
    int t = 0, l = 0, grid_side = 0;
    // One entry per (layer, head) in call order. full_rows holds the
    // complete softmax rows of the motion-token queries [l, seq];
    // ref_slice the key mass on the reference patches [l, t].
    std::vector<Tensor<float>> full_rows;
    std::vector<Tensor<float>> ref_slice;
};

// Captures decoder self-attention at one sampling time (f=1 probe).
AttentionMaps extract_attention(TrainState& st, const VideoClip& clip, int ref_idx,
                                int target_idx, double time, RngStream rng);

// One grayscale PNG per layer (heads side by side), shallow to deep.
void export_attention_panels(const AttentionMaps& maps, const std::filesystem::path& dir);

// Fraction of reference-key attention mass falling inside the box,
// averaged over layers, heads and motion tokens.
double attention_bbox_fraction(const AttentionMaps& maps, const BBox& box, int image_size);

// --- high-mask probe --------------------------------------------------

struct MaskProbeRow {
    double ratio = 0.0;
    double psnr = 0.0;
};

std::vector<MaskProbeRow> high_mask_probe(TrainState& st, const std::vector<std::uint64_t>& ids,
                                          const std::vector<double>& ratios, RngStream rng);

std::string mask_probe_csv(const std::vector<MaskProbeRow>& rows);

// --- generator sync ---------------------------------------------------

// Openness estimate read back from rendered pixels inside the mouth
// region of the given pose.
double mouth_openness(const Frame& frame, const SubjectDescriptor& subject, const FramePose& pose);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct SyncReport {
    double corr_true = 0.0;
    double corr_shuffled = 0.0;
    double margin = 0.0;
    int clips = 0;
};

// Rolls the generator over held-out clips driven by their true control
// tracks, decodes, and correlates the probed mouth trajectory with the
// true versus a shuffled control signal.
SyncReport generator_sync(TrainState& st, const std::vector<std::uint64_t>& ids, int n_clips,
                          RngStream rng);

// Full pipeline: reference frame -> rollout -> decode.
std::vector<Frame> animate(TrainState& st, const VideoClip& ref_clip, const Tensor<float>& control,
                           int frames, RngStream rng);

// Mean squared 3x3 Laplacian response, the sharpness probe of the
// objective comparison.
double high_freq_energy(const Frame& frame);

}  // namespace semo
