#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "semo/config.hpp"
#include "semo/rng.hpp"
#include "semo/tensor.hpp"

namespace semo {

// Procedurally generated subject: sprite face or generic rigid object.
// All geometry is in fractions of the image side so rendering works at
// any resolution.
struct SubjectDescriptor {
    std::uint64_t id = 0;
    bool generic = false;       // true: rotating rigid object, no face channels
    int bg_pattern = 0;         // 0 solid, 1 stripes, 2 checker
    float bg_color_a[3] = {0, 0, 0};
    float bg_color_b[3] = {0, 0, 0};
    float bg_scale = 0.125f;    // stripe/checker period

    // face subject
    float face_cx = 0.5f, face_cy = 0.5f;
    float face_rx = 0.30f, face_ry = 0.36f;
    float face_color[3] = {0.8f, 0.7f, 0.6f};
    float eye_dx = 0.12f, eye_dy = 0.10f, eye_r = 0.045f;
    float eye_color[3] = {0.05f, 0.05f, 0.1f};
    float mouth_dy = 0.16f, mouth_rx = 0.11f, mouth_ry_max = 0.07f;
    float mouth_color[3] = {0.25f, 0.05f, 0.08f};

    // generic subject
    int shape_kind = 0;  // 0 square, 1 triangle, 2 bar
    float shape_half = 0.18f;
    float shape_color[3] = {0.9f, 0.3f, 0.2f};
    float orbit_radius = 0.06f;

    bool operator==(const SubjectDescriptor& o) const { return id == o.id && generic == o.generic; }
};

struct FramePose {
    double pose_angle = 0.0;  // radians, in [-0.5, 0.5]
    double mouth_open = 0.0;  // [0, 1]
    double blink = 0.0;       // [0, 1]
    double jitter_x = 0.0;    // sub-pixel, fraction of image side
    double jitter_y = 0.0;
};

struct SpriteParams {
    SubjectDescriptor subject;
    std::vector<FramePose> frames;
};

// Largest per-frame |Δpose_angle| the trajectory sampler will produce.
inline constexpr double kMaxPoseDelta = 0.15;

using Frame = Tensor<float>;  // shape {H, W, 3}, values in [0, 1]

struct VideoClip {
    std::vector<Frame> frames;
    SpriteParams params;
    Tensor<float> control;  // {f, d_a}
};

struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
    double area_fraction(int image_size) const {
        return static_cast<double>((x1 - x0) * (y1 - y0)) / (image_size * image_size);
    }
};

struct sprite_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SubjectDescriptor sample_subject(RngStream& rng, std::uint64_t id);
SubjectDescriptor sample_generic_subject(RngStream& rng, std::uint64_t id);

Frame render_frame(const SubjectDescriptor& s, const FramePose& p, int size);

// Pixels the mouth can ever touch in this frame's pose (max opening,
// dilated one pixel). 0/1 per pixel.
std::vector<std::uint8_t> mouth_mask(const SubjectDescriptor& s, const FramePose& p, int size);

// Pixels never covered by the subject in any pose (identity-constant).
std::vector<std::uint8_t> background_mask(const SubjectDescriptor& s, int size);

// Axis-aligned box containing the face (or object) across all poses.
BBox subject_bbox(const SubjectDescriptor& s, int size);

// Control features derived from the mouth trajectory; row k is a smooth
// function of mouth_open around frame k plus optional seeded noise.
Tensor<float> control_from_params(const SpriteParams& params, int d_a, double noise,
                                  RngStream rng);

VideoClip synth_clip(const RunConfig& cfg, RngStream rng, int frames_override = -1);
VideoClip synth_generic_clip(const RunConfig& cfg, RngStream rng, int frames_override = -1,
                             double speed_scale = 1.0);

// Clip identities for a split; clip i is rendered on demand from the
// master seed, so splits are just disjoint id lists.
struct Dataset {
    std::vector<std::uint64_t> train_ids;
    std::vector<std::uint64_t> eval_ids;
};

Dataset make_dataset(int n_clips, double split_ratio, const RunConfig& cfg);

// Render the clip with the given identity id under cfg.seed.
VideoClip clip_by_id(const RunConfig& cfg, std::uint64_t id, int frames_override = -1);

double mean_abs_diff(const Frame& a, const Frame& b);

}  // namespace semo
