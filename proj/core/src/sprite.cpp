#include "semo/sprite.hpp"

#include <algorithm>
#include <cmath>

namespace semo {

namespace {

constexpr int kSupersample = 4;
constexpr double kTwoPi = 6.283185307179586476925287;

struct Vec2 {
    double x, y;
};

Vec2 to_local(double u, double v, double cx, double cy, double angle) {
    double dx = u - cx, dy = v - cy;
    double c = std::cos(-angle), s = std::sin(-angle);
    return {c * dx - s * dy, s * dx + c * dy};
}

bool in_ellipse(const Vec2& p, double ox, double oy, double rx, double ry) {
    if (rx <= 0.0 || ry <= 0.0) return false;
    double a = (p.x - ox) / rx, b = (p.y - oy) / ry;
    return a * a + b * b <= 1.0;
}

void pick_color(RngStream& rng, float* c, double lo, double hi) {
    for (int i = 0; i < 3; ++i) c[i] = static_cast<float>(rng.uniform(lo, hi));
}

// Sample color of the background pattern at world coordinates.
void bg_color_at(const SubjectDescriptor& s, double u, double v, float* out) {
    const float* col = s.bg_color_a;
    if (s.bg_pattern == 1) {
        int band = static_cast<int>(std::floor(v / s.bg_scale));
        col = (band & 1) ? s.bg_color_b : s.bg_color_a;
    } else if (s.bg_pattern == 2) {
        int cx = static_cast<int>(std::floor(u / s.bg_scale));
        int cy = static_cast<int>(std::floor(v / s.bg_scale));
        col = ((cx + cy) & 1) ? s.bg_color_b : s.bg_color_a;
    }
    out[0] = col[0];
    out[1] = col[1];
    out[2] = col[2];
}

// true if the sample point belongs to the generic rigid shape.
bool in_generic_shape(const SubjectDescriptor& s, const Vec2& p) {
    double h = s.shape_half;
    switch (s.shape_kind) {
        case 0:  // square
            return std::abs(p.x) <= h && std::abs(p.y) <= h;
        case 1:  // triangle (upward)
            return p.y >= -h && p.y <= h && std::abs(p.x) <= (h - (p.y + h) * 0.5);
        default:  // bar
            return std::abs(p.x) <= h && std::abs(p.y) <= h * 0.35;
    }
}

void sample_color(const SubjectDescriptor& s, const FramePose& p, double u, double v, float* out) {
    double jx = p.jitter_x, jy = p.jitter_y;
    if (s.generic) {
        double cx = s.face_cx + s.orbit_radius * std::cos(p.pose_angle * 2.0) + jx;
        double cy = s.face_cy + s.orbit_radius * std::sin(p.pose_angle * 2.0) + jy;
        Vec2 local = to_local(u, v, cx, cy, p.pose_angle);
        if (in_generic_shape(s, local)) {
            out[0] = s.shape_color[0];
            out[1] = s.shape_color[1];
            out[2] = s.shape_color[2];
            return;
        }
        bg_color_at(s, u, v, out);
        return;
    }

    Vec2 local = to_local(u, v, s.face_cx + jx, s.face_cy + jy, p.pose_angle);
    double eye_ry = s.eye_r * (1.0 - 0.9 * p.blink);
    if (in_ellipse(local, -s.eye_dx, -s.eye_dy, s.eye_r, eye_ry) ||
        in_ellipse(local, s.eye_dx, -s.eye_dy, s.eye_r, eye_ry)) {
        out[0] = s.eye_color[0];
        out[1] = s.eye_color[1];
        out[2] = s.eye_color[2];
        return;
    }
    double mouth_ry = s.mouth_ry_max * (0.12 + 0.88 * p.mouth_open);
    if (in_ellipse(local, 0.0, s.mouth_dy, s.mouth_rx, mouth_ry)) {
        out[0] = s.mouth_color[0];
        out[1] = s.mouth_color[1];
        out[2] = s.mouth_color[2];
        return;
    }
    if (in_ellipse(local, 0.0, 0.0, s.face_rx, s.face_ry)) {
        out[0] = s.face_color[0];
        out[1] = s.face_color[1];
        out[2] = s.face_color[2];
        return;
    }
    bg_color_at(s, u, v, out);
}

double subject_radius(const SubjectDescriptor& s) {
    double r;
    if (s.generic)
        r = s.orbit_radius + s.shape_half * 1.4143;
    else
        r = std::max(s.face_rx, s.face_ry);
    return r + 0.03;  // jitter + anti-aliasing margin
}

}  // namespace

SubjectDescriptor sample_subject(RngStream& rng, std::uint64_t id) {
    SubjectDescriptor s;
    s.id = id;
    s.generic = false;
    s.bg_pattern = static_cast<int>(rng.uniform_int(3));
    pick_color(rng, s.bg_color_a, 0.05, 0.45);
    pick_color(rng, s.bg_color_b, 0.5, 0.95);
    s.bg_scale = static_cast<float>(rng.uniform(0.08, 0.2));
    s.face_cx = static_cast<float>(rng.uniform(0.46, 0.54));
    s.face_cy = static_cast<float>(rng.uniform(0.46, 0.54));
    s.face_rx = static_cast<float>(rng.uniform(0.24, 0.32));
    s.face_ry = static_cast<float>(rng.uniform(0.30, 0.38));
    pick_color(rng, s.face_color, 0.55, 0.9);
    s.eye_dx = static_cast<float>(rng.uniform(0.09, 0.14));
    s.eye_dy = static_cast<float>(rng.uniform(0.08, 0.13));
    s.eye_r = static_cast<float>(rng.uniform(0.035, 0.055));
    pick_color(rng, s.eye_color, 0.0, 0.15);
    s.mouth_dy = static_cast<float>(rng.uniform(0.13, 0.19));
    s.mouth_rx = static_cast<float>(rng.uniform(0.08, 0.13));
    s.mouth_ry_max = static_cast<float>(rng.uniform(0.05, 0.08));
    pick_color(rng, s.mouth_color, 0.05, 0.3);
    s.mouth_color[0] = static_cast<float>(rng.uniform(0.2, 0.4));  // reddish
    return s;
}

SubjectDescriptor sample_generic_subject(RngStream& rng, std::uint64_t id) {
    SubjectDescriptor s;
    s.id = id;
    s.generic = true;
    s.bg_pattern = static_cast<int>(rng.uniform_int(3));
    pick_color(rng, s.bg_color_a, 0.05, 0.45);
    pick_color(rng, s.bg_color_b, 0.5, 0.95);
    s.bg_scale = static_cast<float>(rng.uniform(0.08, 0.2));
    s.face_cx = static_cast<float>(rng.uniform(0.45, 0.55));
    s.face_cy = static_cast<float>(rng.uniform(0.45, 0.55));
    s.shape_kind = static_cast<int>(rng.uniform_int(3));
    s.shape_half = static_cast<float>(rng.uniform(0.12, 0.22));
    pick_color(rng, s.shape_color, 0.5, 0.95);
    s.orbit_radius = static_cast<float>(rng.uniform(0.03, 0.08));
    return s;
}

Frame render_frame(const SubjectDescriptor& s, const FramePose& p, int size) {
    if (size < 16) throw sprite_error("image_size too small to render the sprite");
    Frame img({size, size, 3});
    const double inv = 1.0 / size;
    const double sub = inv / kSupersample;
    float c[3];
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc[3] = {0, 0, 0};
            for (int sy = 0; sy < kSupersample; ++sy)
                for (int sx = 0; sx < kSupersample; ++sx) {
                    double u = x * inv + (sx + 0.5) * sub;
                    double v = y * inv + (sy + 0.5) * sub;
                    sample_color(s, p, u, v, c);
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            const double norm = 1.0 / (kSupersample * kSupersample);
            std::size_t base = (static_cast<std::size_t>(y) * size + x) * 3;
            img.data[base + 0] = static_cast<float>(acc[0] * norm);
            img.data[base + 1] = static_cast<float>(acc[1] * norm);
            img.data[base + 2] = static_cast<float>(acc[2] * norm);
        }
    }
    return img;
}

std::vector<std::uint8_t> mouth_mask(const SubjectDescriptor& s, const FramePose& p, int size) {
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(size) * size, 0);
    const double inv = 1.0 / size;
    const double sub = inv / kSupersample;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool hit = false;
            for (int sy = 0; sy < kSupersample && !hit; ++sy)
                for (int sx = 0; sx < kSupersample && !hit; ++sx) {
                    double u = x * inv + (sx + 0.5) * sub;
                    double v = y * inv + (sy + 0.5) * sub;
                    Vec2 local = to_local(u, v, s.face_cx + p.jitter_x, s.face_cy + p.jitter_y,
                                          p.pose_angle);
                    // widest opening, slightly inflated
                    hit = in_ellipse(local, 0.0, s.mouth_dy, s.mouth_rx * 1.15,
                                     s.mouth_ry_max * 1.15);
                }
            raw[static_cast<std::size_t>(y) * size + x] = hit ? 1 : 0;
        }
    // one-pixel dilation for anti-aliased edges
    std::vector<std::uint8_t> mask = raw;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (raw[static_cast<std::size_t>(y) * size + x]) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && ny < size && nx >= 0 && nx < size &&
                        raw[static_cast<std::size_t>(ny) * size + nx])
                        mask[static_cast<std::size_t>(y) * size + x] = 1;
                }
        }
    return mask;
}

std::vector<std::uint8_t> background_mask(const SubjectDescriptor& s, int size) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
    double r = subject_radius(s);
    const double inv = 1.0 / size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double u = (x + 0.5) * inv - s.face_cx;
            double v = (y + 0.5) * inv - s.face_cy;
            if (u * u + v * v > r * r) mask[static_cast<std::size_t>(y) * size + x] = 1;
        }
    return mask;
}

BBox subject_bbox(const SubjectDescriptor& s, int size) {
    double r = subject_radius(s);
    BBox b;
    b.x0 = std::max(0, static_cast<int>(std::floor((s.face_cx - r) * size)));
    b.y0 = std::max(0, static_cast<int>(std::floor((s.face_cy - r) * size)));
    b.x1 = std::min(size, static_cast<int>(std::ceil((s.face_cx + r) * size)));
    b.y1 = std::min(size, static_cast<int>(std::ceil((s.face_cy + r) * size)));
    return b;
}

Tensor<float> control_from_params(const SpriteParams& params, int d_a, double noise,
                                  RngStream rng) {
    int f = static_cast<int>(params.frames.size());
    Tensor<float> out({f, d_a});
    auto mouth = [&](int k) {
        k = std::clamp(k, 0, f - 1);
        return params.frames[static_cast<std::size_t>(k)].mouth_open;
    };
    for (int k = 0; k < f; ++k) {
        double smooth = 0.25 * mouth(k - 1) + 0.5 * mouth(k) + 0.25 * mouth(k + 1);
        double deriv = 0.5 * (mouth(k + 1) - mouth(k - 1));
        for (int j = 0; j < d_a; ++j) {
            double v;
            switch (j) {
                case 0: v = smooth; break;
                case 1: v = mouth(k); break;
                case 2: v = mouth(k - 1); break;
                case 3: v = deriv; break;
                default: v = std::cos(static_cast<double>(j) * smooth * 2.0); break;
            }
            if (noise > 0.0) v += noise * rng.normal();
            out.at(k, j) = static_cast<float>(v);
        }
    }
    return out;
}

namespace {

SpriteParams sample_face_trajectory(const SubjectDescriptor& subject, int f, RngStream& rng) {
    SpriteParams p;
    p.subject = subject;
    double pose_amp = rng.uniform(0.15, 0.45);
    double pose_omega = rng.uniform(0.1, 0.95 * kMaxPoseDelta / pose_amp);
    double pose_phase = rng.uniform(0.0, kTwoPi);
    double m_c = rng.uniform(0.0, 1.0);
    double m_a1 = rng.uniform(0.3, 0.6), m_w1 = rng.uniform(0.25, 0.7),
           m_p1 = rng.uniform(0.0, kTwoPi);
    double m_a2 = rng.uniform(0.1, 0.2), m_w2 = rng.uniform(0.7, 1.3),
           m_p2 = rng.uniform(0.0, kTwoPi);
    double b_w = rng.uniform(0.15, 0.4), b_p = rng.uniform(0.0, kTwoPi);
    double j_a = rng.uniform(0.0, 0.008), j_w = rng.uniform(0.3, 0.9),
           j_p = rng.uniform(0.0, kTwoPi);
    p.frames.resize(static_cast<std::size_t>(f));
    for (int k = 0; k < f; ++k) {
        auto& fr = p.frames[static_cast<std::size_t>(k)];
        fr.pose_angle = pose_amp * std::sin(pose_omega * k + pose_phase);
        fr.mouth_open = std::clamp(
            m_c + m_a1 * std::sin(m_w1 * k + m_p1) + m_a2 * std::sin(m_w2 * k + m_p2), 0.0, 1.0);
        fr.blink = std::pow(0.5 + 0.5 * std::sin(b_w * k + b_p), 12.0);
        fr.jitter_x = j_a * std::sin(j_w * k + j_p);
        fr.jitter_y = j_a * std::cos(j_w * k + j_p);
    }
    return p;
}

}  // namespace

VideoClip synth_clip(const RunConfig& cfg, RngStream rng, int frames_override) {
    if (cfg.image_size < 16) throw sprite_error("image_size too small to render the sprite");
    int f = frames_override > 0 ? frames_override : cfg.frames_per_clip;
    auto subj_rng = rng.split("subject");
    std::uint64_t id = subj_rng.next_u64();
    SubjectDescriptor subject = sample_subject(subj_rng, id);
    auto traj_rng = rng.split("trajectory");
    VideoClip clip;
    clip.params = sample_face_trajectory(subject, f, traj_rng);
    clip.frames.reserve(static_cast<std::size_t>(f));
    for (int k = 0; k < f; ++k)
        clip.frames.push_back(
            render_frame(subject, clip.params.frames[static_cast<std::size_t>(k)], cfg.image_size));
    clip.control = control_from_params(clip.params, cfg.control_dim, cfg.control_noise,
                                       rng.split("control"));
    return clip;
}

VideoClip synth_generic_clip(const RunConfig& cfg, RngStream rng, int frames_override,
                             double speed_scale) {
    if (cfg.image_size < 16) throw sprite_error("image_size too small to render the sprite");
    int f = frames_override > 0 ? frames_override : cfg.frames_per_clip;
    auto subj_rng = rng.split("subject");
    std::uint64_t id = subj_rng.next_u64();
    SubjectDescriptor subject = sample_generic_subject(subj_rng, id);
    auto traj_rng = rng.split("trajectory");
    double omega = traj_rng.uniform(0.02, 0.06) * speed_scale;
    double phase = traj_rng.uniform(0.0, kTwoPi);
    VideoClip clip;
    clip.params.subject = subject;
    (void)phase;
    clip.params.frames.resize(static_cast<std::size_t>(f));
    for (int k = 0; k < f; ++k) {
        // linear spin: per-frame pose delta is exactly omega
        clip.params.frames[static_cast<std::size_t>(k)].pose_angle = omega * k;
    }
    clip.frames.reserve(static_cast<std::size_t>(f));
    for (int k = 0; k < f; ++k)
        clip.frames.push_back(
            render_frame(subject, clip.params.frames[static_cast<std::size_t>(k)], cfg.image_size));
    clip.control = Tensor<float>({f, cfg.control_dim});
    return clip;
}

Dataset make_dataset(int n_clips, double split_ratio, const RunConfig& cfg) {
    (void)cfg;
    if (n_clips < 2) throw sprite_error("make_dataset: n_clips must be >= 2");
    int n_train = static_cast<int>(std::floor(n_clips * split_ratio));
    if (n_train < 1 || n_train >= n_clips)
        throw sprite_error("make_dataset: n_clips too small for requested split");
    Dataset d;
    for (int i = 0; i < n_train; ++i) d.train_ids.push_back(static_cast<std::uint64_t>(i));
    for (int i = n_train; i < n_clips; ++i) d.eval_ids.push_back(static_cast<std::uint64_t>(i));
    return d;
}

VideoClip clip_by_id(const RunConfig& cfg, std::uint64_t id, int frames_override) {
    RngStream master(cfg.seed, "data");
    return synth_clip(cfg, master.split("clip", id), frames_override);
}

double mean_abs_diff(const Frame& a, const Frame& b) {
    double s = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace semo
