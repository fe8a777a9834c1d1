// End-to-end acceptance harness. Each numbered criterion prints one
// pass/fail line; the exit code is the number of failures. Long
// trainings are cached in a work directory (SEMO_ACCEPT_DIR, default
// under the system temp dir) so reruns only pay for evaluation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "semo/evaluate.hpp"
#include "semo/training.hpp"

namespace fs = std::filesystem;
using namespace semo;

namespace {

int g_failures = 0;

class Criterion {
public:
    Criterion(int number, std::string title)
        : number_(number), title_(std::move(title)), start_(std::chrono::steady_clock::now()) {}

    void finish(bool ok, const std::string& detail) {
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
        std::printf("criterion %2d %-28s %s  (%s, %llds)\n", number_, title_.c_str(),
                    ok ? "pass" : "FAIL", detail.c_str(), static_cast<long long>(secs));
        std::fflush(stdout);
        if (!ok) ++g_failures;
    }

private:
    int number_;
    std::string title_;
    std::chrono::steady_clock::time_point start_;
};

fs::path work_dir() {
    if (const char* env = std::getenv("SEMO_ACCEPT_DIR")) return env;
    return fs::temp_directory_path() / "semo_acceptance";
}

RunConfig toy_config() {
    RunConfig cfg;
    cfg.motion_tokens = 1;
    cfg.motion_dim = 64;
    cfg.encoder_layers = 3;
    cfg.encoder_dim = 64;
    cfg.decoder_layers = 3;
    cfg.decoder_dim = 64;
    cfg.generator_layers = 3;
    cfg.generator_dim = 64;
    return cfg;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// Trains one stage unless the work directory already holds a matching
// finished checkpoint.
Checkpoint cached_stage(const fs::path& dir, const std::string& stage, const RunConfig& cfg,
                        int steps, const Checkpoint* prev) {
    if (fs::exists(dir / "manifest.txt")) {
        try {
            Checkpoint ck = load_checkpoint(dir);
            if (ck.stage == stage && ck.step == steps &&
                serialize_config(ck.config) == serialize_config(cfg))
                return ck;
        } catch (const std::exception&) {
        }
    }
    fs::remove_all(dir);
    TrainOptions opt;
    opt.out_dir = dir;
    opt.steps_override = steps;
    opt.prev_stage = prev;
    return train_stage(stage, cfg, opt);
}

Tensor<float> randn(std::vector<int> shape, RngStream& rng) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

// 1. noise_latent boundary exactness plus the velocity identity.
void flow_algebra() {
    Criterion c(1, "flow algebra");
    RngStream rng(11, "flow");
    double worst = 0.0;
    bool boundary_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor<float> z = randn({4, 8}, rng);
        Tensor<float> eps = randn({4, 8}, rng);
        boundary_ok = boundary_ok && max_abs_diff(noise_latent(z, 0.0f, eps), z) == 0.0f &&
                      max_abs_diff(noise_latent(z, 1.0f, eps), eps) == 0.0f &&
                      max_abs_diff(noise_motion(z, 0.0f, eps), z) == 0.0f &&
                      max_abs_diff(noise_motion(z, 1.0f, eps), eps) == 0.0f;
        auto t = static_cast<float>(rng.uniform());
        Tensor<float> lhs = noise_latent(z, t, eps);
        Tensor<float> v = true_velocity(z, eps);
        for (std::int64_t i = 0; i < z.size(); ++i) {
            float rhs = z.data[i] - t * v.data[i];
            float denom = std::max({std::abs(z.data[i]), std::abs(eps.data[i]), 1.0f});
            worst = std::max(worst, static_cast<double>(std::abs(lhs.data[i] - rhs) / denom));
        }
    }
    c.finish(boundary_ok && worst < 1e-6, "max rel err " + fmt(worst));
}

// 2. Euler sampling under a constant oracle field is exact.
void sampler_oracle() {
    Criterion c(2, "sampler oracle");
    RngStream rng(12, "euler");
    Tensor<float> target = randn({5, 7}, rng);
    Tensor<float> eps = randn({5, 7}, rng);
    Tensor<float> field = true_velocity(target, eps);
    double worst = 0.0;
    for (int steps : {1, 2, 4, 16}) {
        Tensor<float> out = euler_sample<float>(
            eps, steps, [&](const Tensor<float>&, float) { return field; });
        worst = std::max(worst, static_cast<double>(max_abs_diff(out, target)));
    }
    c.finish(worst < 1e-5, "max abs err " + fmt(worst));
}

// 3. Kept-count law, order preservation and per-position frequency.
void masking_laws() {
    Criterion c(3, "masking laws");
    RngStream rng(13, "mask");
    const int t = 16;
    bool law_ok = true;
    std::vector<int> hits(t, 0);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        double r = 0.5;
        int k = t - static_cast<int>(std::floor(r * t));
        auto kept = rng.sorted_subset(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k));
        law_ok = law_ok && static_cast<int>(kept.size()) == k;
        for (std::size_t i = 1; i < kept.size(); ++i) law_ok = law_ok && kept[i - 1] < kept[i];
        for (auto p : kept) ++hits[static_cast<std::size_t>(p)];
    }
    double worst_freq_err = 0.0;
    for (int p = 0; p < t; ++p)
        worst_freq_err = std::max(worst_freq_err, std::abs(hits[static_cast<std::size_t>(p)] /
                                                               static_cast<double>(draws) -
                                                           0.5));
    // clamp to one kept token at the extreme ratio
    for (int tt : {1, 2, 16})
        for (double r : {0.9, 0.99}) {
            int k = std::max(1, tt - static_cast<int>(std::floor(r * tt)));
            law_ok = law_ok && k >= 1;
        }
    c.finish(law_ok && worst_freq_err <= 0.02, "max freq dev " + fmt(worst_freq_err));
}

// 4. Double precision gradient checks of the four trainable blocks.
void gradient_checks() {
    Criterion c(4, "gradient checks");
    double worst = std::max({testutil::gradcheck_encoder(), testutil::gradcheck_transfer(),
                             testutil::gradcheck_temporal_align(), testutil::gradcheck_generator()});
    c.finish(worst < 1e-4, "max rel err " + fmt(worst));
}

// 5. Both stage losses vanish when the model is replaced by the true
// velocity.
void loss_minimizers() {
    Criterion c(5, "loss minimizers");
    RunConfig cfg = toy_config();
    cfg.image_size = 16;
    cfg.frames_per_clip = cfg.n_prev + cfg.window + 1;
    TrainState st;
    init_models(st, cfg);
    VelocityOracle oracle = [](const Tensor<float>& clean, const Tensor<float>& eps) {
        Tensor<float> v(clean.shape);
        for (std::int64_t i = 0; i < clean.size(); ++i) v.data[i] = clean.data[i] - eps.data[i];
        return v;
    };
    std::vector<std::uint64_t> ids = {0, 1, 2};
    double l_img = loss_autoencoder(st, ids, RngStream(15, "s"), false, &oracle);
    double l_vid = loss_autoencoder(st, ids, RngStream(16, "s"), true, &oracle);
    double l_gen = loss_generator(st, ids, RngStream(17, "s"), &oracle);
    double worst = std::max({l_img, l_vid, l_gen});
    c.finish(worst <= 1e-10, "max oracle loss " + fmt(worst));
}

// 6. Decodes of two different target frames agree bitwise when forced
// to share one MotionToken, and differ when they do not.
void bottleneck() {
    Criterion c(6, "motion bottleneck");
    RunConfig cfg = toy_config();
    cfg.image_size = 16;
    TrainState st;
    init_models(st, cfg);
    RngStream nudger(18, "nudge");
    for (auto* p : st.decoder.params())
        for (auto& v : p->value.data) v += static_cast<float>(nudger.normal()) * 0.05f;

    VideoClip clip = clip_by_id(cfg, 0);
    auto latents = clip_latents(clip, *st.codec, cfg.patch_size);
    MaskedPatchSeq<float> none0{latents[0].tokens, latents[0].positions};
    MaskedPatchSeq<float> none1{latents[1].tokens, latents[1].positions};
    MaskedPatchSeq<float> none2{latents[2].tokens, latents[2].positions};
    MotionToken m_r = st.encoder.encode_motion(none0);
    MotionToken shared = st.encoder.encode_motion(none1);
    MotionToken other = st.encoder.encode_motion(none2);

    int side = cfg.latent_side() / cfg.patch_size;
    auto decode_one = [&](const MotionToken& m, std::uint64_t seed) {
        RngStream rng(seed, "noise");
        return decode_frames(st.decoder, latents[0], m_r, {m}, cfg.sample_steps, rng, false,
                             side, cfg.patch_size, cfg.latent_channels())[0];
    };
    Tensor<float> a = decode_one(shared, 5);
    Tensor<float> b = decode_one(shared, 5);
    Tensor<float> d = decode_one(other, 5);
    bool identical = max_abs_diff(a, b) == 0.0f;
    bool sensitive = max_abs_diff(a, d) > 0.0f;
    c.finish(identical && sensitive, identical ? "bitwise equal, motion-sensitive" : "mismatch");
}

}  // namespace

int main() {
    const fs::path work = work_dir();
    fs::create_directories(work);

    flow_algebra();
    sampler_oracle();
    masking_laws();
    gradient_checks();
    loss_minimizers();
    bottleneck();

    RunConfig toy = toy_config();

    // 7. Two-stage training on the toy config, held-out reconstruction.
    Checkpoint ck_image, ck_video;
    TrainState ae_state;
    {
        Criterion c(7, "desk-scale reconstruction");
        ck_image = cached_stage(work / "ae_image", "ae_image", toy, toy.steps_ae_image, nullptr);
        ck_video =
            cached_stage(work / "ae_video", "ae_video", toy, toy.steps_ae_video, &ck_image);
        ae_state = state_from_checkpoint(ck_video);
        Dataset data = make_dataset(kDatasetClips, kTrainSplit, toy);
        MetricReport rep =
            evaluate_reconstruction(ae_state, data.eval_ids, 0.0, RngStream(toy.seed, "accept7"));
        c.finish(rep.psnr >= 22.0 && rep.ssim >= 0.85,
                 "psnr " + fmt(rep.psnr) + " ssim " + fmt(rep.ssim));
    }

    // 8. Capacity trend over motion_dim plus the token-budget swap.
    {
        Criterion c(8, "capacity trend");
        SweepBudget budget;
        budget.steps_image = 1200;
        budget.eval_clips = 10;
        SweepReport rep = run_capacity_sweep(SweepAxis::token_dim, {32, 64, 128, 256, 512},
                                             toy, budget);
        RunConfig t8d64 = toy;
        t8d64.motion_tokens = 8;
        t8d64.motion_dim = 64;
        RunConfig t1d512 = toy;
        t1d512.motion_tokens = 1;
        t1d512.motion_dim = 512;
        SweepCell big_tokens = run_sweep_cell(t8d64, budget);
        SweepCell big_dim = run_sweep_cell(t1d512, budget);
        bool trend = rep.nondecreasing_pairs >= 4;
        bool tokens_win = big_tokens.metrics.psnr >= big_dim.metrics.psnr;
        c.finish(trend && tokens_win,
                 "pairs " + std::to_string(rep.nondecreasing_pairs) + "/5, T8D64 " +
                     fmt(big_tokens.metrics.psnr) + " vs T1D512 " + fmt(big_dim.metrics.psnr));
    }

    // 9. Mask-trained AE leaks less reference background than the
    // unmasked variant under cross-identity transfer.
    {
        Criterion c(9, "mask-strategy direction");
        RunConfig masked_cfg = toy;
        RunConfig unmasked_cfg = toy;
        unmasked_cfg.ae_mask_range = {0.0, 0.0};
        const int steps = 2000;
        Checkpoint ck_m =
            cached_stage(work / "ablate_masked", "ae_image", masked_cfg, steps, nullptr);
        Checkpoint ck_u =
            cached_stage(work / "ablate_unmasked", "ae_image", unmasked_cfg, steps, nullptr);
        TrainState masked = state_from_checkpoint(ck_m);
        TrainState unmasked = state_from_checkpoint(ck_u);
        Dataset data = make_dataset(kDatasetClips, kTrainSplit, toy);
        MaskAblationReport rep =
            mask_ablation(masked, unmasked, data.eval_ids, 20, RngStream(toy.seed, "accept9"));
        c.finish(rep.masked.leakage < rep.unmasked.leakage,
                 "leakage " + fmt(rep.masked.leakage) + " vs " + fmt(rep.unmasked.leakage));
    }

    // 10. Reconstruction survives a forced 0.9 mask ratio.
    {
        Criterion c(10, "high-mask probe");
        Dataset data = make_dataset(kDatasetClips, kTrainSplit, toy);
        // Both ratios share the estimator, so the drop needs no averaging.
        int saved_avg = ae_state.cfg.eval_avg;
        ae_state.cfg.eval_avg = 1;
        auto rows = high_mask_probe(ae_state, data.eval_ids, {0.0, 0.9},
                                    RngStream(toy.seed, "accept10"));
        ae_state.cfg.eval_avg = saved_avg;
        double drop = rows[0].psnr - rows[1].psnr;
        c.finish(drop <= 4.0, "psnr " + fmt(rows[0].psnr) + " -> " + fmt(rows[1].psnr));
    }

    // 11. Generated mouth trajectory tracks the control signal.
    {
        Criterion c(11, "generator sync");
        Checkpoint ck_gen = cached_stage(work / "generator", "generator", toy,
                                         toy.steps_generator, &ck_video);
        TrainState gen_state = state_from_checkpoint(ck_gen);
        Dataset data = make_dataset(kDatasetClips, kTrainSplit, toy);
        SyncReport rep =
            generator_sync(gen_state, data.eval_ids, 20, RngStream(toy.seed, "accept11"));
        c.finish(rep.margin >= 0.3, "corr " + fmt(rep.corr_true) + " vs shuffled " +
                                        fmt(rep.corr_shuffled));
    }

    // 12. Motion queries concentrate on the subject.
    {
        Criterion c(12, "attention sanity");
        Dataset data = make_dataset(kDatasetClips, kTrainSplit, toy);
        int inside = 0, total = 0;
        RngStream rng(toy.seed, "accept12");
        for (std::size_t i = 0; i < 10 && i < data.eval_ids.size(); ++i) {
            VideoClip clip = clip_by_id(toy, data.eval_ids[i]);
            BBox box = subject_bbox(clip.params.subject, toy.image_size);
            for (int target : {1, static_cast<int>(clip.frames.size()) - 1}) {
                auto maps = extract_attention(ae_state, clip, 0, target, 0.5,
                                              rng.split("probe", static_cast<std::uint64_t>(
                                                                     i * 2 + (target == 1))));
                if (attention_bbox_fraction(maps, box, toy.image_size) >
                    box.area_fraction(toy.image_size))
                    ++inside;
                ++total;
            }
        }
        double frac = static_cast<double>(inside) / total;
        c.finish(frac >= 0.8, fmt(100.0 * frac) + "% of probe frames");
    }

    std::printf("%s (%d of 12 failed)\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
    return g_failures;
}
