#include <doctest.h>

#include <cmath>

#include "semo/evaluate.hpp"
#include "util.hpp"

using namespace semo;

namespace {

struct EvalFixture {
    RunConfig cfg;
    TrainState st;

    EvalFixture() {
        cfg = semo::testutil::tiny_config();
        init_models(st, cfg);
    }
};

}  // namespace

TEST_CASE("reconstruct_clip returns one frame per input frame") {
    EvalFixture fx;
    VideoClip clip = clip_by_id(fx.cfg, 0);
    auto frames = reconstruct_clip(fx.st, clip, 0, 0.0, RngStream(1, "rec"));
    REQUIRE(frames.size() == clip.frames.size());
    for (const auto& f : frames) {
        CHECK(f.shape == clip.frames[0].shape);
        for (float v : f.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("evaluate_reconstruction reports one row per clip") {
    EvalFixture fx;
    std::vector<std::uint64_t> ids = {0, 1, 2};
    MetricReport rep = evaluate_reconstruction(fx.st, ids, 0.0, RngStream(2, "eval"));
    REQUIRE(rep.per_clip.size() == ids.size());
    CHECK(std::isfinite(rep.psnr));
    CHECK(std::isfinite(rep.ssim));
    CHECK(rep.l1 >= 0.0);
}

TEST_CASE("attention rows are softmax distributions") {
    EvalFixture fx;
    VideoClip clip = clip_by_id(fx.cfg, 0);
    AttentionMaps maps = extract_attention(fx.st, clip, 0, 1, 0.5, RngStream(3, "attn"));
    CHECK(maps.layers == fx.cfg.decoder_layers);
    CHECK(maps.heads == fx.cfg.decoder_heads);
    CHECK(maps.t == fx.cfg.tokens_per_frame());
    CHECK(maps.l == fx.cfg.motion_tokens);
    REQUIRE(maps.full_rows.size() ==
            static_cast<std::size_t>(maps.layers) * static_cast<std::size_t>(maps.heads));
    REQUIRE(maps.ref_slice.size() == maps.full_rows.size());
    for (const auto& rows : maps.full_rows) {
        CHECK(rows.rows() == maps.l);
        for (int r = 0; r < rows.rows(); ++r) {
            double sum = 0.0;
            for (int c = 0; c < rows.cols(); ++c) sum += rows.data[static_cast<std::size_t>(r * rows.cols() + c)];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
    for (const auto& slice : maps.ref_slice) {
        CHECK(slice.rows() == maps.l);
        CHECK(slice.cols() == maps.t);
    }
}

TEST_CASE("attention box fraction is a fraction") {
    EvalFixture fx;
    VideoClip clip = clip_by_id(fx.cfg, 0);
    AttentionMaps maps = extract_attention(fx.st, clip, 0, 1, 0.5, RngStream(4, "attn"));
    BBox box = subject_bbox(clip.params.subject, fx.cfg.image_size);
    double frac = attention_bbox_fraction(maps, box, fx.cfg.image_size);
    CHECK(frac >= 0.0);
    CHECK(frac <= 1.0);
    BBox whole{0, 0, fx.cfg.image_size, fx.cfg.image_size};
    CHECK(attention_bbox_fraction(maps, whole, fx.cfg.image_size) == doctest::Approx(1.0));
}

TEST_CASE("attention panels are written shallow to deep") {
    EvalFixture fx;
    VideoClip clip = clip_by_id(fx.cfg, 0);
    AttentionMaps maps = extract_attention(fx.st, clip, 0, 1, 0.5, RngStream(5, "attn"));
    auto dir = semo::testutil::fresh_dir("panels");
    export_attention_panels(maps, dir);
    int pngs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == maps.layers);
}

TEST_CASE("sweep rows come back sorted with adjacent pair counts") {
    RunConfig cfg = semo::testutil::tiny_config();
    SweepBudget budget;
    budget.steps_image = 2;
    budget.eval_clips = 2;
    budget.dataset_clips = 4;
    SweepReport rep = run_capacity_sweep(SweepAxis::token_dim, {16.0, 8.0}, cfg, budget);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].axis_value == 8.0);
    CHECK(rep.rows[1].axis_value == 16.0);
    CHECK(rep.total_pairs == 1);
    CHECK(rep.nondecreasing_pairs <= rep.total_pairs);

    std::string csv = sweep_csv(rep);
    CHECK(csv.find("axis") != std::string::npos);
    CHECK(csv.find("psnr") != std::string::npos);
    CHECK(csv.find(rep.rows[0].label) != std::string::npos);
}

TEST_CASE("a sweep cell is deterministic in its inputs") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.motion_dim = 8;
    SweepBudget budget;
    budget.steps_image = 2;
    budget.eval_clips = 2;
    budget.dataset_clips = 4;
    SweepCell a = run_sweep_cell(cfg, budget);
    SweepCell b = run_sweep_cell(cfg, budget);
    CHECK(a.diverged == b.diverged);
    CHECK(a.metrics.psnr == doctest::Approx(b.metrics.psnr).epsilon(1e-9));
}

TEST_CASE("transfer leakage is a nonnegative pixel distance") {
    EvalFixture fx;
    std::vector<std::uint64_t> ids = {0, 1, 2, 3};
    double cross = transfer_leakage(fx.st, ids, 3, RngStream(6, "leak"));
    double self = transfer_leakage(fx.st, ids, 3, RngStream(6, "leak"), true);
    CHECK(cross >= 0.0);
    CHECK(self >= 0.0);
    CHECK(std::isfinite(cross));
}

TEST_CASE("the mask ablation report carries both variants") {
    EvalFixture masked;
    EvalFixture unmasked;
    std::vector<std::uint64_t> ids = {0, 1, 2, 3};
    MaskAblationReport rep = mask_ablation(masked.st, unmasked.st, ids, 2, RngStream(7, "abl"));
    CHECK(rep.pairs == 2);
    CHECK(rep.masked.name != rep.unmasked.name);
    CHECK(std::isfinite(rep.masked.leakage));
    CHECK(std::isfinite(rep.unmasked.leakage));
    std::string csv = mask_ablation_csv(rep);
    CHECK(csv.find(rep.masked.name) != std::string::npos);
    CHECK(csv.find(rep.unmasked.name) != std::string::npos);
}

TEST_CASE("the high mask probe echoes its ratios") {
    EvalFixture fx;
    std::vector<std::uint64_t> ids = {0, 1};
    std::vector<double> ratios = {0.0, 0.9};
    auto rows = high_mask_probe(fx.st, ids, ratios, RngStream(8, "probe"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ratio == 0.0);
    CHECK(rows[1].ratio == 0.9);
    CHECK(std::isfinite(rows[0].psnr));
    std::string csv = mask_probe_csv(rows);
    CHECK(csv.find("ratio") != std::string::npos);
}

TEST_CASE("pearson recovers perfect and inverted correlation") {
    std::vector<double> x = {0, 1, 2, 3, 4};
    std::vector<double> y = {1, 3, 5, 7, 9};
    std::vector<double> z = {9, 7, 5, 3, 1};
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    CHECK(pearson(x, z) == doctest::Approx(-1.0));
    CHECK(std::abs(pearson(x, {2, 2, 2, 2, 2})) <= 1e-12);
}

TEST_CASE("mouth openness tracks the rendered mouth") {
    RngStream rng(9, "subject");
    SubjectDescriptor subject = sample_subject(rng, 0);
    FramePose open;
    open.mouth_open = 1.0;
    FramePose closed;
    closed.mouth_open = 0.0;
    Frame f_open = render_frame(subject, open, 64);
    Frame f_closed = render_frame(subject, closed, 64);
    CHECK(mouth_openness(f_open, subject, open) > mouth_openness(f_closed, subject, closed));
}

TEST_CASE("generator sync runs end to end on held-out clips") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.frames_per_clip = cfg.n_prev + cfg.window;
    TrainState st;
    init_models(st, cfg);
    std::vector<std::uint64_t> ids = {0, 1};
    SyncReport rep = generator_sync(st, ids, 2, RngStream(10, "sync"));
    CHECK(rep.clips == 2);
    CHECK(std::isfinite(rep.corr_true));
    CHECK(std::isfinite(rep.corr_shuffled));
    CHECK(rep.margin == doctest::Approx(rep.corr_true - rep.corr_shuffled));
}

TEST_CASE("animate produces the requested number of frames") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    VideoClip ref = clip_by_id(cfg, 0);
    int frames = 2 * cfg.window;
    Tensor<float> control({frames, cfg.control_dim});
    auto out = animate(st, ref, control, frames, RngStream(11, "anim"));
    REQUIRE(out.size() == static_cast<std::size_t>(frames));
    CHECK(out[0].shape == ref.frames[0].shape);
}

TEST_CASE("high frequency energy separates flat and noisy frames") {
    Frame flat({16, 16, 3});
    flat.fill(0.5f);
    CHECK(high_freq_energy(flat) == doctest::Approx(0.0));
    Frame noisy({16, 16, 3});
    RngStream rng(12, "noise");
    for (auto& v : noisy.data) v = static_cast<float>(rng.uniform());
    CHECK(high_freq_energy(noisy) > 0.0);
}
