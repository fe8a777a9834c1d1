#include <doctest.h>

#include <cmath>

#include "semo/training.hpp"
#include "util.hpp"

using namespace semo;

namespace {

VelocityOracle exact_oracle() {
    return [](const Tensor<float>& clean, const Tensor<float>& eps) {
        Tensor<float> v(clean.shape);
        for (std::int64_t i = 0; i < clean.size(); ++i)
            v.data[i] = clean.data[i] - eps.data[i];
        return v;
    };
}

double max_grad_abs(const std::vector<Parameter<float>*>& params) {
    double worst = 0.0;
    for (auto* p : params)
        for (float g : p->grad.data) worst = std::max(worst, std::abs(static_cast<double>(g)));
    return worst;
}

}  // namespace

TEST_CASE("the exact velocity oracle drives the autoencoder loss to zero") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    VelocityOracle oracle = exact_oracle();
    std::vector<std::uint64_t> ids = {0, 1};
    CHECK(loss_autoencoder(st, ids, RngStream(1, "step"), false, &oracle) <= 1e-10);
    CHECK(loss_autoencoder(st, ids, RngStream(2, "step"), true, &oracle) <= 1e-10);
}

TEST_CASE("the exact velocity oracle drives the generator loss to zero") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.frames_per_clip = cfg.n_prev + cfg.window + 1;
    TrainState st;
    init_models(st, cfg);
    VelocityOracle oracle = exact_oracle();
    std::vector<std::uint64_t> ids = {0, 1};
    CHECK(loss_generator(st, ids, RngStream(3, "step"), &oracle) <= 1e-10);
}

TEST_CASE("a fresh model starts near the unit-variance velocity baseline") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    std::vector<std::uint64_t> ids = {0, 1};
    double loss = loss_autoencoder(st, ids, RngStream(4, "step"), false);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
}

TEST_CASE("the generator stage leaves the encoder untouched") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.frames_per_clip = cfg.n_prev + cfg.window + 1;
    TrainState st;
    init_models(st, cfg);
    for (auto* p : st.encoder.params()) p->zero_grad();
    for (auto* p : st.generator.params()) p->zero_grad();
    std::vector<std::uint64_t> ids = {0, 1};
    loss_generator(st, ids, RngStream(5, "step"));
    CHECK(max_grad_abs(st.encoder.params()) == 0.0);
    CHECK(max_grad_abs(st.generator.params()) > 0.0);
}

TEST_CASE("the image-space objective reaches the encoder parameters") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    // the decoder output head starts at zero, which blocks the chain
    // rule back to the encoder; nudge it off zero first
    RngStream nudger(99, "nudge");
    for (auto* p : st.decoder.params())
        for (auto& v : p->value.data) v += static_cast<float>(nudger.normal()) * 0.05f;
    for (auto* p : st.encoder.params()) p->zero_grad();
    std::vector<std::uint64_t> ids = {0};
    double loss = loss_autoencoder_image_space(st, ids, RngStream(6, "step"));
    CHECK(std::isfinite(loss));
    CHECK(max_grad_abs(st.encoder.params()) > 0.0);
}

TEST_CASE("losses do not depend on the batch order") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.frames_per_clip = cfg.n_prev + cfg.window + 1;
    TrainState st;
    init_models(st, cfg);
    std::vector<std::uint64_t> a = {0, 1, 2};
    std::vector<std::uint64_t> b = {2, 0, 1};

    auto rel = [](double x, double y) {
        return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-12});
    };
    CHECK(rel(loss_autoencoder(st, a, RngStream(7, "step"), false),
              loss_autoencoder(st, b, RngStream(7, "step"), false)) < 1e-6);
    CHECK(rel(loss_autoencoder(st, a, RngStream(8, "step"), true),
              loss_autoencoder(st, b, RngStream(8, "step"), true)) < 1e-6);
    CHECK(rel(loss_generator(st, a, RngStream(9, "step")),
              loss_generator(st, b, RngStream(9, "step"))) < 1e-6);
}

TEST_CASE("losses are reproducible from the step rng") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    std::vector<std::uint64_t> ids = {0, 1};
    double l1 = loss_autoencoder(st, ids, RngStream(10, "step"), false);
    double l2 = loss_autoencoder(st, ids, RngStream(10, "step"), false);
    CHECK(l1 == l2);
}

TEST_CASE("stage prerequisites are enforced") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainOptions opt;
    opt.out_dir = semo::testutil::fresh_dir("prereq");
    opt.steps_override = 1;
    opt.dataset_clips = 4;
    CHECK_THROWS_WITH_AS(train_stage("ae_video", cfg, opt),
                         doctest::Contains("missing prerequisite checkpoint"), training_error);
    CHECK_THROWS_WITH_AS(train_stage("generator", cfg, opt),
                         doctest::Contains("missing prerequisite checkpoint"), training_error);
    CHECK_THROWS_AS(train_stage("bogus", cfg, opt), training_error);
}

TEST_CASE("resuming mid-stage reproduces the uninterrupted run") {
    RunConfig cfg = semo::testutil::tiny_config();
    cfg.checkpoint_every = 2;
    cfg.steps_ae_image = 4;

    TrainOptions full;
    full.out_dir = semo::testutil::fresh_dir("full");
    full.dataset_clips = 4;
    Checkpoint done = train_stage("ae_image", cfg, full);
    CHECK(done.step == 4);

    TrainOptions half;
    half.out_dir = semo::testutil::fresh_dir("half");
    half.steps_override = 2;
    half.dataset_clips = 4;
    Checkpoint mid = train_stage("ae_image", cfg, half);
    CHECK(mid.step == 2);

    TrainOptions rest;
    rest.out_dir = semo::testutil::fresh_dir("rest");
    rest.resume = &mid;
    rest.dataset_clips = 4;
    Checkpoint resumed = train_stage("ae_image", cfg, rest);
    CHECK(resumed.step == 4);

    for (const auto& [comp, blobs] : done.components) {
        REQUIRE(resumed.components.count(comp) == 1);
        for (const auto& blob : blobs) {
            const Tensor<float>* other = resumed.find(comp, blob.name);
            REQUIRE(other != nullptr);
            CHECK(max_abs_diff(blob.value, *other) == 0.0f);
        }
    }
}

TEST_CASE("a resume checkpoint from another stage is rejected") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainOptions first;
    first.out_dir = semo::testutil::fresh_dir("stage_a");
    first.steps_override = 1;
    first.dataset_clips = 4;
    Checkpoint image = train_stage("ae_image", cfg, first);

    TrainOptions wrong;
    wrong.out_dir = semo::testutil::fresh_dir("stage_b");
    wrong.steps_override = 1;
    wrong.dataset_clips = 4;
    wrong.prev_stage = &image;
    wrong.resume = &image;
    CHECK_THROWS_WITH_AS(train_stage("ae_video", cfg, wrong),
                         doctest::Contains("resume checkpoint is for stage"), training_error);
}

TEST_CASE("checkpoints round-trip the full training state") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainState st;
    init_models(st, cfg);
    st.stage = "ae_video";
    st.step = 7;
    st.loss_history = {{1, 0.5}, {2, 0.25}};

    Checkpoint ck = make_checkpoint(st);
    auto dir = semo::testutil::fresh_dir("roundtrip");
    save_checkpoint(ck, dir);
    TrainState back = state_from_checkpoint(load_checkpoint(dir));

    CHECK(back.stage == "ae_video");
    CHECK(back.step == 7);
    REQUIRE(back.loss_history.size() == 2);
    CHECK(back.loss_history[1].second == doctest::Approx(0.25));

    auto eq = [](std::vector<Parameter<float>*> a, std::vector<Parameter<float>*> b) {
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(max_abs_diff(a[i]->value, b[i]->value) == 0.0f);
    };
    eq(st.encoder.params(), back.encoder.params());
    eq(st.decoder.params(), back.decoder.params());
    eq(st.generator.params(), back.generator.params());
}

TEST_CASE("training logs reach the output directory") {
    RunConfig cfg = semo::testutil::tiny_config();
    TrainOptions opt;
    opt.out_dir = semo::testutil::fresh_dir("logs");
    opt.steps_override = 2;
    opt.dataset_clips = 4;
    Checkpoint ck = train_stage("ae_image", cfg, opt);
    CHECK(ck.loss_history.size() == 2);
    CHECK(std::filesystem::exists(opt.out_dir / "manifest.txt"));
    CHECK(std::filesystem::exists(opt.out_dir / "log.txt"));
}
