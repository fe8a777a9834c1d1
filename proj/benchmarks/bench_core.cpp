#include <benchmark/benchmark.h>

#include "semo/codec.hpp"
#include "semo/decoder.hpp"
#include "semo/encoder.hpp"
#include "semo/generator.hpp"
#include "semo/sprite.hpp"
#include "semo/training.hpp"

using namespace semo;

namespace {

RunConfig bench_config() {
    RunConfig cfg;
    cfg.motion_dim = 64;
    cfg.encoder_layers = 3;
    cfg.encoder_dim = 64;
    cfg.decoder_layers = 3;
    cfg.decoder_dim = 64;
    cfg.generator_layers = 3;
    cfg.generator_dim = 64;
    return cfg;
}

void bm_render_frame(benchmark::State& state) {
    RngStream rng(1, "bench");
    SubjectDescriptor subject = sample_subject(rng, 0);
    FramePose pose;
    pose.mouth_open = 0.5;
    for (auto _ : state) benchmark::DoNotOptimize(render_frame(subject, pose, 32));
}
BENCHMARK(bm_render_frame);

void bm_space_to_depth_roundtrip(benchmark::State& state) {
    RngStream rng(2, "bench");
    Frame frame({32, 32, 3});
    for (auto& v : frame.data) v = static_cast<float>(rng.uniform());
    for (auto _ : state)
        benchmark::DoNotOptimize(space_to_depth_decode(space_to_depth_encode(frame)));
}
BENCHMARK(bm_space_to_depth_roundtrip);

void bm_encode_motion(benchmark::State& state) {
    RunConfig cfg = bench_config();
    MotionEncoder<float> enc;
    enc.init(cfg, RngStream(3, "init"));
    VideoClip clip = synth_clip(cfg, RngStream(4, "clip"), 1);
    Codec codec(cfg);
    auto seq = patchify(normalize_latent(codec.encode_frame(clip.frames[0])), cfg.patch_size);
    MaskedPatchSeq<float> unmasked{seq.tokens, seq.positions};
    for (auto _ : state) benchmark::DoNotOptimize(enc.encode_motion(unmasked));
}
BENCHMARK(bm_encode_motion);

void bm_decoder_velocity(benchmark::State& state) {
    RunConfig cfg = bench_config();
    DiffusionDecoder<float> dec;
    dec.init(cfg, RngStream(5, "init"));
    int t = cfg.tokens_per_frame(), d = cfg.patch_dim();
    RngStream rng(6, "bench");
    auto randn = [&](std::vector<int> shape) {
        Tensor<float> x(std::move(shape));
        for (auto& v : x.data) v = static_cast<float>(rng.normal());
        return x;
    };
    Tensor<float> z_r = randn({t, d}), z_n = randn({t, d});
    Tensor<float> m_r = randn({cfg.motion_tokens, cfg.motion_dim});
    Tensor<float> m_t = randn({cfg.motion_tokens, cfg.motion_dim});
    for (auto _ : state) {
        Graph<float> g;
        auto v = dec.transfer.forward(g, g.constant(z_r), g.constant(z_n), g.constant(m_r),
                                      g.constant(m_t), 0.5f);
        benchmark::DoNotOptimize(g.val(v));
    }
}
BENCHMARK(bm_decoder_velocity);

void bm_decoder_train_step(benchmark::State& state) {
    RunConfig cfg = bench_config();
    TrainState st;
    init_models(st, cfg);
    std::vector<std::uint64_t> ids = {0};
    std::uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            loss_autoencoder(st, ids, RngStream(seed++, "bench"), false));
}
BENCHMARK(bm_decoder_train_step)->Unit(benchmark::kMillisecond);

void bm_generator_window(benchmark::State& state) {
    RunConfig cfg = bench_config();
    MotionGenerator<float> gen;
    gen.init(cfg, RngStream(7, "init"));
    RngStream rng(8, "bench");
    auto randn = [&](std::vector<int> shape) {
        Tensor<float> x(std::move(shape));
        for (auto& v : x.data) v = static_cast<float>(rng.normal());
        return x;
    };
    std::vector<MotionToken> prev(static_cast<std::size_t>(cfg.n_prev),
                                  randn({cfg.motion_tokens, cfg.motion_dim}));
    MotionToken ref = randn({cfg.motion_tokens, cfg.motion_dim});
    Tensor<float> ctrl = randn({cfg.window, cfg.control_dim});
    std::uint64_t seed = 0;
    for (auto _ : state) {
        RngStream r(seed++, "gen");
        benchmark::DoNotOptimize(generate_window(gen, prev, ref, ctrl, cfg.sample_steps, r));
    }
}
BENCHMARK(bm_generator_window)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
