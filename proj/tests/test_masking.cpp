#include <doctest.h>

#include <cmath>

#include "semo/encoder.hpp"
#include "util.hpp"

using namespace semo;

namespace {

PatchSeq<float> random_patches(int t, int d, std::uint64_t seed) {
    PatchSeq<float> seq;
    seq.tokens = Tensor<float>({t, d});
    RngStream rng(seed, "patches");
    for (auto& v : seq.tokens.data) v = static_cast<float>(rng.normal());
    seq.positions.resize(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) seq.positions[static_cast<std::size_t>(i)] = i;
    return seq;
}

}  // namespace

TEST_CASE("patchify produces raster-order tokens of the right size") {
    Tensor<float> latent({8, 8, 48});
    RngStream rng(0, "latent");
    for (auto& v : latent.data) v = static_cast<float>(rng.uniform());

    PatchSeq<float> seq = patchify(latent, 2);
    CHECK(seq.tokens.rows() == 16);
    CHECK(seq.tokens.cols() == 2 * 2 * 48);
    for (std::size_t i = 1; i < seq.positions.size(); ++i)
        CHECK(seq.positions[i] > seq.positions[i - 1]);

    PatchSeq<float> whole = patchify(latent, 8);
    CHECK(whole.tokens.rows() == 1);

    Tensor<float> back = unpatchify(seq.tokens, 4, 2, 48);
    CHECK(max_abs_diff(latent, back) == 0.0f);
}

TEST_CASE("patchify is local: a single-cell change touches one token") {
    Tensor<float> latent({8, 8, 48});
    Tensor<float> other = latent;
    other.data[(3 * 8 + 5) * 48 + 7] += 1.0f;
    PatchSeq<float> a = patchify(latent, 2);
    PatchSeq<float> b = patchify(other, 2);
    int changed = 0;
    for (int r = 0; r < a.tokens.rows(); ++r)
        for (int c = 0; c < a.tokens.cols(); ++c)
            if (a.tokens.at(r, c) != b.tokens.at(r, c)) ++changed;
    CHECK(changed == 1);
}

TEST_CASE("patchify rejects non-dividing patch sizes") {
    Tensor<float> latent({8, 8, 3});
    CHECK_THROWS_AS(patchify(latent, 3), encoder_error);
}

TEST_CASE("kept count follows k = t - floor(ratio*t)") {
    RngStream rng(1, "mask");
    auto patches = random_patches(16, 4, 0);
    for (double ratio : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9}) {
        auto masked = apply_mask(patches, ratio, rng);
        int expected = 16 - static_cast<int>(std::floor(ratio * 16));
        CHECK(masked.tokens.rows() == expected);
        CHECK(masked.positions.size() == static_cast<std::size_t>(expected));
    }
    CHECK(apply_mask(patches, 0.9, rng).tokens.rows() == 2);
    auto full = apply_mask(patches, 1.0, rng);
    CHECK(full.tokens.rows() == 1);
    CHECK_THROWS_AS(apply_mask(patches, 1.5, rng), encoder_error);
}

TEST_CASE("ratio 0 keeps everything in order") {
    RngStream rng(2, "mask");
    auto patches = random_patches(16, 4, 1);
    auto masked = apply_mask(patches, 0.0, rng);
    CHECK(masked.tokens.rows() == 16);
    CHECK(masked.positions == patches.positions);
    CHECK(max_abs_diff(masked.tokens, patches.tokens) == 0.0f);
}

TEST_CASE("kept positions are strictly increasing over many draws") {
    RngStream rng(3, "mask");
    auto patches = random_patches(16, 4, 2);
    for (int trial = 0; trial < 10000; ++trial) {
        double ratio = rng.uniform(0.0, 0.9);
        auto masked = apply_mask(patches, ratio, rng);
        for (std::size_t i = 1; i < masked.positions.size(); ++i)
            CHECK(masked.positions[i] > masked.positions[i - 1]);
        for (std::size_t i = 0; i < masked.positions.size(); ++i) {
            int pos = masked.positions[i];
            CHECK(max_abs_diff(Tensor<float>({1, 4},
                                             {masked.tokens.at(static_cast<int>(i), 0),
                                              masked.tokens.at(static_cast<int>(i), 1),
                                              masked.tokens.at(static_cast<int>(i), 2),
                                              masked.tokens.at(static_cast<int>(i), 3)}),
                               Tensor<float>({1, 4},
                                             {patches.tokens.at(pos, 0), patches.tokens.at(pos, 1),
                                              patches.tokens.at(pos, 2),
                                              patches.tokens.at(pos, 3)})) == 0.0f);
        }
    }
}

TEST_CASE("each position is kept with frequency one half at ratio one half") {
    RngStream rng(4, "mask");
    auto patches = random_patches(16, 4, 3);
    std::vector<int> kept_count(16, 0);
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
        auto masked = apply_mask(patches, 0.5, rng);
        for (int pos : masked.positions) ++kept_count[static_cast<std::size_t>(pos)];
    }
    for (int c : kept_count) {
        double freq = static_cast<double>(c) / trials;
        CHECK(freq > 0.48);
        CHECK(freq < 0.52);
    }
}

TEST_CASE("mask ratio sampling matches the uniform distribution") {
    RngStream rng(5, "ratio");
    MaskRange fixed{0.0, 0.0};
    CHECK(sample_mask_ratio(fixed, rng) == 0.0);
    MaskRange point{0.9, 0.9};
    CHECK(sample_mask_ratio(point, rng) == doctest::Approx(0.9));

    MaskRange range{0.0, 0.9};
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_mask_ratio(range, rng);
    CHECK(std::abs(sum / n - 0.45) < 0.01);
}

TEST_CASE("encode_motion yields l x d_m for every mask ratio") {
    RunConfig cfg = testutil::tiny_config();
    cfg.motion_tokens = 2;
    MotionEncoder<float> enc;
    enc.init(cfg, RngStream(0, "init"));

    auto patches = random_patches(cfg.tokens_per_frame(), cfg.patch_dim(), 4);
    RngStream rng(6, "mask");
    for (double ratio : {0.0, 0.3, 0.6, 0.9}) {
        auto masked = apply_mask(patches, ratio, rng);
        MotionToken m = enc.encode_motion(masked);
        CHECK(m.rows() == cfg.motion_tokens);
        CHECK(m.cols() == cfg.motion_dim);
    }
}

TEST_CASE("encoder output depends on token order") {
    RunConfig cfg = testutil::tiny_config();
    MotionEncoder<float> enc;
    enc.init(cfg, RngStream(0, "init"));

    auto patches = random_patches(cfg.tokens_per_frame(), cfg.patch_dim(), 5);
    RngStream rng(7, "mask");
    auto masked = apply_mask(patches, 0.5, rng);
    MotionToken straight = enc.encode_motion(masked);

    MaskedPatchSeq<float> shuffled = masked;
    std::swap(shuffled.positions[0], shuffled.positions[1]);
    MotionToken swapped = enc.encode_motion(shuffled);
    CHECK(max_abs_diff(straight, swapped) > 0.0f);
}

TEST_CASE("different learnable-token inits give different motions") {
    RunConfig cfg = testutil::tiny_config();
    MotionEncoder<float> a, b;
    a.init(cfg, RngStream(0, "init"));
    b.init(cfg, RngStream(1, "init"));

    auto patches = random_patches(cfg.tokens_per_frame(), cfg.patch_dim(), 6);
    RngStream rng(8, "mask");
    auto masked = apply_mask(patches, 0.3, rng);
    CHECK(max_abs_diff(a.encode_motion(masked), b.encode_motion(masked)) > 0.0f);
}

TEST_CASE("empty masked sequence is rejected") {
    RunConfig cfg = testutil::tiny_config();
    MotionEncoder<float> enc;
    enc.init(cfg, RngStream(0, "init"));
    MaskedPatchSeq<float> empty;
    empty.tokens = Tensor<float>({0, cfg.patch_dim()});
    CHECK_THROWS_AS(enc.encode_motion(empty), encoder_error);
}
