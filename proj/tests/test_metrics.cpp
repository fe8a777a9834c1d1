#include <doctest.h>

#include "semo/metrics.hpp"

using namespace semo;

namespace {

Frame constant_frame(int size, float v) {
    Frame f({size, size, 3});
    f.fill(v);
    return f;
}

Frame random_frame(int size, std::uint64_t seed, float lo = 0.2f, float hi = 0.8f) {
    Frame f({size, size, 3});
    RngStream rng(seed, "frame");
    for (auto& v : f.data) v = static_cast<float>(rng.uniform(lo, hi));
    return f;
}

}  // namespace

TEST_CASE("identical clips hit the metric caps") {
    std::vector<Frame> clip = {random_frame(32, 1), random_frame(32, 2)};
    CHECK(psnr(clip, clip) == doctest::Approx(99.0));
    CHECK(ssim(clip, clip) == doctest::Approx(1.0));
    CHECK(l1(clip, clip) == doctest::Approx(0.0));
}

TEST_CASE("a uniform 0.1 offset gives exactly 20 dB") {
    Frame a = random_frame(32, 3, 0.2f, 0.8f);
    Frame b = a;
    for (auto& v : b.data) v += 0.1f;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));
}

TEST_CASE("zeros versus ones has unit l1") {
    Frame z = constant_frame(16, 0.0f);
    Frame o = constant_frame(16, 1.0f);
    CHECK(l1(z, o) == doctest::Approx(1.0));
}

TEST_CASE("metrics are symmetric") {
    Frame a = random_frame(32, 4);
    Frame b = random_frame(32, 5);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)));
    CHECK(l1(a, b) == doctest::Approx(l1(b, a)));
}

TEST_CASE("ssim stays within its range and drops with noise") {
    Frame a = random_frame(32, 6);
    Frame b = a;
    RngStream rng(7, "noise");
    for (auto& v : b.data)
        v = std::clamp(v + 0.2f * static_cast<float>(rng.normal()), 0.0f, 1.0f);
    double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s < 1.0);
    CHECK(s < ssim(a, a));
}

TEST_CASE("pooled clip psnr uses the pooled mse") {
    Frame a0 = constant_frame(16, 0.5f);
    Frame a1 = constant_frame(16, 0.5f);
    Frame b0 = a0;
    Frame b1 = a1;
    for (auto& v : b0.data) v += 0.1f;  // frame 0 off by 0.1, frame 1 exact
    double p = psnr({a0, a1}, {b0, b1});
    // pooled mse = 0.01/2
    CHECK(p == doctest::Approx(10.0 * std::log10(2.0 / 0.01)).epsilon(1e-4));
}

TEST_CASE("shape mismatches are rejected") {
    Frame a({16, 16, 3});
    Frame b({32, 32, 3});
    CHECK_THROWS_AS(psnr(a, b), metric_error);
    CHECK_THROWS_AS(ssim(a, b), metric_error);
    CHECK_THROWS_AS(l1(a, b), metric_error);
    CHECK_THROWS_AS(psnr(std::vector<Frame>{a}, std::vector<Frame>{}), metric_error);
}

TEST_CASE("metric_report averages per-clip values") {
    std::vector<Frame> a = {random_frame(16, 8)};
    std::vector<Frame> b = {random_frame(16, 9)};
    MetricReport rep = metric_report({a, a}, {a, b});
    REQUIRE(rep.per_clip.size() == 2);
    CHECK(rep.per_clip[0].psnr == doctest::Approx(99.0));
    CHECK(rep.psnr ==
          doctest::Approx(0.5 * (rep.per_clip[0].psnr + rep.per_clip[1].psnr)));
}
