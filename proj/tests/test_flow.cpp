#include <doctest.h>

#include "semo/decoder.hpp"
#include "semo/generator.hpp"

using namespace semo;

namespace {

Tensor<float> random_tensor(int r, int c, RngStream& rng) {
    Tensor<float> t({r, c});
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

TEST_CASE("noising at t=0 returns the data and at t=1 the noise") {
    RngStream rng(0, "flow");
    Tensor<float> z = random_tensor(4, 6, rng);
    Tensor<float> eps = random_tensor(4, 6, rng);
    CHECK(max_abs_diff(noise_latent(z, 0.0f, eps), z) == 0.0f);
    CHECK(max_abs_diff(noise_latent(z, 1.0f, eps), eps) == 0.0f);
    CHECK(max_abs_diff(noise_motion(z, 0.0f, eps), z) == 0.0f);
    CHECK(max_abs_diff(noise_motion(z, 1.0f, eps), eps) == 0.0f);
}

TEST_CASE("noising interpolates linearly at intermediate times") {
    Tensor<float> z({1, 2}, {2.0f, 4.0f});
    Tensor<float> eps({1, 2}, {0.0f, 0.0f});
    Tensor<float> mid = noise_latent(z, 0.5f, eps);
    CHECK(mid.data[0] == doctest::Approx(1.0f));
    CHECK(mid.data[1] == doctest::Approx(2.0f));

    Tensor<float> m({1, 1}, {4.0f});
    Tensor<float> e({1, 1}, {0.0f});
    CHECK(noise_motion(m, 0.25f, e).data[0] == doctest::Approx(3.0f));
}

TEST_CASE("velocity target is the plain difference") {
    Tensor<float> z({1, 2}, {1.0f, 0.0f});
    Tensor<float> eps({1, 2}, {0.0f, 1.0f});
    Tensor<float> v = true_velocity(z, eps);
    CHECK(v.data[0] == doctest::Approx(1.0f));
    CHECK(v.data[1] == doctest::Approx(-1.0f));
    CHECK(max_abs_diff(true_velocity(eps, eps), Tensor<float>({1, 2})) == 0.0f);
}

TEST_CASE("noising and velocity satisfy (1-t)z + t*eps = z - t*(z-eps)") {
    RngStream rng(1, "identity");
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor<float> z = random_tensor(2, 8, rng);
        Tensor<float> eps = random_tensor(2, 8, rng);
        auto t = static_cast<float>(rng.uniform());
        Tensor<float> lhs = noise_latent(z, t, eps);
        Tensor<float> v = true_velocity(z, eps);
        for (std::int64_t i = 0; i < z.size(); ++i) {
            float rhs = z.data[i] - t * v.data[i];
            // relative to the operand scale, not the possibly cancelling result
            float denom = std::max({std::abs(z.data[i]), std::abs(eps.data[i]), 1.0f});
            CHECK(std::abs(lhs.data[i] - rhs) / denom < 1e-6f);
        }
    }
}

TEST_CASE("shape mismatches are rejected") {
    Tensor<float> z({2, 2});
    Tensor<float> eps({2, 3});
    CHECK_THROWS_AS(noise_latent(z, 0.5f, eps), decoder_error);
    CHECK_THROWS_AS(true_velocity(z, eps), decoder_error);
}

TEST_CASE("Euler sampling with a constant oracle field recovers the target") {
    RngStream rng(2, "euler");
    Tensor<float> target = random_tensor(3, 5, rng);
    Tensor<float> eps = random_tensor(3, 5, rng);
    Tensor<float> field = true_velocity(target, eps);

    for (int steps : {1, 2, 4, 16}) {
        Tensor<float> out = euler_sample<float>(
            eps, steps, [&](const Tensor<float>&, float) { return field; });
        CHECK(max_abs_diff(out, target) < 1e-5f);
    }
}

TEST_CASE("Euler sampling validates its inputs") {
    Tensor<float> z({1, 1});
    CHECK_THROWS_AS(
        euler_sample<float>(z, 0, [](const Tensor<float>& x, float) { return x; }),
        decoder_error);
    CHECK_THROWS_AS(euler_sample<float>(z, 2,
                                        [](const Tensor<float>&, float) {
                                            Tensor<float> bad({2, 2});
                                            return bad;
                                        }),
                    decoder_error);
    Tensor<float> inf_field({1, 1});
    inf_field.data[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(euler_sample<float>(
                        z, 1, [&](const Tensor<float>&, float) { return inf_field; }),
                    decoder_error);
}
