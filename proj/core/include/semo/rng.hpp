#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace semo {

// Deterministic, platform-independent random stream. A master seed fans
// out into labeled sub-streams ("data", "mask", "noise", "init", ...) so
// that draws in one stream never perturb another. The generator is
// splitmix64; distributions are hand-rolled from raw bits so results do
// not depend on the standard library implementation.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view stream_id)
        : base_(mix(seed ^ fnv1a(stream_id))), state_(base_), label_(stream_id) {}

    // Child stream with an extended label. Children are derived from the
    // parent's base state, not its position, so the draw history of the
    // parent never leaks into a child.
    RngStream split(std::string_view sub) const {
        RngStream child(0, "");
        child.base_ = mix(base_ ^ fnv1a(sub) ^ 0x9e3779b97f4a7c15ULL);
        child.state_ = child.base_;
        child.label_ = label_ + "/" + std::string(sub);
        return child;
    }
    RngStream split(std::string_view sub, std::uint64_t index) const {
        RngStream child = split(sub);
        child.base_ = mix(child.base_ ^ mix(index + 1));
        child.state_ = child.base_;
        return child;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Lemire-style rejection to avoid modulo bias.
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925287 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = uniform_int(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    // Draw k distinct indices out of [0, n), returned sorted ascending.
    std::vector<int> sorted_subset(int n, int k);

    const std::string& label() const { return label_; }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return z ^ (z >> 33);
    }

    std::uint64_t base_ = 0;
    std::uint64_t state_ = 0;
    std::string label_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline std::vector<int> RngStream::sorted_subset(int n, int k) {
    // Floyd's algorithm; result sorted so callers keep original order.
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = n - k; j < n; ++j) {
        int t = static_cast<int>(uniform_int(static_cast<std::uint64_t>(j) + 1));
        if (taken[static_cast<std::size_t>(t)])
            taken[static_cast<std::size_t>(j)] = true;
        else
            taken[static_cast<std::size_t>(t)] = true;
    }
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < n; ++i)
        if (taken[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

}  // namespace semo
