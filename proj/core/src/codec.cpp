#include "semo/codec.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "semo/nn.hpp"

namespace semo {

FrameLatent space_to_depth_encode(const Frame& frame) {
    int H = frame.shape[0], W = frame.shape[1], C = frame.shape[2];
    if (H % 4 != 0 || W % 4 != 0)
        throw codec_error("space_to_depth: frame dimensions must be divisible by 4");
    int h = H / 4, w = W / 4;
    FrameLatent latent({h, w, 16 * C});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx)
                    for (int ch = 0; ch < C; ++ch) {
                        std::size_t src =
                            ((static_cast<std::size_t>(4 * y + dy) * W) + (4 * x + dx)) * C + ch;
                        std::size_t dst = ((static_cast<std::size_t>(y) * w) + x) * (16 * C) +
                                          (dy * 4 + dx) * C + ch;
                        latent.data[dst] = frame.data[src];
                    }
    return latent;
}

Frame space_to_depth_decode(const FrameLatent& latent) {
    int h = latent.shape[0], w = latent.shape[1], c = latent.shape[2];
    if (c % 16 != 0) throw codec_error("space_to_depth: channel count must be divisible by 16");
    int C = c / 16;
    Frame frame({4 * h, 4 * w, C});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx)
                    for (int ch = 0; ch < C; ++ch) {
                        std::size_t dst =
                            ((static_cast<std::size_t>(4 * y + dy) * 4 * w) + (4 * x + dx)) * C + ch;
                        std::size_t src = ((static_cast<std::size_t>(y) * w) + x) * c +
                                          (dy * 4 + dx) * C + ch;
                        frame.data[dst] = latent.data[src];
                    }
    return frame;
}

namespace {

// Frame -> [n_patches, 48] rows of flattened 4x4x3 patches.
Tensor<float> frame_patches(const Frame& frame) {
    FrameLatent l = space_to_depth_encode(frame);
    int n = l.shape[0] * l.shape[1];
    return Tensor<float>({n, l.shape[2]}, std::move(l.data));
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Columns of
// vecs come back as eigenvectors sorted by descending eigenvalue.
void symmetric_eigen(std::vector<double> a, int n, std::vector<double>& vals,
                     std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<std::size_t>(i * n + i)] = 1.0;
    auto at = [&](std::vector<double>& m, int r, int c) -> double& {
        return m[static_cast<std::size_t>(r * n + c)];
    };
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = at(a, p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = at(a, k, p), akq = at(a, k, q);
                    at(a, k, p) = c * akp - s * akq;
                    at(a, k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = at(a, p, k), aqk = at(a, q, k);
                    at(a, p, k) = c * apk - s * aqk;
                    at(a, q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = at(vecs, k, p), vkq = at(vecs, k, q);
                    at(vecs, k, p) = c * vkp - s * vkq;
                    at(vecs, k, q) = s * vkp + c * vkq;
                }
            }
    }
    vals.resize(static_cast<std::size_t>(n));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        vals[static_cast<std::size_t>(i)] = at(a, i, i);
        order[static_cast<std::size_t>(i)] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return vals[static_cast<std::size_t>(x)] > vals[static_cast<std::size_t>(y)]; });
    std::vector<double> sorted_vals(static_cast<std::size_t>(n));
    std::vector<double> sorted_vecs(vecs.size());
    for (int j = 0; j < n; ++j) {
        int src = order[static_cast<std::size_t>(j)];
        sorted_vals[static_cast<std::size_t>(j)] = vals[static_cast<std::size_t>(src)];
        for (int i = 0; i < n; ++i)
            sorted_vecs[static_cast<std::size_t>(i * n + j)] = at(vecs, i, src);
    }
    vals = std::move(sorted_vals);
    vecs = std::move(sorted_vecs);
}

}  // namespace

void TinyAe::init(int c, RngStream& rng) {
    latent_channels = c;
    float std = 1.0f / std::sqrt(48.0f);
    enc_w = Parameter<float>("enc_w", randn_tensor<float>({48, c}, rng, std));
    enc_b = Parameter<float>("enc_b", Tensor<float>({1, c}));
    dec_w = Parameter<float>("dec_w",
                             randn_tensor<float>({c, 48}, rng, 1.0f / std::sqrt(static_cast<float>(c))));
    dec_b = Parameter<float>("dec_b", Tensor<float>({1, 48}));
}

FrameLatent TinyAe::encode(const Frame& frame) const {
    Tensor<float> patches = frame_patches(frame);
    int n = patches.rows();
    Tensor<float> z({n, latent_channels});
    matmul_into(patches, false, enc_w.value, false, z);
    for (int r = 0; r < n; ++r)
        for (int c2 = 0; c2 < latent_channels; ++c2)
            z.at(r, c2) += enc_b.value.data[static_cast<std::size_t>(c2)];
    int side = frame.shape[0] / 4;
    z.shape = {side, side, latent_channels};
    return z;
}

Frame TinyAe::decode(const FrameLatent& latent) const {
    int h = latent.shape[0], w = latent.shape[1];
    Tensor<float> z({h * w, latent_channels});
    z.data = latent.data;
    Tensor<float> patches({h * w, 48});
    matmul_into(z, false, dec_w.value, false, patches);
    for (int r = 0; r < h * w; ++r)
        for (int c2 = 0; c2 < 48; ++c2)
            patches.at(r, c2) += dec_b.value.data[static_cast<std::size_t>(c2)];
    FrameLatent grid({h, w, 48});
    grid.data = std::move(patches.data);
    return space_to_depth_decode(grid);
}

std::vector<Parameter<float>*> TinyAe::params() {
    return {&enc_w, &enc_b, &dec_w, &dec_b};
}

double TinyAe::pretrain(const RunConfig& cfg, int steps, int clips) {
    RngStream master(cfg.seed, "tiny_ae");
    auto init_rng = master.split("init");
    init(cfg.codec_latent_channels, init_rng);

    std::vector<Tensor<float>> pools;
    auto data_rng = master.split("data");
    for (int i = 0; i < clips; ++i) {
        VideoClip clip = synth_clip(cfg, data_rng.split("clip", static_cast<std::uint64_t>(i)), 4);
        for (auto& f : clip.frames) pools.push_back(frame_patches(f));
    }

    // closed-form fit: the best linear map through c channels projects
    // mean-centered patches onto the top c principal components
    const int d = 48;
    std::vector<double> mean(d, 0.0);
    std::size_t n_rows = 0;
    for (const auto& pool : pools) {
        for (int r = 0; r < pool.rows(); ++r)
            for (int c2 = 0; c2 < d; ++c2)
                mean[static_cast<std::size_t>(c2)] += pool.at(r, c2);
        n_rows += static_cast<std::size_t>(pool.rows());
    }
    for (auto& m : mean) m /= static_cast<double>(n_rows);
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (const auto& pool : pools)
        for (int r = 0; r < pool.rows(); ++r)
            for (int i = 0; i < d; ++i) {
                double xi = pool.at(r, i) - mean[static_cast<std::size_t>(i)];
                for (int j = i; j < d; ++j)
                    cov[static_cast<std::size_t>(i * d + j)] +=
                        xi * (pool.at(r, j) - mean[static_cast<std::size_t>(j)]);
            }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j)
            cov[static_cast<std::size_t>(i * d + j)] = cov[static_cast<std::size_t>(j * d + i)];
    for (auto& v : cov) v /= static_cast<double>(n_rows);

    std::vector<double> eig_vals, eig_vecs;
    symmetric_eigen(cov, d, eig_vals, eig_vecs);
    int c = latent_channels;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < c; ++j) {
            auto v = static_cast<float>(eig_vecs[static_cast<std::size_t>(i * d + j)]);
            enc_w.value.at(i, j) = v;
            dec_w.value.at(j, i) = v;
        }
    for (int j = 0; j < c; ++j) {
        double b = 0.0;
        for (int i = 0; i < d; ++i)
            b -= mean[static_cast<std::size_t>(i)] * eig_vecs[static_cast<std::size_t>(i * d + j)];
        enc_b.value.data[static_cast<std::size_t>(j)] = static_cast<float>(b);
    }
    for (int i = 0; i < d; ++i)
        dec_b.value.data[static_cast<std::size_t>(i)] = static_cast<float>(mean[static_cast<std::size_t>(i)]);

    // light gradient refinement; plain small steps so a converged fit
    // is not perturbed the way an adaptive optimizer would
    auto pick = master.split("batch");
    for (int s = 0; s < steps; ++s) {
        const Tensor<float>& patches =
            pools[static_cast<std::size_t>(pick.uniform_int(pools.size()))];
        for (auto* p : params()) p->zero_grad();
        Graph<float> g;
        auto x = g.constant(patches);
        auto z = g.add_row(g.matmul(x, g.param(enc_w)), g.param(enc_b));
        auto y = g.add_row(g.matmul(z, g.param(dec_w)), g.param(dec_b));
        g.backward(g.mse(y, x));
        for (auto* p : params())
            for (std::int64_t i = 0; i < p->value.size(); ++i)
                p->value.data[i] -= 1e-3f * p->grad.data[i];
    }

    double sum_sq = 0.0;
    std::size_t n_vals = 0;
    for (const auto& pool : pools) {
        Tensor<float> z({pool.rows(), c});
        matmul_into(pool, false, enc_w.value, false, z);
        for (int r = 0; r < pool.rows(); ++r)
            for (int j = 0; j < c; ++j)
                z.at(r, j) += enc_b.value.data[static_cast<std::size_t>(j)];
        Tensor<float> y({pool.rows(), d});
        matmul_into(z, false, dec_w.value, false, y);
        for (int r = 0; r < pool.rows(); ++r)
            for (int j = 0; j < d; ++j) {
                double e = y.at(r, j) + dec_b.value.data[static_cast<std::size_t>(j)] - pool.at(r, j);
                sum_sq += e * e;
            }
        n_vals += static_cast<std::size_t>(pool.size());
    }
    double mse = sum_sq / static_cast<double>(n_vals);
    return mse > 1e-10 ? 10.0 * std::log10(1.0 / mse) : 99.0;
}

Codec::Codec(const RunConfig& cfg) : kind_(cfg.frame_codec) {
    channels_ = cfg.latent_channels();
    ae_.latent_channels = cfg.codec_latent_channels;
}

FrameLatent Codec::encode_frame(const Frame& frame) const {
    if (kind_ == FrameCodec::space_to_depth) return space_to_depth_encode(frame);
    if (ae_.enc_w.value.empty()) throw codec_error("tiny_ae codec used before pretraining");
    return ae_.encode(frame);
}

Frame Codec::decode_frame(const FrameLatent& latent) const {
    if (kind_ == FrameCodec::space_to_depth) return space_to_depth_decode(latent);
    if (ae_.dec_w.value.empty()) throw codec_error("tiny_ae codec used before pretraining");
    return ae_.decode(latent);
}

}  // namespace semo
