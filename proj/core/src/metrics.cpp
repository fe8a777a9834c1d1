#include "semo/metrics.hpp"

#include <cmath>

namespace semo {

namespace {

constexpr double kPsnrCap = 99.0;
constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03;

void check_shapes(const Frame& a, const Frame& b) {
    if (!a.same_shape(b)) throw metric_error("metric: shape mismatch");
}

double frame_sq_err(const Frame& a, const Frame& b) {
    double s = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s;
}

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> w(kWin * kWin);
        double sum = 0;
        int c = kWin / 2;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                double d2 = (y - c) * (y - c) + (x - c) * (x - c);
                w[static_cast<std::size_t>(y * kWin + x)] = std::exp(-d2 / (2 * kSigma * kSigma));
                sum += w[static_cast<std::size_t>(y * kWin + x)];
            }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return k;
}

double ssim_channel(const Frame& a, const Frame& b, int ch) {
    const auto& w = gaussian_kernel();
    int H = a.shape[0], W = a.shape[1], C = a.shape[2];
    const double c1 = kK1 * kK1, c2 = kK2 * kK2;
    auto px = [&](const Frame& f, int y, int x) {
        return static_cast<double>(f.data[(static_cast<std::size_t>(y) * W + x) * C + ch]);
    };
    double total = 0;
    int count = 0;
    for (int y = 0; y + kWin <= H; ++y)
        for (int x = 0; x + kWin <= W; ++x) {
            double mu_a = 0, mu_b = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    double wi = w[static_cast<std::size_t>(i * kWin + j)];
                    mu_a += wi * px(a, y + i, x + j);
                    mu_b += wi * px(b, y + i, x + j);
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    double wi = w[static_cast<std::size_t>(i * kWin + j)];
                    double da = px(a, y + i, x + j) - mu_a;
                    double db = px(b, y + i, x + j) - mu_b;
                    va += wi * da * da;
                    vb += wi * db * db;
                    cov += wi * da * db;
                }
            double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
            total += num / den;
            ++count;
        }
    if (count == 0) throw metric_error("ssim: image smaller than the 11x11 window");
    return total / count;
}

}  // namespace

double psnr(const Frame& a, const Frame& b) {
    check_shapes(a, b);
    double mse = frame_sq_err(a, b) / static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const std::vector<Frame>& a, const std::vector<Frame>& b) {
    if (a.size() != b.size() || a.empty()) throw metric_error("psnr: clip length mismatch");
    double se = 0;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        check_shapes(a[i], b[i]);
        se += frame_sq_err(a[i], b[i]);
        n += a[i].size();
    }
    double mse = se / static_cast<double>(n);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Frame& a, const Frame& b) {
    check_shapes(a, b);
    int C = a.shape[2];
    double s = 0;
    for (int ch = 0; ch < C; ++ch) s += ssim_channel(a, b, ch);
    return s / C;
}

double ssim(const std::vector<Frame>& a, const std::vector<Frame>& b) {
    if (a.size() != b.size() || a.empty()) throw metric_error("ssim: clip length mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += ssim(a[i], b[i]);
    return s / static_cast<double>(a.size());
}

double l1(const Frame& a, const Frame& b) {
    check_shapes(a, b);
    double s = 0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return s / static_cast<double>(a.size());
}

double l1(const std::vector<Frame>& a, const std::vector<Frame>& b) {
    if (a.size() != b.size() || a.empty()) throw metric_error("l1: clip length mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += l1(a[i], b[i]);
    return s / static_cast<double>(a.size());
}

MetricReport metric_report(const std::vector<std::vector<Frame>>& a,
                           const std::vector<std::vector<Frame>>& b) {
    if (a.size() != b.size() || a.empty()) throw metric_error("metric_report: clip count mismatch");
    MetricReport r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ClipMetrics c{psnr(a[i], b[i]), ssim(a[i], b[i]), l1(a[i], b[i])};
        r.psnr += c.psnr;
        r.ssim += c.ssim;
        r.l1 += c.l1;
        r.per_clip.push_back(c);
    }
    auto n = static_cast<double>(a.size());
    r.psnr /= n;
    r.ssim /= n;
    r.l1 /= n;
    return r;
}

}  // namespace semo
