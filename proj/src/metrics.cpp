#include "csrnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace csrnet {

double estimated_count(const DensityMap& map) {
    return map.sum();
}

namespace {

double count_error(const EvalPair& p) {
    const double gt = p.ground_truth_count ? *p.ground_truth_count : p.ground_truth.sum();
    return estimated_count(p.predicted) - gt;
}

} // namespace

double mae(std::span<const EvalPair> pairs) {
    if (pairs.empty())
        throw std::invalid_argument("mae: empty pair list");
    double s = 0.0;
    for (const EvalPair& p : pairs) s += std::abs(count_error(p));
    return s / static_cast<double>(pairs.size());
}

double mse(std::span<const EvalPair> pairs) {
    if (pairs.empty())
        throw std::invalid_argument("mse: empty pair list");
    double s = 0.0;
    for (const EvalPair& p : pairs) {
        const double e = count_error(p);
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(pairs.size()));
}

double game(const DensityMap& pred, const DensityMap& gt, int level) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw std::invalid_argument("game: dimension mismatch");
    if (level < 0)
        throw std::invalid_argument("game: level must be >= 0");
    const int grid = 1 << level;
    const int rh = pred.h / grid; // 0 when grid > dims; last region then takes all
    const int rw = pred.w / grid;
    double total = 0.0;
    for (int gy = 0; gy < grid; ++gy) {
        const int r0 = gy * rh;
        const int r1 = (gy == grid - 1) ? pred.h : (gy + 1) * rh;
        for (int gx = 0; gx < grid; ++gx) {
            const int c0 = gx * rw;
            const int c1 = (gx == grid - 1) ? pred.w : (gx + 1) * rw;
            double dp = 0.0, dg = 0.0;
            for (int r = r0; r < r1; ++r) {
                for (int c = c0; c < c1; ++c) {
                    dp += pred.at(r, c);
                    dg += gt.at(r, c);
                }
            }
            total += std::abs(dp - dg);
        }
    }
    return total;
}

double game(std::span<const EvalPair> pairs, int level) {
    if (pairs.empty())
        throw std::invalid_argument("game: empty pair list");
    double s = 0.0;
    for (const EvalPair& p : pairs) s += game(p.predicted, p.ground_truth, level);
    return s / static_cast<double>(pairs.size());
}

std::pair<DensityMap, DensityMap> quality_preprocess(const DensityMap& pred, const DensityMap& gt,
                                                     int original_h, int original_w) {
    Tensor4d tp(1, 1, pred.h, pred.w);
    Tensor4d tg(1, 1, gt.h, gt.w);
    for (std::size_t i = 0; i < pred.values.size(); ++i) tp.data[i] = pred.values[i];
    for (std::size_t i = 0; i < gt.values.size(); ++i) tg.data[i] = gt.values[i];
    tp = bilinear_resize(tp, original_h, original_w);
    tg = bilinear_resize(tg, original_h, original_w);

    DensityMap rp(original_h, original_w), rg(original_h, original_w);
    rp.values.assign(tp.data.begin(), tp.data.end());
    rg.values.assign(tg.data.begin(), tg.data.end());
    const double denom = std::max(rg.max_value(), 1e-12);
    for (double& v : rp.values) v /= denom;
    for (double& v : rg.values) v /= denom;
    return {std::move(rp), std::move(rg)};
}

double psnr(const DensityMap& a, const DensityMap& b) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument("psnr: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    const double pixel_mse = s / static_cast<double>(a.values.size());
    if (pixel_mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / pixel_mse);
}

namespace {

// 1-D Gaussian window, length 11, sigma 1.5, normalized to sum 1.
std::vector<double> ssim_window() {
    constexpr int kHalf = 5;
    std::vector<double> w(2 * kHalf + 1);
    double s = 0.0;
    for (int i = -kHalf; i <= kHalf; ++i) {
        w[i + kHalf] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
        s += w[i + kHalf];
    }
    for (double& v : w) v /= s;
    return w;
}

// Separable windowed filtering, valid positions only.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& win) {
    const int k = static_cast<int>(win.size());
    const int wo = w - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * wo);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < wo; ++c) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += win[i] * img[static_cast<std::size_t>(r) * w + c + i];
            rows[static_cast<std::size_t>(r) * wo + c] = s;
        }
    }
    const int ho = h - k + 1;
    std::vector<double> out(static_cast<std::size_t>(ho) * wo);
    for (int r = 0; r < ho; ++r) {
        for (int c = 0; c < wo; ++c) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) s += win[i] * rows[static_cast<std::size_t>(r + i) * wo + c];
            out[static_cast<std::size_t>(r) * wo + c] = s;
        }
    }
    return out;
}

} // namespace

double ssim(const DensityMap& a, const DensityMap& b) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument("ssim: dimension mismatch");
    const std::vector<double> win = ssim_window();
    const int k = static_cast<int>(win.size());
    if (a.h < k || a.w < k)
        throw std::invalid_argument("ssim: maps smaller than the 11x11 window");

    const std::size_t n = a.values.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a.values[i] * a.values[i];
        bb[i] = b.values[i] * b.values[i];
        ab[i] = a.values[i] * b.values[i];
    }
    const std::vector<double> mu_a = filter_valid(a.values, a.h, a.w, win);
    const std::vector<double> mu_b = filter_valid(b.values, a.h, a.w, win);
    const std::vector<double> e_aa = filter_valid(aa, a.h, a.w, win);
    const std::vector<double> e_bb = filter_valid(bb, a.h, a.w, win);
    const std::vector<double> e_ab = filter_valid(ab, a.h, a.w, win);

    constexpr double c1 = 0.01 * 0.01; // (K1 * L)^2 with L = 1
    constexpr double c2 = 0.03 * 0.03;
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

} // namespace csrnet
