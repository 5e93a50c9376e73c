#include "csrnet/density.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace csrnet {

DensityMap::DensityMap(int h_, int w_, double fill) : h(h_), w(w_) {
    if (h < 1 || w < 1)
        throw std::invalid_argument("DensityMap: dims must be >= 1");
    values.assign(static_cast<std::size_t>(h) * w, fill);
}

double DensityMap::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

double DensityMap::max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
}

double knn_avg_distance(const HeadAnnotations& points, int index, int k) {
    const int n = static_cast<int>(points.size());
    if (n < 2)
        throw std::invalid_argument("knn_avg_distance: need at least 2 points");
    if (index < 0 || index >= n)
        throw std::invalid_argument("knn_avg_distance: index out of range");
    if (k < 1)
        throw std::invalid_argument("knn_avg_distance: k must be >= 1");
    std::vector<double> dist;
    dist.reserve(static_cast<std::size_t>(n) - 1);
    for (int i = 0; i < n; ++i) {
        if (i == index) continue;
        const double dx = points[i].x - points[index].x;
        const double dy = points[i].y - points[index].y;
        dist.push_back(std::sqrt(dx * dx + dy * dy));
    }
    const int take = std::min<int>(k, static_cast<int>(dist.size()));
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    double s = 0.0;
    for (int i = 0; i < take; ++i) s += dist[i];
    return s / take;
}

namespace {

double head_sigma(const HeadAnnotations& points, int index, const SigmaPolicy& policy) {
    if (policy.kind == SigmaPolicy::Kind::Fixed)
        return policy.sigma;
    if (points.size() < 2)
        return 15.0; // sparse-scene fallback: no neighbors to adapt to
    const double d = knn_avg_distance(points, index, policy.k_neighbors);
    return std::max(policy.beta * d, 1e-6);
}

} // namespace

DensityMap generate_density_map(int h, int w, const HeadAnnotations& points,
                                const SigmaPolicy& policy) {
    if (h < 1 || w < 1)
        throw std::invalid_argument("generate_density_map: dims must be >= 1");
    DensityMap map(h, w);
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        const Point& p = points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw std::invalid_argument("generate_density_map: non-finite coordinate at point " +
                                        std::to_string(i));
        if (p.x < 0.0 || p.x >= w || p.y < 0.0 || p.y >= h)
            throw std::invalid_argument("generate_density_map: point " + std::to_string(i) +
                                        " outside the grid");
        const double sigma = head_sigma(points, i, policy);
        const int radius = static_cast<int>(std::ceil(4.0 * sigma));
        const int r0 = std::max(0, static_cast<int>(std::floor(p.y)) - radius);
        const int r1 = std::min(h - 1, static_cast<int>(std::ceil(p.y)) + radius);
        const int c0 = std::max(0, static_cast<int>(std::floor(p.x)) - radius);
        const int c1 = std::min(w - 1, static_cast<int>(std::ceil(p.x)) + radius);

        std::vector<double> window(static_cast<std::size_t>(r1 - r0 + 1) * (c1 - c0 + 1));
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        double mass = 0.0;
        std::size_t wi = 0;
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c, ++wi) {
                const double dx = c - p.x;
                const double dy = r - p.y;
                const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
                window[wi] = v;
                mass += v;
            }
        }
        if (mass <= 0.0) {
            // window underflowed; deposit the whole head on the nearest pixel
            const int rr = std::clamp(static_cast<int>(std::lround(p.y)), 0, h - 1);
            const int cc = std::clamp(static_cast<int>(std::lround(p.x)), 0, w - 1);
            map.at(rr, cc) += 1.0;
            continue;
        }
        const double scale = 1.0 / mass;
        wi = 0;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c, ++wi)
                map.at(r, c) += window[wi] * scale;
    }
    return map;
}

namespace {

HeadAnnotations filter_points(const HeadAnnotations& points, const RoiMask& roi) {
    HeadAnnotations kept;
    kept.reserve(points.size());
    for (const Point& p : points) {
        const int r = std::clamp(static_cast<int>(std::lround(p.y)), 0, roi.h - 1);
        const int c = std::clamp(static_cast<int>(std::lround(p.x)), 0, roi.w - 1);
        if (roi.inside(r, c)) kept.push_back(p);
    }
    return kept;
}

} // namespace

std::pair<DensityMap, HeadAnnotations> apply_roi_mask(const DensityMap& map, const RoiMask& roi,
                                                      const HeadAnnotations& points) {
    if (map.h != roi.h || map.w != roi.w)
        throw std::invalid_argument("apply_roi_mask: map/mask dimension mismatch");
    DensityMap out = map;
    for (int r = 0; r < map.h; ++r)
        for (int c = 0; c < map.w; ++c)
            if (!roi.inside(r, c)) out.at(r, c) = 0.0;
    return {std::move(out), filter_points(points, roi)};
}

std::pair<Tensor4, HeadAnnotations> apply_roi_mask(const Tensor4& image, const RoiMask& roi,
                                                   const HeadAnnotations& points) {
    if (image.h != roi.h || image.w != roi.w)
        throw std::invalid_argument("apply_roi_mask: image/mask dimension mismatch");
    Tensor4 out = image;
    for (int b = 0; b < image.n; ++b)
        for (int ch = 0; ch < image.c; ++ch)
            for (int r = 0; r < image.h; ++r)
                for (int c = 0; c < image.w; ++c)
                    if (!roi.inside(r, c)) out.at(b, ch, r, c) = 0.0f;
    return {std::move(out), filter_points(points, roi)};
}

DensityMap downsample_density_map(const DensityMap& map, int factor) {
    if (factor < 1)
        throw std::invalid_argument("downsample_density_map: factor must be >= 1");
    if (factor == 1) return map;
    const int ho = (map.h + factor - 1) / factor;
    const int wo = (map.w + factor - 1) / factor;
    DensityMap out(ho, wo);
    for (int r = 0; r < map.h; ++r)
        for (int c = 0; c < map.w; ++c)
            out.at(r / factor, c / factor) += map.at(r, c);
    return out;
}

DensityMap crop_density(const DensityMap& map, int y0, int x0, int ph, int pw) {
    if (y0 < 0 || x0 < 0 || ph < 1 || pw < 1 || y0 + ph > map.h || x0 + pw > map.w)
        throw std::invalid_argument("crop_density: rect out of bounds");
    DensityMap out(ph, pw);
    for (int r = 0; r < ph; ++r)
        for (int c = 0; c < pw; ++c)
            out.at(r, c) = map.at(y0 + r, x0 + c);
    return out;
}

DensityMap mirror_density_horizontal(const DensityMap& map) {
    DensityMap out(map.h, map.w);
    for (int r = 0; r < map.h; ++r)
        for (int c = 0; c < map.w; ++c)
            out.at(r, map.w - 1 - c) = map.at(r, c);
    return out;
}

Tensor4 density_to_tensor(const DensityMap& map) {
    Tensor4 t(1, 1, map.h, map.w);
    for (std::size_t i = 0; i < map.values.size(); ++i)
        t.data[i] = static_cast<float>(map.values[i]);
    return t;
}

DensityMap density_from_tensor(const Tensor4& t, int batch, int channel) {
    DensityMap map(t.h, t.w);
    for (int r = 0; r < t.h; ++r)
        for (int c = 0; c < t.w; ++c)
            map.at(r, c) = static_cast<double>(t.at(batch, channel, r, c));
    return map;
}

} // namespace csrnet
