#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "csrnet/tensor.hpp"

namespace csrnet {

// Sub-pixel object-center coordinate, x = column, y = row.
struct Point {
    double x = 0.0;
    double y = 0.0;
};

using HeadAnnotations = std::vector<Point>;

// Per-head Gaussian width rule: geometry-adaptive (sigma_i = beta * mean
// distance to the k nearest annotated neighbors) or a fixed sigma preset.
struct SigmaPolicy {
    enum class Kind { GeometryAdaptive, Fixed };
    Kind kind = Kind::GeometryAdaptive;
    double beta = 0.3;
    int k_neighbors = 3;
    double sigma = 15.0;

    static SigmaPolicy geometry_adaptive(double beta = 0.3, int k = 3) {
        SigmaPolicy p;
        p.kind = Kind::GeometryAdaptive;
        p.beta = beta;
        p.k_neighbors = k;
        return p;
    }
    static SigmaPolicy fixed(double sigma) {
        SigmaPolicy p;
        p.kind = Kind::Fixed;
        p.sigma = sigma;
        return p;
    }
};

// Nonnegative grid whose sum approximates the annotated object count.
struct DensityMap {
    int h = 0, w = 0;
    std::vector<double> values; // row-major

    DensityMap() = default;
    DensityMap(int h_, int w_, double fill = 0.0);

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * w + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * w + c]; }
    double sum() const;
    double max_value() const;
};

struct RoiMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> mask; // nonzero = inside

    bool inside(int r, int c) const { return mask[static_cast<std::size_t>(r) * w + c] != 0; }
};

// Mean Euclidean distance from points[index] to its min(k, n-1) nearest
// other points. Needs at least 2 points.
double knn_avg_distance(const HeadAnnotations& points, int index, int k);

// Sum of per-head isotropic Gaussians, each head's in-image mass
// renormalized to exactly 1. Heads are evaluated within ceil(4*sigma) of
// the center. Adaptive policy with a single point falls back to sigma 15.
DensityMap generate_density_map(int h, int w, const HeadAnnotations& points,
                                const SigmaPolicy& policy);

// Zero values outside the ROI and drop annotations whose nearest pixel is
// outside it.
std::pair<DensityMap, HeadAnnotations> apply_roi_mask(const DensityMap& map, const RoiMask& roi,
                                                      const HeadAnnotations& points);
std::pair<Tensor4, HeadAnnotations> apply_roi_mask(const Tensor4& image, const RoiMask& roi,
                                                   const HeadAnnotations& points);

// Non-overlapping factor x factor block summation; zero-pads right/bottom
// when the dims do not divide. Total mass is preserved.
DensityMap downsample_density_map(const DensityMap& map, int factor);

// Patch helpers used by the augmentation pipeline, which crops and mirrors
// ground-truth density alongside the image instead of re-blurring points.
DensityMap crop_density(const DensityMap& map, int y0, int x0, int ph, int pw);
DensityMap mirror_density_horizontal(const DensityMap& map);

Tensor4 density_to_tensor(const DensityMap& map);
DensityMap density_from_tensor(const Tensor4& t, int batch = 0, int channel = 0);

} // namespace csrnet
