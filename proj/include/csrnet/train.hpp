#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csrnet/density.hpp"
#include "csrnet/errors.hpp"
#include "csrnet/model.hpp"

namespace csrnet {

struct TrainConfig {
    double learning_rate = 1e-6;
    int epochs = 0;
    int batch_size = 1;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;          // 0 = no checkpoints
    int target_downsample = 8;
    std::string checkpoint_prefix;     // checkpoints/loss log written when non-empty
};

struct TrainingSample {
    Tensor4 image;      // 1 x C x h x w
    DensityMap target;  // network-output resolution
};

template <typename T>
struct LossResultT {
    double loss = 0.0;
    Tensor4T<T> grad;
};

// Batch Euclidean loss: (1/2N) * sum_i ||pred_i - target_i||^2 over all
// pixels, gradient (1/N) * (pred - target). pred is N x 1 x h x w with one
// target per batch entry.
template <typename T>
LossResultT<T> euclidean_loss(const Tensor4T<T>& pred, std::span<const DensityMap> targets) {
    if (pred.c != 1)
        throw std::invalid_argument("euclidean_loss: prediction must be single-channel");
    if (targets.empty() || static_cast<std::size_t>(pred.n) != targets.size())
        throw std::invalid_argument("euclidean_loss: batch size mismatch");
    LossResultT<T> res;
    res.grad = Tensor4T<T>(pred.n, 1, pred.h, pred.w);
    const double inv_n = 1.0 / static_cast<double>(pred.n);
    double acc = 0.0;
    for (int b = 0; b < pred.n; ++b) {
        const DensityMap& t = targets[static_cast<std::size_t>(b)];
        if (t.h != pred.h || t.w != pred.w)
            throw std::invalid_argument("euclidean_loss: target dims do not match prediction");
        for (int r = 0; r < pred.h; ++r) {
            for (int c = 0; c < pred.w; ++c) {
                const double d = static_cast<double>(pred.at(b, 0, r, c)) - t.at(r, c);
                acc += d * d;
                res.grad.at(b, 0, r, c) = static_cast<T>(d * inv_n);
            }
        }
    }
    res.loss = 0.5 * inv_n * acc;
    return res;
}

struct PatchRect {
    int y0 = 0, x0 = 0, h = 0, w = 0;
};

struct PatchSample {
    Tensor4 image;
    HeadAnnotations points;
    PatchRect rect;       // source rect in the original image
    bool mirrored = false;
};

// 9 half-dimension crops (4 non-overlapping quarters + 5 seeded random
// positions) followed by their horizontal mirrors: 18 patches per scene.
// Annotations are translated into patch coordinates with the half-open rule
// x0 <= x < x0 + patch_w; mirroring maps x to (patch_w - 1) - x.
std::vector<PatchSample> augment_nine_patches(const Tensor4& image, const HeadAnnotations& points,
                                              std::uint64_t seed);

Tensor4 crop_image(const Tensor4& image, const PatchRect& rect);
Tensor4 mirror_image_horizontal(const Tensor4& image);

// Training/eval target at network-output resolution: floor(h/f) x floor(w/f),
// built by cropping to the f-divisible extent (the remainder band the
// poolings discard) and block-summing.
DensityMap density_target(const DensityMap& full, int factor);

// theta <- theta - lr * grad for every kernel entry and bias. Throws
// divergence_error on non-finite gradients.
void sgd_step(ParamStore& params, const ParamStore& grads, double lr);

struct TrainResult {
    ParamStore params;
    std::vector<double> epoch_loss; // mean per-sample loss per epoch
};

// Deterministic end-to-end loop: seeded init, seeded per-epoch shuffle,
// one SGD step per batch. Writes "<prefix>.epochN.csrw" checkpoints and a
// "<prefix>.loss.tsv" sidecar ("epoch<TAB>mean_loss") when configured.
TrainResult train_loop(const NetworkConfig& config, const TrainConfig& tc,
                       const std::vector<TrainingSample>& dataset);

} // namespace csrnet
