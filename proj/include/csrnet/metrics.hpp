#pragma once

#include <optional>
#include <span>
#include <utility>

#include "csrnet/density.hpp"

namespace csrnet {

struct EvalPair {
    DensityMap predicted;
    DensityMap ground_truth;
    std::optional<double> ground_truth_count; // defaults to sum of the GT map
};

struct QualityScores {
    double psnr = 0.0; // decibels; +infinity for identical maps
    double ssim = 0.0; // in [-1, 1]
};

// Count estimate: sum over all pixels.
double estimated_count(const DensityMap& map);

// Mean absolute count error over the pair list.
double mae(std::span<const EvalPair> pairs);
// Root-mean-square count error (the square root is part of the definition).
double mse(std::span<const EvalPair> pairs);

// Sum over a 2^L x 2^L grid of regions of absolute regional count
// differences for one image pair; remainder rows/cols join the last region
// per axis. Level 0 equals the absolute count error.
double game(const DensityMap& pred, const DensityMap& gt, int level);
// Mean of per-image GAME over a pair list.
double game(std::span<const EvalPair> pairs, int level);

// Quality-metric preprocessing: bilinear-resize both maps to the original
// image size, then divide both by the ground-truth maximum so GT peaks at 1.
std::pair<DensityMap, DensityMap> quality_preprocess(const DensityMap& pred, const DensityMap& gt,
                                                     int original_h, int original_w);

// Peak signal-to-noise ratio with MAX = 1.0 on preprocessed maps; identical
// maps report +infinity (explicit branch, never an overflow).
double psnr(const DensityMap& a, const DensityMap& b);

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1.0, averaged over all window
// positions fully inside the maps.
double ssim(const DensityMap& a, const DensityMap& b);

} // namespace csrnet
