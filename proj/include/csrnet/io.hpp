#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csrnet/density.hpp"
#include "csrnet/tensor.hpp"

namespace csrnet {

struct SceneRecord {
    std::filesystem::path image_path;
    std::filesystem::path annotation_path;
    std::filesystem::path roi_path; // empty = none
    bool has_roi() const { return !roi_path.empty(); }
};

// Plain-text manifest: first line "policy=<name>", then one scene per line,
// tab-separated image / annotation / optional ROI paths (resolved relative
// to the manifest file).
struct DatasetManifest {
    std::string policy_name; // "geometry-adaptive" or "fixed:<sigma>"
    std::vector<SceneRecord> scenes;
};

struct SyntheticSceneSpec {
    int height = 0, width = 0;
    int count_min = 0, count_max = 0;
    double blob_radius_min = 2.0, blob_radius_max = 4.0;
    std::uint64_t seed = 0;
};

// Binary PGM (P5) or PPM (P6), maxval 255 only. P5 loads as 1x1xHxW,
// P6 as 1x3xHxW, values scaled to [0, 1].
Tensor4 load_image(const std::filesystem::path& path);
// As load_image, with a grayscale plane replicated to 3 channels.
Tensor4 load_image_rgb(const std::filesystem::path& path);
// 1-channel tensors write P5, 3-channel write P6.
void save_image(const Tensor4& image, const std::filesystem::path& path);

// Text annotations: header line "x,y", then one "x,y" float pair per line.
HeadAnnotations parse_annotations(const std::filesystem::path& path);
void save_annotations(const HeadAnnotations& points, const std::filesystem::path& path);

// ROI is a P5 image; nonzero bytes mark the inside.
RoiMask parse_roi(const std::filesystem::path& path);

// Little-endian "CSDM" container: magic, u32 version=1, u32 height,
// u32 width, then height*width f32 values row-major.
void save_density_map(const DensityMap& map, const std::filesystem::path& path);
DensityMap load_density_map(const std::filesystem::path& path);

// P5 rendering scaled so the map maximum lands at 255 (zero map stays zero).
void export_visual(const DensityMap& map, const std::filesystem::path& path);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// "geometry-adaptive"/"adaptive" or "fixed:<sigma>" with sigma > 0.
SigmaPolicy parse_policy(const std::string& name);

struct SyntheticScene {
    Tensor4 image; // 1x1xHxW grayscale
    HeadAnnotations points;
};

// Seed-deterministic stand-in scene: Gaussian-intensity blobs on a noisy
// background; annotations are the blob centers.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

SyntheticSceneSpec parse_synthetic_spec_json(const std::filesystem::path& path,
                                             std::string* policy_name = nullptr);

} // namespace csrnet
