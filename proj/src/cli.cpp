#include "csrnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "csrnet/density.hpp"
#include "csrnet/errors.hpp"
#include "csrnet/io.hpp"
#include "csrnet/metrics.hpp"
#include "csrnet/model.hpp"
#include "csrnet/train.hpp"

namespace fs = std::filesystem;

namespace csrnet {

namespace {

struct LoadedScene {
    Tensor4 image;            // 1x3xHxW, ROI-masked
    HeadAnnotations points;   // ROI-filtered
    fs::path image_path;
};

// Image and dot annotations are masked with the ROI before any blurring.
LoadedScene load_scene(const SceneRecord& rec) {
    LoadedScene scene;
    scene.image = load_image_rgb(rec.image_path);
    scene.points = parse_annotations(rec.annotation_path);
    scene.image_path = rec.image_path;
    if (rec.has_roi()) {
        const RoiMask roi = parse_roi(rec.roi_path);
        auto [masked, kept] = apply_roi_mask(scene.image, roi, scene.points);
        scene.image = std::move(masked);
        scene.points = std::move(kept);
    }
    return scene;
}

DensityMap clamped_prediction(const Tensor4& out) {
    DensityMap pred = density_from_tensor(out);
    for (double& v : pred.values) v = std::max(v, 0.0);
    return pred;
}

int run_gtgen(const std::string& manifest_path, const std::string& out_dir,
              const std::string& policy_override) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    const SigmaPolicy policy =
        parse_policy(policy_override.empty() ? manifest.policy_name : policy_override);
    fs::create_directories(out_dir);
    for (const SceneRecord& rec : manifest.scenes) {
        const LoadedScene scene = load_scene(rec);
        const DensityMap map =
            generate_density_map(scene.image.h, scene.image.w, scene.points, policy);
        const fs::path out = fs::path(out_dir) / (rec.image_path.stem().string() + ".csdm");
        save_density_map(map, out);
        std::cout << out.string() << "  points=" << scene.points.size()
                  << "  mass=" << std::fixed << std::setprecision(4) << map.sum() << '\n';
    }
    return 0;
}

int run_train(const std::string& config_name, const std::string& manifest_path,
              int epochs, double lr, std::uint64_t seed, int batch_size,
              int checkpoint_every, const std::string& out_path) {
    const NetworkConfig config = build_config(config_name);
    const DatasetManifest manifest = load_manifest(manifest_path);
    const SigmaPolicy policy = parse_policy(manifest.policy_name);

    TrainConfig tc;
    tc.learning_rate = lr;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.seed = seed;
    tc.checkpoint_every = checkpoint_every;
    fs::path prefix = out_path;
    prefix.replace_extension();
    tc.checkpoint_prefix = prefix.string();

    std::vector<TrainingSample> samples;
    std::uint64_t scene_idx = 0;
    for (const SceneRecord& rec : manifest.scenes) {
        const LoadedScene scene = load_scene(rec);
        const DensityMap full =
            generate_density_map(scene.image.h, scene.image.w, scene.points, policy);
        const auto patches = augment_nine_patches(scene.image, scene.points, seed + scene_idx);
        for (const PatchSample& patch : patches) {
            DensityMap d = crop_density(full, patch.rect.y0, patch.rect.x0, patch.rect.h, patch.rect.w);
            if (patch.mirrored) d = mirror_density_horizontal(d);
            samples.push_back({patch.image, density_target(d, tc.target_downsample)});
        }
        ++scene_idx;
    }
    std::cout << "training on " << samples.size() << " patches from "
              << manifest.scenes.size() << " scenes\n";

    const TrainResult result = train_loop(config, tc, samples);
    save_weights(result.params, out_path);
    if (!result.epoch_loss.empty())
        std::cout << "final epoch loss " << std::scientific << std::setprecision(6)
                  << result.epoch_loss.back() << '\n';
    std::cout << "weights written to " << out_path << '\n';
    return 0;
}

int run_predict(const std::string& weights_path, const std::string& config_name,
                const std::string& image_path, const std::string& out_path,
                const std::string& visual_path, bool upsample8) {
    const NetworkConfig config = build_config(config_name);
    const ParamStore params = load_weights(weights_path, config);
    const Tensor4 image = load_image_rgb(image_path);
    const ForwardResultT<float> fwd = forward(config, params, image, false);
    const DensityMap raw = clamped_prediction(fwd.output);

    DensityMap out = raw;
    if (upsample8) {
        Tensor4d t(1, 1, raw.h, raw.w);
        t.data.assign(raw.values.begin(), raw.values.end());
        t = bilinear_resize(t, image.h, image.w);
        out = DensityMap(image.h, image.w);
        out.values.assign(t.data.begin(), t.data.end());
    }
    save_density_map(out, out_path);
    if (!visual_path.empty()) export_visual(out, visual_path);
    std::cout << "count " << std::fixed << std::setprecision(4) << raw.sum() << '\n';
    return 0;
}

int run_eval(const std::string& weights_path, const std::string& config_name,
             const std::string& manifest_path, int game_level, bool quality) {
    const NetworkConfig config = build_config(config_name);
    const ParamStore params = load_weights(weights_path, config);
    const DatasetManifest manifest = load_manifest(manifest_path);
    const SigmaPolicy policy = parse_policy(manifest.policy_name);

    std::vector<EvalPair> pairs;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::cout << "scene\tgt\tpred\tabs_err\n";
    for (const SceneRecord& rec : manifest.scenes) {
        const LoadedScene scene = load_scene(rec);
        const DensityMap full =
            generate_density_map(scene.image.h, scene.image.w, scene.points, policy);
        const ForwardResultT<float> fwd = forward(config, params, scene.image, false);
        EvalPair pair;
        pair.predicted = clamped_prediction(fwd.output);
        pair.ground_truth = density_target(full, 8);
        if (pair.ground_truth.h != pair.predicted.h || pair.ground_truth.w != pair.predicted.w)
            throw std::invalid_argument("eval: target grid does not match network output");
        pair.ground_truth_count = static_cast<double>(scene.points.size());
        const double pred_count = estimated_count(pair.predicted);
        std::cout << rec.image_path.stem().string() << '\t' << std::fixed
                  << std::setprecision(2) << *pair.ground_truth_count << '\t' << pred_count
                  << '\t' << std::abs(pred_count - *pair.ground_truth_count) << '\n';
        if (quality) {
            auto [p, g] = quality_preprocess(pair.predicted, pair.ground_truth,
                                             scene.image.h, scene.image.w);
            psnr_sum += psnr(p, g);
            ssim_sum += ssim(p, g);
        }
        pairs.push_back(std::move(pair));
    }
    std::cout << std::fixed << std::setprecision(2);
    std::cout << "MAE " << mae(pairs) << '\n';
    std::cout << "MSE " << mse(pairs) << '\n';
    for (int level = 0; level <= game_level; ++level)
        std::cout << "GAME(" << level << ") " << game(std::span<const EvalPair>(pairs), level) << '\n';
    if (quality) {
        const double n = static_cast<double>(pairs.size());
        std::cout << "PSNR " << psnr_sum / n << '\n';
        std::cout << "SSIM " << std::setprecision(4) << ssim_sum / n << '\n';
    }
    return 0;
}

int run_params(const std::string& config_name, bool include_bias) {
    std::cout << param_count(build_config(config_name), include_bias) << '\n';
    return 0;
}

int run_synth(const std::string& spec_path, int n, const std::string& out_dir) {
    if (n < 1)
        throw std::invalid_argument("synth: --n must be >= 1");
    std::string policy_name;
    SyntheticSceneSpec spec = parse_synthetic_spec_json(spec_path, &policy_name);
    parse_policy(policy_name); // validate before writing anything
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.policy_name = policy_name;
    for (int i = 0; i < n; ++i) {
        SyntheticSceneSpec s = spec;
        s.seed = spec.seed + static_cast<std::uint64_t>(i);
        const SyntheticScene scene = generate_synthetic_scene(s);
        std::ostringstream stem;
        stem << "scene" << std::setw(4) << std::setfill('0') << i;
        SceneRecord rec;
        rec.image_path = fs::path(out_dir) / (stem.str() + ".pgm");
        rec.annotation_path = fs::path(out_dir) / (stem.str() + ".csv");
        save_image(scene.image, rec.image_path);
        save_annotations(scene.points, rec.annotation_path);
        manifest.scenes.push_back(std::move(rec));
    }
    const fs::path manifest_path = fs::path(out_dir) / "manifest.txt";
    save_manifest(manifest, manifest_path);
    std::cout << "wrote " << n << " scenes, manifest " << manifest_path.string() << '\n';
    return 0;
}

// Two ways to keep output resolution with a Sobel filter: max-pool +
// convolution + bilinear x2 upsample, versus one dilated convolution.
int run_demo_dilated(const std::string& image_path, const std::string& out_dir) {
    Tensor4 image = load_image(image_path);
    if (image.c == 3) { // collapse to luma
        Tensor4 gray(1, 1, image.h, image.w);
        for (int r = 0; r < image.h; ++r)
            for (int c = 0; c < image.w; ++c)
                gray.at(0, 0, r, c) =
                    (image.at(0, 0, r, c) + image.at(0, 1, r, c) + image.at(0, 2, r, c)) / 3.0f;
        image = std::move(gray);
    }

    ConvWeights sobel;
    sobel.kernel = Tensor4(1, 1, 3, 3);
    const float taps[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    std::copy(taps, taps + 9, sobel.kernel.data.begin());
    sobel.bias = {0.0f};

    ConvSpec plain{1, 1, 3, 1, 1};
    const MaxPoolResultT<float> pooled = maxpool2x2_forward(image);
    const Tensor4 conv_a = conv2d_forward(pooled.output, plain, sobel);
    const Tensor4 path_a = bilinear_resize(conv_a, image.h, image.w);

    ConvSpec dilated{1, 1, 3, 2, 2};
    const Tensor4 path_b = conv2d_forward(image, dilated, sobel);

    fs::create_directories(out_dir);
    const auto write_pair = [&](const Tensor4& t, const std::string& stem) {
        DensityMap m = density_from_tensor(t);
        save_density_map(m, fs::path(out_dir) / (stem + ".csdm"));
        for (double& v : m.values) v = std::abs(v); // edge magnitude for display
        export_visual(m, fs::path(out_dir) / (stem + ".pgm"));
    };
    write_pair(path_a, "pooled_conv_upsampled");
    write_pair(path_b, "dilated_conv");
    std::cout << "input " << image.h << "x" << image.w
              << "  pooled_conv_upsampled " << path_a.h << "x" << path_a.w
              << "  dilated_conv " << path_b.h << "x" << path_b.w << '\n';
    return 0;
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Dilated-convolution crowd density estimation toolkit"};
    app.require_subcommand(1);

    auto* cmd_gtgen = app.add_subcommand("gtgen", "Generate ground-truth density maps for a manifest");
    std::string gt_manifest, gt_out, gt_policy;
    cmd_gtgen->add_option("--manifest", gt_manifest, "dataset manifest")->required();
    cmd_gtgen->add_option("--out", gt_out, "output directory")->required();
    cmd_gtgen->add_option("--policy", gt_policy, "override manifest sigma policy (adaptive | fixed:SIGMA)");

    auto* cmd_train = app.add_subcommand("train", "Train a configuration on a manifest");
    std::string tr_config, tr_manifest, tr_out;
    int tr_epochs = 0, tr_batch = 1, tr_ckpt = 0;
    double tr_lr = 1e-6;
    std::uint64_t tr_seed = 0;
    cmd_train->add_option("--config", tr_config, "A | B | C | D | table1")->required();
    cmd_train->add_option("--manifest", tr_manifest, "dataset manifest")->required();
    cmd_train->add_option("--epochs", tr_epochs, "epoch count")->required();
    cmd_train->add_option("--lr", tr_lr, "learning rate (default 1e-6)");
    cmd_train->add_option("--seed", tr_seed, "RNG seed");
    cmd_train->add_option("--batch-size", tr_batch, "samples per SGD step (default 1)");
    cmd_train->add_option("--checkpoint-every", tr_ckpt, "checkpoint period in epochs (0 = off)");
    cmd_train->add_option("--out", tr_out, "output weight file (.csrw)")->required();

    auto* cmd_predict = app.add_subcommand("predict", "Predict a density map for one image");
    std::string pr_weights, pr_config, pr_image, pr_out, pr_visual;
    bool pr_upsample = false;
    cmd_predict->add_option("--weights", pr_weights, "weight file")->required();
    cmd_predict->add_option("--config", pr_config, "A | B | C | D | table1")->required();
    cmd_predict->add_option("--image", pr_image, "input image (PGM/PPM)")->required();
    cmd_predict->add_option("--out", pr_out, "output density map (.csdm)")->required();
    cmd_predict->add_option("--visual", pr_visual, "also write a P5 rendering");
    cmd_predict->add_flag("--upsample8", pr_upsample, "bilinear-upsample to the input resolution");

    auto* cmd_eval = app.add_subcommand("eval", "Evaluate weights against a manifest");
    std::string ev_weights, ev_config, ev_manifest;
    int ev_game = -1;
    bool ev_quality = false;
    cmd_eval->add_option("--weights", ev_weights, "weight file")->required();
    cmd_eval->add_option("--config", ev_config, "A | B | C | D | table1")->required();
    cmd_eval->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    cmd_eval->add_option("--game", ev_game, "also report GAME(0..L)");
    cmd_eval->add_flag("--quality", ev_quality, "also report PSNR/SSIM");

    auto* cmd_params = app.add_subcommand("params", "Print the parameter count of a configuration");
    std::string pa_config;
    bool pa_bias = false;
    cmd_params->add_option("--config", pa_config, "A | B | C | D | table1")->required();
    cmd_params->add_flag("--include-bias", pa_bias, "count biases too");

    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic dataset with a manifest");
    std::string sy_spec, sy_out;
    int sy_n = 0;
    cmd_synth->add_option("--spec-json", sy_spec, "scene spec JSON")->required();
    cmd_synth->add_option("--n", sy_n, "number of scenes")->required();
    cmd_synth->add_option("--out", sy_out, "output directory")->required();

    auto* cmd_demo = app.add_subcommand("demo-dilated",
                                        "Compare pool+conv+upsample against one dilated conv");
    std::string de_image, de_out;
    cmd_demo->add_option("--image", de_image, "input image (PGM/PPM)")->required();
    cmd_demo->add_option("--out-dir", de_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    if (cmd_gtgen->parsed()) return run_gtgen(gt_manifest, gt_out, gt_policy);
    if (cmd_train->parsed())
        return run_train(tr_config, tr_manifest, tr_epochs, tr_lr, tr_seed, tr_batch, tr_ckpt, tr_out);
    if (cmd_predict->parsed())
        return run_predict(pr_weights, pr_config, pr_image, pr_out, pr_visual, pr_upsample);
    if (cmd_eval->parsed()) return run_eval(ev_weights, ev_config, ev_manifest, ev_game, ev_quality);
    if (cmd_params->parsed()) return run_params(pa_config, pa_bias);
    if (cmd_synth->parsed()) return run_synth(sy_spec, sy_n, sy_out);
    if (cmd_demo->parsed()) return run_demo_dilated(de_image, de_out);
    return 2;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        return dispatch(argc, argv);
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 3;
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 4;
    } catch (const divergence_error& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("csrnet");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

} // namespace csrnet
