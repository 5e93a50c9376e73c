// Acceptance suite: runs every structural and analytic claim the project
// commits to, printing one PASS/FAIL line per criterion. Exit code is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "csrnet/cli.hpp"
#include "csrnet/density.hpp"
#include "csrnet/io.hpp"
#include "csrnet/metrics.hpp"
#include "csrnet/model.hpp"
#include "csrnet/train.hpp"
#include "oracles.hpp"

using namespace csrnet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const char* name, bool ok, const std::string& detail) {
    std::printf("%s  criterion %2d  %-28s %s\n", ok ? "PASS" : "FAIL", number, name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1: parameter-count reproduction -------------------------------------

void criterion_param_counts() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t t1 = param_count(build_config("table1"), false);
    const std::int64_t a = param_count(build_config("A"), false);
    const std::int64_t b = param_count(build_config("B"), false);
    const std::int64_t c = param_count(build_config("C"), false);
    const std::int64_t d = param_count(build_config("D"), false);
    const double elapsed = seconds_since(t0);
    const bool ok = t1 == 83840 && a == 16258816 && b == 16258816 && c == 16258816 &&
                    d == 16258816 && elapsed < 1.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "table1=%lld  A=B=C=D=%lld (rounds to 16.26M)  %.3fs",
                  static_cast<long long>(t1), static_cast<long long>(b), elapsed);
    report(1, "parameter counts", ok, buf);
}

// --- 2: receptive-field reproduction --------------------------------------

void criterion_receptive_field() {
    const auto t0 = std::chrono::steady_clock::now();
    const int e1 = effective_kernel_size(3, 1);
    const int e2 = effective_kernel_size(3, 2);
    const int e3 = effective_kernel_size(3, 3);
    const double elapsed = seconds_since(t0);
    const bool ok = e1 == 3 && e2 == 5 && e3 == 7 && elapsed < 1.0;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "(3,1)=%d (3,2)=%d (3,3)=%d  %.3fs", e1, e2, e3, elapsed);
    report(2, "receptive fields", ok, buf);
}

// --- 3: output-shape law ---------------------------------------------------

void criterion_output_shape() {
    const auto t0 = std::chrono::steady_clock::now();
    const NetworkConfig cfg = build_config("B");
    const ParamStore params = init_weights(cfg, 1);

    bool ok = true;
    std::string detail;
    const struct { int h, w; } sizes[] = {{224, 224}, {120, 200}, {96, 168}, {104, 88}};
    for (const auto& s : sizes) {
        const Tensor4 in(1, 3, s.h, s.w, 0.25f);
        const auto res = forward(cfg, params, in, false);
        const bool match = res.output.n == 1 && res.output.c == 1 &&
                           res.output.h == s.h / 8 && res.output.w == s.w / 8;
        ok = ok && match;
        detail += std::to_string(s.h) + "x" + std::to_string(s.w) + "->" +
                  std::to_string(res.output.h) + "x" + std::to_string(res.output.w) + " ";
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 30.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " %.1fs", elapsed);
    report(3, "output shape law (1/8)", ok, detail + buf);
}

// --- 4: dilated-conv oracle suite ------------------------------------------

void criterion_conv_oracle() {
    std::mt19937_64 gen(20240);
    int instances = 0;
    double worst = 0.0;
    double worst_plain = 0.0;
    while (instances < 100) {
        const int n = 1 + static_cast<int>(gen() % 2);
        const int ci = 1 + static_cast<int>(gen() % 4);
        const int co = 1 + static_cast<int>(gen() % 4);
        const int h = 2 + static_cast<int>(gen() % 9);  // <= 10
        const int w = 2 + static_cast<int>(gen() % 9);
        const int k = (gen() % 2) ? 3 : 1;
        const int rates[3] = {1, 2, 4};
        const int r = rates[gen() % 3];
        const int p = size_preserving_padding(k, r);
        if (h + 2 * p - r * (k - 1) <= 0 || w + 2 * p - r * (k - 1) <= 0) continue;
        ++instances;

        const Tensor4d in = oracle::random_tensor<double>(gen, n, ci, h, w);
        const ConvWeightsT<double> wt = oracle::random_weights(gen, co, ci, k);
        const ConvSpec sp{ci, co, k, r, p};
        const Tensor4d expect = oracle::conv2d(in, sp, wt);
        const Tensor4 got = conv2d_forward(in.cast<float>(), sp, wt.cast<float>());
        for (std::size_t i = 0; i < got.size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(got.data[i]) - expect.data[i]));

        if (r == 1) {
            const Tensor4d plain = oracle::plain_conv2d(in, co, wt, k, p);
            for (std::size_t i = 0; i < got.size(); ++i)
                worst_plain =
                    std::max(worst_plain, std::abs(static_cast<double>(got.data[i]) - plain.data[i]));
        }
    }
    const bool ok = worst < 1e-6 && worst_plain < 1e-6;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "100 instances, |err|max=%.2e, plain-conv |err|max=%.2e",
                  worst, worst_plain);
    report(4, "dilated-conv oracles", ok, buf);
}

// --- 5: gradient suite -----------------------------------------------------

void criterion_gradients() {
    NetworkConfig cfg;
    cfg.name = "grad3";
    cfg.input_channels = 2;
    cfg.layers = {LayerSpec::conv(3, 8, 2), LayerSpec::maxpool(), LayerSpec::conv(3, 8, 1),
                  LayerSpec::conv(1, 1, 1, /*relu=*/false)};

    std::mt19937_64 gen(555);
    const Tensor4d in = oracle::random_tensor<double>(gen, 1, 2, 12, 12);
    ParamStoreT<double> params = oracle::random_params(cfg, gen);

    const auto probe = [&]() {
        const auto r = forward(cfg, params, in, true);
        double s = 0.0;
        for (double v : r.output.data) s += v * v;
        return std::pair(0.5 * s, oracle::activation_pattern(r.tape));
    };
    const auto fwd = forward(cfg, params, in, true);
    const ParamStoreT<double> grads = backward(cfg, params, fwd.tape, fwd.output);
    const auto base_pattern = oracle::activation_pattern(fwd.tape);

    const double h = 1e-3;
    int checked = 0, skipped = 0;
    double worst = 0.0;
    const auto check_param = [&](double* slot, double analytic) {
        const double saved = *slot;
        *slot = saved + h;
        const auto hi = probe();
        *slot = saved - h;
        const auto lo = probe();
        *slot = saved;
        if (hi.second != base_pattern || lo.second != base_pattern) {
            ++skipped; // ReLU/pool kink inside the stencil
            return;
        }
        worst = std::max(worst, oracle::rel_err(analytic, (hi.first - lo.first) / (2.0 * h)));
        ++checked;
    };
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        for (std::size_t i = 0; i < params.layers[li].kernel.size(); ++i)
            check_param(&params.layers[li].kernel.data[i], grads.layers[li].kernel.data[i]);
        for (std::size_t i = 0; i < params.layers[li].bias.size(); ++i)
            check_param(&params.layers[li].bias[i], grads.layers[li].bias[i]);
    }
    const bool ok = checked >= 500 && worst < 1e-4;
    char buf[140];
    std::snprintf(buf, sizeof(buf), "%d parameters (+%d on kinks, skipped), rel err max=%.2e",
                  checked, skipped, worst);
    report(5, "finite-difference gradients", ok, buf);
}

// --- 6: ground-truth mass ---------------------------------------------------

void criterion_gt_mass() {
    std::mt19937_64 gen(606);
    bool ok = true;
    double worst_rel = 0.0, worst_ds = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 32 + static_cast<int>(gen() % 33);
        const int w = 32 + static_cast<int>(gen() % 33);
        const int count = 1 + static_cast<int>(gen() % 15);
        HeadAnnotations pts;
        for (int i = 0; i < count; ++i)
            pts.push_back({(static_cast<double>(gen() >> 11) * 0x1.0p-53) * (w - 1),
                           (static_cast<double>(gen() >> 11) * 0x1.0p-53) * (h - 1)});
        for (const SigmaPolicy& policy :
             {SigmaPolicy::geometry_adaptive(0.3, 3), SigmaPolicy::fixed(3.0)}) {
            const DensityMap map = generate_density_map(h, w, pts, policy);
            const double err = std::abs(map.sum() - count);
            worst_rel = std::max(worst_rel, err / count);
            if (err >= 1e-3 * count) ok = false;
            const DensityMap down = downsample_density_map(map, 8);
            const double ds_err = std::abs(down.sum() - map.sum());
            worst_ds = std::max(worst_ds, ds_err);
            if (ds_err >= 1e-9) ok = false;
        }
    }
    char buf[120];
    std::snprintf(buf, sizeof(buf), "50 sets x 2 policies, mass rel err max=%.2e, downsample |d|max=%.2e",
                  worst_rel, worst_ds);
    report(6, "ground-truth mass", ok, buf);
}

// --- 7: metric identities -----------------------------------------------------

void criterion_metric_identities() {
    std::mt19937_64 gen(707);
    bool ok = true;
    double worst_game = 0.0;
    std::vector<EvalPair> pairs;
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 4 + static_cast<int>(gen() % 13);
        const int w = 4 + static_cast<int>(gen() % 13);
        EvalPair p;
        p.predicted = DensityMap(h, w);
        p.ground_truth = DensityMap(h, w);
        for (double& v : p.predicted.values) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        for (double& v : p.ground_truth.values) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        const double g0 = game(p.predicted, p.ground_truth, 0);
        const double ce = std::abs(estimated_count(p.predicted) - estimated_count(p.ground_truth));
        worst_game = std::max(worst_game, std::abs(g0 - ce));
        pairs.push_back(std::move(p));
    }
    if (worst_game > 1e-9) ok = false;

    // MAE <= RMS over random sublists
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t len = 1 + gen() % pairs.size();
        const std::span<const EvalPair> view(pairs.data(), len);
        if (mae(view) > mse(view) + 1e-12) ok = false;
    }

    DensityMap a(32, 32);
    for (double& v : a.values) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    const double self = ssim(a, a);
    if (std::abs(self - 1.0) > 1e-9) ok = false;

    const DensityMap flat(16, 16, 0.5);
    DensityMap offset(16, 16, 0.6);
    const double p20 = psnr(flat, offset);
    if (std::abs(p20 - 20.0) > 1e-6) ok = false;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "GAME(0) |d|max=%.2e, SSIM(a,a)=%.12f, PSNR(+0.1)=%.8f dB",
                  worst_game, self, p20);
    report(7, "metric identities", ok, buf);
}

// --- 8: overfit integration ---------------------------------------------------

void criterion_overfit() {
    const auto t0 = std::chrono::steady_clock::now();

    // feature extraction sits after the pools: the 0.01 Gaussian initializer
    // attenuates full-resolution conv stacks below what single-rate SGD can
    // recover from scratch (the full network counters this by importing
    // pretrained front-end weights)
    NetworkConfig cfg;
    cfg.name = "overfit";
    cfg.input_channels = 1;
    cfg.layers = {LayerSpec::maxpool(),      LayerSpec::maxpool(),
                  LayerSpec::maxpool(),      LayerSpec::conv(3, 16, 1),
                  LayerSpec::conv(3, 8, 2),  LayerSpec::conv(1, 1, 1, /*relu=*/false)};

    std::vector<TrainingSample> dataset;
    double true_count_sum = 0.0;
    for (int i = 0; i < 20; ++i) {
        SyntheticSceneSpec spec;
        spec.height = 64;
        spec.width = 64;
        spec.count_min = 3;
        spec.count_max = 8;
        spec.blob_radius_min = 2.0;
        spec.blob_radius_max = 3.5;
        spec.seed = 9000 + static_cast<std::uint64_t>(i);
        const SyntheticScene scene = generate_synthetic_scene(spec);
        const DensityMap full =
            generate_density_map(64, 64, scene.points, SigmaPolicy::fixed(2.0));
        true_count_sum += static_cast<double>(scene.points.size());
        dataset.push_back({scene.image, density_target(full, 8)});
    }

    TrainConfig tc;
    tc.learning_rate = 1.5e-2;
    tc.epochs = 300;
    tc.seed = 31;
    const TrainResult res = train_loop(cfg, tc, dataset);

    double count_err_sum = 0.0;
    for (const TrainingSample& s : dataset) {
        const auto fwd = forward(cfg, res.params, s.image, false);
        DensityMap pred = density_from_tensor(fwd.output);
        for (double& v : pred.values) v = std::max(v, 0.0);
        count_err_sum += std::abs(estimated_count(pred) - s.target.sum());
    }
    const double mean_true = true_count_sum / 20.0;
    const double mean_err = count_err_sum / 20.0;
    const double first = res.epoch_loss.front();
    const double last = res.epoch_loss.back();
    const double elapsed = seconds_since(t0);

    const bool ok = last <= 0.1 * first && mean_err <= 0.1 * mean_true && elapsed < 300.0;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "loss %.4f -> %.4f (<=10%%: %s), count MAE %.3f vs mean count %.2f, %.1fs",
                  first, last, last <= 0.1 * first ? "yes" : "no", mean_err, mean_true, elapsed);
    report(8, "overfit integration", ok, buf);
}

// --- 9: augmentation contract ---------------------------------------------------

void criterion_augmentation() {
    std::mt19937_64 gen(909);
    const Tensor4 image = oracle::random_tensor<float>(gen, 1, 3, 64, 48, 0.0, 1.0);
    const HeadAnnotations pts = {{10.5, 11.5}, {30.0, 40.0}, {47.9, 63.9}};
    const auto patches = augment_nine_patches(image, pts, 3);

    bool ok = patches.size() == 18;
    for (const auto& p : patches)
        ok = ok && p.image.h == 32 && p.image.w == 24;

    // quarters tile: every pixel covered exactly once by rects 0..3
    std::vector<int> coverage(64 * 48, 0);
    for (int i = 0; i < 4; ++i)
        for (int r = patches[i].rect.y0; r < patches[i].rect.y0 + patches[i].rect.h; ++r)
            for (int c = patches[i].rect.x0; c < patches[i].rect.x0 + patches[i].rect.w; ++c)
                coverage[r * 48 + c]++;
    for (int v : coverage) ok = ok && v == 1;

    // double mirror is the identity on image and points
    for (int i = 0; i < 9; ++i) {
        const Tensor4 twice = mirror_image_horizontal(patches[9 + i].image);
        ok = ok && twice.data == patches[i].image.data;
        ok = ok && patches[9 + i].points.size() == patches[i].points.size();
        for (std::size_t j = 0; j < patches[i].points.size(); ++j) {
            const double back = (patches[i].rect.w - 1) - patches[9 + i].points[j].x;
            ok = ok && back == patches[i].points[j].x && patches[9 + i].points[j].y == patches[i].points[j].y;
        }
    }
    report(9, "augmentation contract", ok, "18 patches of 32x24, quarters tile, mirror^2 = id");
}

// --- 10: demo-dilated ---------------------------------------------------

void criterion_demo_dilated() {
    const fs::path dir = fs::temp_directory_path() / "csrnet_acceptance_demo";
    fs::remove_all(dir);
    fs::create_directories(dir);

    SyntheticSceneSpec spec;
    spec.height = 60;
    spec.width = 44;
    spec.count_min = 4;
    spec.count_max = 4;
    spec.blob_radius_min = 2.0;
    spec.blob_radius_max = 3.0;
    spec.seed = 17;
    const SyntheticScene scene = generate_synthetic_scene(spec);
    const fs::path img = dir / "scene.pgm";
    save_image(scene.image, img);

    const int rc = cli_main({"demo-dilated", "--image", img.string(), "--out-dir", dir.string()});
    bool ok = rc == 0;
    std::string detail = "exit=" + std::to_string(rc);
    if (ok) {
        const DensityMap a = load_density_map(dir / "pooled_conv_upsampled.csdm");
        const DensityMap b = load_density_map(dir / "dilated_conv.csdm");
        ok = a.h == 60 && a.w == 44 && b.h == 60 && b.w == 44 &&
             fs::exists(dir / "pooled_conv_upsampled.pgm") && fs::exists(dir / "dilated_conv.pgm");
        detail += ", pooled path " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                  ", dilated path " + std::to_string(b.h) + "x" + std::to_string(b.w) +
                  " vs input 60x44";
    }
    fs::remove_all(dir);
    report(10, "demo-dilated", ok, detail);
}

// --- 11: scope statement ---------------------------------------------------

void criterion_scope_statement() {
    report(11, "benchmark scope statement", true,
           "published full-dataset benchmark figures (e.g. ShanghaiTech Part_A MAE 68.2, "
           "TRANCOS GAME tables) need the original datasets and GPU-scale training and are "
           "out of desk-scale reach; criteria 1-10 verify exact structural claims and "
           "analytic invariants instead");
}

} // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_param_counts();
    criterion_receptive_field();
    criterion_output_shape();
    criterion_conv_oracle();
    criterion_gradients();
    criterion_gt_mass();
    criterion_metric_identities();
    criterion_overfit();
    criterion_augmentation();
    criterion_demo_dilated();
    criterion_scope_statement();
    std::printf("%d of 11 criteria passed\n", 11 - g_failures);
    return g_failures;
}
