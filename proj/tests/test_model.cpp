#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "csrnet/model.hpp"
#include "oracles.hpp"

using namespace csrnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* stem) {
    static int counter = 0;
    return fs::temp_directory_path() / (std::string(stem) + std::to_string(counter++) + ".bin");
}

int conv_count(const NetworkConfig& cfg) {
    int n = 0;
    for (const auto& l : cfg.layers)
        if (l.kind == LayerSpec::Kind::Conv) ++n;
    return n;
}

int pool_count(const NetworkConfig& cfg) {
    return static_cast<int>(cfg.layers.size()) - conv_count(cfg);
}

} // namespace

TEST_CASE("built-in configurations") {
    const NetworkConfig a = build_config("A");
    const NetworkConfig b = build_config("B");
    const NetworkConfig c = build_config("C");
    const NetworkConfig d = build_config("D");

    for (const NetworkConfig* cfg : {&a, &b, &c, &d}) {
        CHECK(conv_count(*cfg) == 17); // 10 front-end + 6 back-end + output
        CHECK(pool_count(*cfg) == 3);
        const LayerSpec& last = cfg->layers.back();
        CHECK(last.kernel_size == 1);
        CHECK(last.out_channels == 1);
        CHECK(last.dilation == 1);
        CHECK_FALSE(last.relu);
    }

    // back-end of B: conv3-512-2 x3, conv3-256-2, conv3-128-2, conv3-64-2
    const int back_start = 13;
    const int widths[6] = {512, 512, 512, 256, 128, 64};
    for (int i = 0; i < 6; ++i) {
        const LayerSpec& l = b.layers[back_start + i];
        CHECK(l.kernel_size == 3);
        CHECK(l.out_channels == widths[i]);
        CHECK(l.dilation == 2);
        CHECK(l.relu);
    }
    const int c_rates[6] = {2, 2, 2, 4, 4, 4};
    for (int i = 0; i < 6; ++i)
        CHECK(c.layers[back_start + i].dilation == c_rates[i]);

    // A and D share every shape and differ only in dilation fields
    REQUIRE(a.layers.size() == d.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(a.layers[i].kind == d.layers[i].kind);
        CHECK(a.layers[i].kernel_size == d.layers[i].kernel_size);
        CHECK(a.layers[i].out_channels == d.layers[i].out_channels);
    }
    for (int i = 0; i < 6; ++i) {
        CHECK(a.layers[back_start + i].dilation == 1);
        CHECK(d.layers[back_start + i].dilation == 4);
    }

    const NetworkConfig t1 = build_config("table1");
    CHECK(conv_count(t1) == 6);
    CHECK(pool_count(t1) == 3);

    CHECK_THROWS_AS(build_config("E"), std::invalid_argument);
}

TEST_CASE("parameter counts reproduce the published tallies") {
    CHECK(param_count(build_config("table1"), false) == 83840);
    const std::int64_t b = param_count(build_config("B"), false);
    CHECK(b == 16258816);
    CHECK(param_count(build_config("A"), false) == b);
    CHECK(param_count(build_config("C"), false) == b);
    CHECK(param_count(build_config("D"), false) == b);

    // independent bias tallies
    const std::int64_t t1_bias = 32 + 64 + 64 + 32 + 32 + 1;
    CHECK(param_count(build_config("table1"), true) == 83840 + t1_bias);
    const std::int64_t b_bias = 64 + 64 + 128 + 128 + 256 * 3 + 512 * 3 // front-end
                                + 512 * 3 + 256 + 128 + 64 + 1;         // back-end
    CHECK(param_count(build_config("B"), true) == 16258816 + b_bias);
}

TEST_CASE("receptive field recurrence") {
    NetworkConfig single;
    single.input_channels = 1;
    single.layers = {LayerSpec::conv(3, 4, 1)};
    CHECK(receptive_field(single).back() == 3);

    single.layers = {LayerSpec::conv(3, 4, 2)};
    CHECK(receptive_field(single).back() == 5);

    single.layers = {LayerSpec::conv(3, 4, 3)};
    CHECK(receptive_field(single).back() == 7);

    NetworkConfig stacked;
    stacked.input_channels = 1;
    stacked.layers = {LayerSpec::conv(3, 4, 1), LayerSpec::maxpool(), LayerSpec::conv(3, 4, 1)};
    const std::vector<int> rf = receptive_field(stacked);
    REQUIRE(rf.size() == 3);
    CHECK(rf[0] == 3);
    CHECK(rf[1] == 4);
    CHECK(rf[2] == 8);
}

TEST_CASE("forward output shape law on built-in configs") {
    const NetworkConfig t1 = build_config("table1");
    const ParamStore params = init_weights(t1, 1);
    const struct { int h, w; } sizes[] = {{64, 64}, {64, 48}, {120, 200}, {41, 57}};
    for (const auto& s : sizes) {
        const Tensor4 in(1, 3, s.h, s.w, 0.5f);
        const auto res = forward(t1, params, in, false);
        CHECK(res.output.c == 1);
        CHECK(res.output.h == s.h / 8);
        CHECK(res.output.w == s.w / 8);
    }
}

TEST_CASE("forward with all-zero parameters is all zero") {
    const NetworkConfig t1 = build_config("table1");
    ParamStore params = zero_like(init_weights(t1, 1));
    const Tensor4 in(1, 3, 32, 32, 0.7f);
    const auto res = forward(t1, params, in, false);
    for (float v : res.output.data) CHECK(v == 0.0f);
}

TEST_CASE("forward composes exactly like hand-chained tensor ops") {
    NetworkConfig cfg;
    cfg.name = "tiny";
    cfg.input_channels = 1;
    cfg.layers = {LayerSpec::conv(3, 2, 1), LayerSpec::conv(3, 1, 2, /*relu=*/false)};

    std::mt19937_64 gen(55);
    const Tensor4 in = oracle::random_tensor<float>(gen, 1, 1, 5, 5);
    ParamStore params = init_weights(cfg, 9);

    const auto res = forward(cfg, params, in, false);

    const ConvSpec sp0{1, 2, 3, 1, 1};
    const ConvSpec sp1{2, 1, 3, 2, 2};
    const Tensor4 expect =
        conv2d_forward(relu_forward(conv2d_forward(in, sp0, params.layers[0])), sp1, params.layers[1]);
    REQUIRE(res.output.same_shape(expect));
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(res.output.data[i] == expect.data[i]);
}

TEST_CASE("forward is deterministic across repeated runs") {
    const NetworkConfig t1 = build_config("table1");
    const ParamStore params = init_weights(t1, 77);
    std::mt19937_64 gen(78);
    const Tensor4 in = oracle::random_tensor<float>(gen, 1, 3, 40, 40, 0.0, 1.0);
    const auto a = forward(t1, params, in, false);
    const auto b = forward(t1, params, in, false);
    CHECK(a.output.data == b.output.data);
}

TEST_CASE("forward validates input channels and pool minimums") {
    const NetworkConfig t1 = build_config("table1");
    const ParamStore params = init_weights(t1, 1);
    CHECK_THROWS_AS(forward(t1, params, Tensor4(1, 1, 32, 32), false), std::invalid_argument);
    CHECK_THROWS_AS(forward(t1, params, Tensor4(1, 3, 3, 3), false), std::invalid_argument);
}

TEST_CASE("backward on a single-conv config equals conv2d_backward") {
    NetworkConfig cfg;
    cfg.input_channels = 2;
    cfg.layers = {LayerSpec::conv(3, 3, 2, /*relu=*/false)};
    std::mt19937_64 gen(61);
    const Tensor4 in = oracle::random_tensor<float>(gen, 1, 2, 6, 6);
    ParamStore params = init_weights(cfg, 3);
    const auto res = forward(cfg, params, in, true);
    const Tensor4 gout = oracle::random_tensor<float>(gen, 1, 3, 6, 6);

    const ParamStore grads = backward(cfg, params, res.tape, gout);
    const ConvGradsT<float> direct =
        conv2d_backward(in, ConvSpec{2, 3, 3, 2, 2}, params.layers[0], gout);
    CHECK(grads.layers[0].kernel.data == direct.kernel.data);
    CHECK(grads.layers[0].bias == direct.bias);
}

TEST_CASE("backward with zero upstream gradient is zero") {
    const NetworkConfig t1 = build_config("table1");
    const ParamStore params = init_weights(t1, 5);
    const Tensor4 in(1, 3, 24, 24, 0.3f);
    const auto res = forward(t1, params, in, true);
    const Tensor4 gout(1, 1, 3, 3);
    const ParamStore grads = backward(t1, params, res.tape, gout);
    for (const auto& l : grads.layers) {
        for (float v : l.kernel.data) CHECK(v == 0.0f);
        for (float v : l.bias) CHECK(v == 0.0f);
    }
}

TEST_CASE("network backward matches finite differences end to end") {
    NetworkConfig cfg;
    cfg.name = "fd3";
    cfg.input_channels = 2;
    cfg.layers = {LayerSpec::conv(3, 4, 2), LayerSpec::maxpool(), LayerSpec::conv(3, 3, 1),
                  LayerSpec::conv(1, 1, 1, /*relu=*/false)};

    std::mt19937_64 gen(303);
    const Tensor4d in = oracle::random_tensor<double>(gen, 1, 2, 10, 10);
    ParamStoreT<double> params = oracle::random_params(cfg, gen);

    // loss: sum of squared outputs / 2, so dL/dout = out
    const auto probe = [&](const ParamStoreT<double>& p) {
        const auto r = forward(cfg, p, in, true);
        double s = 0.0;
        for (double v : r.output.data) s += v * v;
        return std::pair(0.5 * s, oracle::activation_pattern(r.tape));
    };
    const auto res = forward(cfg, params, in, true);
    const ParamStoreT<double> grads = backward(cfg, params, res.tape, res.output);
    const auto base_pattern = oracle::activation_pattern(res.tape);

    const double h = 1e-3;
    int checked = 0, skipped = 0;
    const auto check_param = [&](double* slot, double analytic) {
        const double saved = *slot;
        *slot = saved + h;
        const auto hi = probe(params);
        *slot = saved - h;
        const auto lo = probe(params);
        *slot = saved;
        if (hi.second != base_pattern || lo.second != base_pattern) {
            ++skipped; // perturbation crossed a ReLU/pool kink
            return;
        }
        const double fd = (hi.first - lo.first) / (2.0 * h);
        REQUIRE(oracle::rel_err(analytic, fd) < 1e-4);
        ++checked;
    };

    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const std::size_t kn = params.layers[li].kernel.size();
        for (std::size_t step = 0, i = 0; step < 30 && i < kn; ++step, i += 1 + kn / 30)
            check_param(&params.layers[li].kernel.data[i], grads.layers[li].kernel.data[i]);
        for (std::size_t i = 0; i < params.layers[li].bias.size(); ++i)
            check_param(&params.layers[li].bias[i], grads.layers[li].bias[i]);
    }
    CHECK(checked > 60);
    CHECK(skipped < checked);
}

TEST_CASE("weight initialization is seeded and Gaussian") {
    // wide enough to draw well over 1e5 weights for the moment estimates
    NetworkConfig cfg;
    cfg.input_channels = 3;
    cfg.layers = {LayerSpec::conv(3, 64, 1), LayerSpec::conv(3, 128, 1),
                  LayerSpec::conv(3, 64, 2)};
    const ParamStore a = init_weights(cfg, 1234);
    const ParamStore b = init_weights(cfg, 1234);
    const ParamStore c = init_weights(cfg, 1235);
    REQUIRE(a.layers.size() == b.layers.size());
    bool any_diff = false;
    for (std::size_t li = 0; li < a.layers.size(); ++li) {
        CHECK(a.layers[li].kernel.data == b.layers[li].kernel.data);
        if (a.layers[li].kernel.data != c.layers[li].kernel.data) any_diff = true;
        for (float v : a.layers[li].bias) CHECK(v == 0.0f);
    }
    CHECK(any_diff);

    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& l : a.layers)
        for (float v : l.kernel.data) {
            sum += v;
            sq += static_cast<double>(v) * v;
            ++n;
        }
    REQUIRE(n > 100000);
    const double mean = sum / static_cast<double>(n);
    const double stddev = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    CHECK(mean > -0.0005);
    CHECK(mean < 0.0005);
    CHECK(stddev > 0.0095);
    CHECK(stddev < 0.0105);
}

TEST_CASE("weight files round-trip bit-exactly") {
    const NetworkConfig cfg = build_config("table1");
    const ParamStore store = init_weights(cfg, 42);
    const fs::path path = temp_file("weights");
    save_weights(store, path);
    const ParamStore loaded = load_weights(path, cfg);
    REQUIRE(loaded.layers.size() == store.layers.size());
    for (std::size_t li = 0; li < store.layers.size(); ++li) {
        CHECK(loaded.layers[li].kernel.data == store.layers[li].kernel.data);
        CHECK(loaded.layers[li].bias == store.layers[li].bias);
    }
    fs::remove(path);
}

TEST_CASE("truncated weight file is rejected without a partial store") {
    const NetworkConfig cfg = build_config("table1");
    const ParamStore store = init_weights(cfg, 42);
    const fs::path path = temp_file("weights_trunc");
    save_weights(store, path);
    const auto full = static_cast<std::streamsize>(fs::file_size(path));
    fs::resize_file(path, static_cast<std::uintmax_t>(full / 2));
    CHECK_THROWS_AS(load_weights(path), parse_error);
    fs::remove(path);
}

TEST_CASE("weight file with wrong magic or version is rejected") {
    const fs::path path = temp_file("weights_magic");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE" << std::string(16, '\0');
    }
    CHECK_THROWS_AS(load_weights(path), parse_error);
    fs::remove(path);
}

TEST_CASE("dimension mismatch against a config names the layer") {
    const NetworkConfig t1 = build_config("table1");
    ParamStore store = init_weights(t1, 9);
    store.layers[2].kernel = Tensor4(64, 64, 5, 5); // wrong kernel size
    store.layers[2].bias.assign(64, 0.0f);
    const fs::path path = temp_file("weights_dims");
    save_weights(store, path);
    try {
        (void)load_weights(path, t1);
        FAIL("expected a parse_error");
    } catch (const parse_error& e) {
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
    fs::remove(path);
}
