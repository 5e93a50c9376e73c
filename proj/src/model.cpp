#include "csrnet/model.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "csrnet/errors.hpp"

namespace csrnet {

namespace {

void push_vgg_front_end(std::vector<LayerSpec>& layers) {
    layers.push_back(LayerSpec::conv(3, 64, 1));
    layers.push_back(LayerSpec::conv(3, 64, 1));
    layers.push_back(LayerSpec::maxpool());
    layers.push_back(LayerSpec::conv(3, 128, 1));
    layers.push_back(LayerSpec::conv(3, 128, 1));
    layers.push_back(LayerSpec::maxpool());
    layers.push_back(LayerSpec::conv(3, 256, 1));
    layers.push_back(LayerSpec::conv(3, 256, 1));
    layers.push_back(LayerSpec::conv(3, 256, 1));
    layers.push_back(LayerSpec::maxpool());
    layers.push_back(LayerSpec::conv(3, 512, 1));
    layers.push_back(LayerSpec::conv(3, 512, 1));
    layers.push_back(LayerSpec::conv(3, 512, 1));
}

void push_back_end(std::vector<LayerSpec>& layers, const int rates[6]) {
    const int widths[6] = {512, 512, 512, 256, 128, 64};
    for (int i = 0; i < 6; ++i)
        layers.push_back(LayerSpec::conv(3, widths[i], rates[i]));
    layers.push_back(LayerSpec::conv(1, 1, 1, /*relu=*/false)); // density output
}

} // namespace

NetworkConfig build_config(std::string_view name) {
    NetworkConfig cfg;
    cfg.input_channels = 3;
    if (name == "A" || name == "B" || name == "C" || name == "D") {
        cfg.name = std::string(name);
        push_vgg_front_end(cfg.layers);
        if (name == "A") {
            const int r[6] = {1, 1, 1, 1, 1, 1};
            push_back_end(cfg.layers, r);
        } else if (name == "B") {
            const int r[6] = {2, 2, 2, 2, 2, 2};
            push_back_end(cfg.layers, r);
        } else if (name == "C") {
            const int r[6] = {2, 2, 2, 4, 4, 4};
            push_back_end(cfg.layers, r);
        } else {
            const int r[6] = {4, 4, 4, 4, 4, 4};
            push_back_end(cfg.layers, r);
        }
        return cfg;
    }
    if (name == "table1" || name == "Table1Ref") {
        cfg.name = "table1";
        cfg.layers.push_back(LayerSpec::conv(3, 32, 1));
        cfg.layers.push_back(LayerSpec::maxpool());
        cfg.layers.push_back(LayerSpec::conv(3, 64, 1));
        cfg.layers.push_back(LayerSpec::maxpool());
        cfg.layers.push_back(LayerSpec::conv(3, 64, 1));
        cfg.layers.push_back(LayerSpec::maxpool());
        cfg.layers.push_back(LayerSpec::conv(3, 32, 1));
        cfg.layers.push_back(LayerSpec::conv(3, 32, 1));
        cfg.layers.push_back(LayerSpec::conv(1, 1, 1, /*relu=*/false));
        return cfg;
    }
    throw std::invalid_argument("build_config: unknown config '" + std::string(name) +
                                "' (expected A, B, C, D or table1)");
}

std::int64_t param_count(const NetworkConfig& config, bool include_bias) {
    std::int64_t total = 0;
    int in_ch = config.input_channels;
    for (const LayerSpec& l : config.layers) {
        if (l.kind != LayerSpec::Kind::Conv) continue;
        total += static_cast<std::int64_t>(in_ch) * l.out_channels * l.kernel_size * l.kernel_size;
        if (include_bias) total += l.out_channels;
        in_ch = l.out_channels;
    }
    return total;
}

std::vector<int> receptive_field(const NetworkConfig& config) {
    std::vector<int> rf_per_layer;
    rf_per_layer.reserve(config.layers.size());
    int rf = 1;
    int jump = 1;
    for (const LayerSpec& l : config.layers) {
        if (l.kind == LayerSpec::Kind::Conv) {
            rf += (effective_kernel_size(l.kernel_size, l.dilation) - 1) * jump;
        } else {
            rf += (2 - 1) * jump;
            jump *= 2;
        }
        rf_per_layer.push_back(rf);
    }
    return rf_per_layer;
}

ParamStore init_weights(const NetworkConfig& config, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    ParamStore store;
    int in_ch = config.input_channels;
    for (const LayerSpec& l : config.layers) {
        if (l.kind != LayerSpec::Kind::Conv) continue;
        ConvWeights wt;
        wt.kernel = Tensor4(l.out_channels, in_ch, l.kernel_size, l.kernel_size);
        for (float& v : wt.kernel.data)
            v = static_cast<float>(normal_draw(gen) * 0.01);
        wt.bias.assign(static_cast<std::size_t>(l.out_channels), 0.0f);
        store.layers.push_back(std::move(wt));
        in_ch = l.out_channels;
    }
    return store;
}

namespace {

constexpr char kMagic[4] = {'C', 'S', 'R', 'W'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& os, float v) {
    write_u32(os, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw parse_error("weight file truncated while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32(std::istream& is, const std::string& what) {
    return std::bit_cast<float>(read_u32(is, what));
}

} // namespace

void save_weights(const ParamStore& store, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("cannot open weight file for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(store.layers.size()));
    for (const ConvWeights& wt : store.layers) {
        write_u32(os, static_cast<std::uint32_t>(wt.kernel.n));
        write_u32(os, static_cast<std::uint32_t>(wt.kernel.c));
        write_u32(os, static_cast<std::uint32_t>(wt.kernel.h));
        for (float v : wt.kernel.data) write_f32(os, v);
        for (float v : wt.bias) write_f32(os, v);
    }
    if (!os)
        throw io_error("write failed: " + path.string());
}

ParamStore load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open weight file: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw parse_error("bad magic in weight file: " + path.string());
    const std::uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw parse_error("unsupported weight file version " + std::to_string(version));
    const std::uint32_t layer_count = read_u32(is, "layer count");
    ParamStore store;
    store.layers.reserve(layer_count);
    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::string where = "layer " + std::to_string(li);
        const std::uint32_t out = read_u32(is, where);
        const std::uint32_t in = read_u32(is, where);
        const std::uint32_t k = read_u32(is, where);
        if (out == 0 || in == 0 || k == 0 || out > (1u << 20) || in > (1u << 20) || k > 4096)
            throw parse_error("implausible dims in weight file at " + where);
        ConvWeights wt;
        wt.kernel = Tensor4(static_cast<int>(out), static_cast<int>(in),
                            static_cast<int>(k), static_cast<int>(k));
        for (float& v : wt.kernel.data) v = read_f32(is, where);
        wt.bias.resize(out);
        for (float& v : wt.bias) v = read_f32(is, where);
        store.layers.push_back(std::move(wt));
    }
    return store;
}

void validate_weights(const ParamStore& store, const NetworkConfig& config) {
    int in_ch = config.input_channels;
    std::size_t conv_idx = 0;
    for (const LayerSpec& l : config.layers) {
        if (l.kind != LayerSpec::Kind::Conv) continue;
        if (conv_idx >= store.layers.size())
            throw parse_error("weight store has only " + std::to_string(store.layers.size()) +
                              " conv layers, config '" + config.name + "' needs more");
        const ConvWeights& wt = store.layers[conv_idx];
        if (wt.kernel.n != l.out_channels || wt.kernel.c != in_ch ||
            wt.kernel.h != l.kernel_size || wt.kernel.w != l.kernel_size)
            throw parse_error("weight dims mismatch config at conv layer " +
                              std::to_string(conv_idx));
        ++conv_idx;
        in_ch = l.out_channels;
    }
    if (conv_idx != store.layers.size())
        throw parse_error("weight store has " + std::to_string(store.layers.size()) +
                          " conv layers, config '" + config.name + "' has " +
                          std::to_string(conv_idx));
}

ParamStore load_weights(const std::filesystem::path& path, const NetworkConfig& config) {
    ParamStore store = load_weights(path);
    validate_weights(store, config);
    return store;
}

} // namespace csrnet
