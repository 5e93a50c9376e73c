#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "csrnet/random.hpp"
#include "csrnet/tensor.hpp"

namespace csrnet {

// One entry of the declarative layer graph. Conv layers use size-preserving
// padding derived from (kernel_size, dilation); stride is always 1.
struct LayerSpec {
    enum class Kind { Conv, MaxPool };
    Kind kind = Kind::Conv;
    int kernel_size = 3;
    int out_channels = 0;
    int dilation = 1;
    bool relu = true;

    static LayerSpec conv(int k, int out, int dilation, bool relu = true) {
        LayerSpec l;
        l.kind = Kind::Conv;
        l.kernel_size = k;
        l.out_channels = out;
        l.dilation = dilation;
        l.relu = relu;
        return l;
    }
    static LayerSpec maxpool() {
        LayerSpec l;
        l.kind = Kind::MaxPool;
        return l;
    }
};

struct NetworkConfig {
    std::string name;
    int input_channels = 3;
    std::vector<LayerSpec> layers;
};

// Built-in configurations: "A", "B", "C", "D" (shared 13-layer front-end,
// back-ends differing only in dilation rate, conv1-1-1 output) and "table1"
// (the CR(32,3)-M-CR(64,3)-M-CR(64,3)-M-CR(32,3)-CR(32,3)-CR(1,1) reference
// network). Throws on unknown names.
NetworkConfig build_config(std::string_view name);

// Kernel parameters: sum over conv layers of in*out*k^2, plus out biases per
// layer when include_bias. Dilation never contributes.
std::int64_t param_count(const NetworkConfig& config, bool include_bias);

// Running receptive-field size on the input grid after each layer:
// rf += (effective_kernel_size(k, r) - 1) * jump, jump doubling at each pool.
std::vector<int> receptive_field(const NetworkConfig& config);

template <typename T>
struct ParamStoreT {
    std::vector<ConvWeightsT<T>> layers; // conv layers only, config order

    template <typename U>
    ParamStoreT<U> cast() const {
        ParamStoreT<U> out;
        out.layers.reserve(layers.size());
        for (const auto& l : layers) out.layers.push_back(l.template cast<U>());
        return out;
    }
};

using ParamStore = ParamStoreT<float>;

// Kernels i.i.d. Normal(0, 0.01^2) in deterministic layer order, biases zero.
ParamStore init_weights(const NetworkConfig& config, std::uint64_t seed);

template <typename T>
ParamStoreT<T> zero_like(const ParamStoreT<T>& store) {
    ParamStoreT<T> out;
    out.layers.reserve(store.layers.size());
    for (const auto& l : store.layers) {
        ConvWeightsT<T> z;
        z.kernel = Tensor4T<T>(l.kernel.n, l.kernel.c, l.kernel.h, l.kernel.w);
        z.bias.assign(l.bias.size(), T(0));
        out.layers.push_back(std::move(z));
    }
    return out;
}

// Intermediates recorded during forward for the backward sweep.
template <typename T>
struct TapeT {
    struct Layer {
        LayerSpec spec;
        ConvSpec conv;                 // valid when spec.kind == Conv
        Tensor4T<T> input;             // layer input (conv layers)
        Tensor4T<T> preact;            // conv output before ReLU (when relu)
        MaxPoolResultT<T> pool;        // valid when spec.kind == MaxPool
    };
    std::vector<Layer> layers;
};

template <typename T>
struct ForwardResultT {
    Tensor4T<T> output;
    TapeT<T> tape; // empty unless keep_intermediates
};

namespace detail {

inline ConvSpec conv_spec_for(const LayerSpec& l, int in_channels) {
    ConvSpec sp;
    sp.in_channels = in_channels;
    sp.out_channels = l.out_channels;
    sp.kernel_size = l.kernel_size;
    sp.dilation = l.dilation;
    sp.padding = size_preserving_padding(l.kernel_size, l.dilation);
    return sp;
}

} // namespace detail

template <typename T>
ForwardResultT<T> forward(const NetworkConfig& config, const ParamStoreT<T>& params,
                          const Tensor4T<T>& input, bool keep_intermediates) {
    if (input.c != config.input_channels)
        throw std::invalid_argument("forward: input channels do not match config");
    ForwardResultT<T> res;
    Tensor4T<T> cur = input;
    std::size_t conv_idx = 0;
    for (const LayerSpec& l : config.layers) {
        typename TapeT<T>::Layer rec;
        rec.spec = l;
        if (l.kind == LayerSpec::Kind::Conv) {
            if (conv_idx >= params.layers.size())
                throw std::invalid_argument("forward: param store has too few conv layers");
            rec.conv = detail::conv_spec_for(l, cur.c);
            Tensor4T<T> pre = conv2d_forward(cur, rec.conv, params.layers[conv_idx]);
            ++conv_idx;
            if (keep_intermediates) rec.input = std::move(cur);
            if (l.relu) {
                if (keep_intermediates) rec.preact = pre;
                cur = relu_forward(pre);
            } else {
                cur = std::move(pre);
            }
        } else {
            if (cur.h < 2 || cur.w < 2)
                throw std::invalid_argument("forward: spatial dims too small to pool");
            MaxPoolResultT<T> pooled = maxpool2x2_forward(cur);
            cur = pooled.output;
            if (keep_intermediates) rec.pool = std::move(pooled);
        }
        if (keep_intermediates) res.tape.layers.push_back(std::move(rec));
    }
    if (conv_idx != params.layers.size())
        throw std::invalid_argument("forward: param store has too many conv layers");
    res.output = std::move(cur);
    return res;
}

// Reverse-mode sweep over the tape; returns parameter gradients shaped like
// the store. grad_output must match the recorded forward output dims.
template <typename T>
ParamStoreT<T> backward(const NetworkConfig& config, const ParamStoreT<T>& params,
                        const TapeT<T>& tape, const Tensor4T<T>& grad_output) {
    if (tape.layers.size() != config.layers.size())
        throw std::invalid_argument("backward: tape does not match config");
    ParamStoreT<T> grads = zero_like(params);
    Tensor4T<T> g = grad_output;
    std::size_t conv_idx = params.layers.size();
    for (std::size_t li = tape.layers.size(); li-- > 0;) {
        const auto& rec = tape.layers[li];
        if (rec.spec.kind == LayerSpec::Kind::Conv) {
            --conv_idx;
            if (rec.spec.relu) g = relu_backward(rec.preact, g);
            ConvGradsT<T> cg = conv2d_backward(rec.input, rec.conv, params.layers[conv_idx], g);
            grads.layers[conv_idx].kernel = std::move(cg.kernel);
            grads.layers[conv_idx].bias = std::move(cg.bias);
            g = std::move(cg.input);
        } else {
            g = maxpool2x2_backward(rec.pool, g);
        }
    }
    return grads;
}

// Little-endian "CSRW" container: magic, u32 version=1, u32 layer_count,
// then per conv layer u32 out/in/k, out*in*k^2 f32 kernel values row-major,
// and out f32 biases.
void save_weights(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_weights(const std::filesystem::path& path);

// Throws naming the first layer whose dims disagree with the config.
void validate_weights(const ParamStore& store, const NetworkConfig& config);
ParamStore load_weights(const std::filesystem::path& path, const NetworkConfig& config);

} // namespace csrnet
