#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "csrnet/errors.hpp"

namespace csrnet {

// Dense rank-4 array in (batch, channels, height, width) order, row-major.
// The single value type for activations, kernels and gradients. Production
// code instantiates float; oracles and finite-difference checks use double.
template <typename T>
struct Tensor4T {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4T() = default;
    Tensor4T(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_) {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw std::invalid_argument("Tensor4: all dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
    }

    T& at(int in, int ic, int ih, int iw) { return data[index(in, ic, ih, iw)]; }
    T at(int in, int ic, int ih, int iw) const { return data[index(in, ic, ih, iw)]; }

    bool same_shape(const Tensor4T& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    template <typename U>
    Tensor4T<U> cast() const {
        Tensor4T<U> out(n, c, h, w);
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

// Kernel taps spaced `dilation` pixels apart; dilation 1 is plain convolution.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 3;
    int dilation = 1;
    int padding = 0;
};

// A k-tap axis at rate r spans k+(k-1)(r-1) input pixels.
constexpr int effective_kernel_size(int k, int r) {
    return k + (k - 1) * (r - 1);
}

// Padding that keeps H_out = H; requires r*(k-1) even (k is odd in all
// built-in configurations).
inline int size_preserving_padding(int k, int r) {
    const int span = r * (k - 1);
    if (span % 2 != 0)
        throw std::invalid_argument("size-preserving padding needs r*(k-1) even");
    return span / 2;
}

template <typename T>
struct ConvWeightsT {
    Tensor4T<T> kernel;       // (out_channels, in_channels, k, k)
    std::vector<T> bias;      // out_channels

    template <typename U>
    ConvWeightsT<U> cast() const {
        ConvWeightsT<U> out;
        out.kernel = kernel.template cast<U>();
        out.bias.assign(bias.begin(), bias.end());
        return out;
    }
};

using ConvWeights = ConvWeightsT<float>;

namespace detail {

inline void check_conv_args(int in_c, int in_h, int in_w, const ConvSpec& sp,
                            int kn, int kc, int kh, int kw, std::size_t bias_len) {
    if (sp.kernel_size < 1 || sp.dilation < 1)
        throw std::invalid_argument("conv2d: kernel_size and dilation must be >= 1");
    if (in_c != sp.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(in_c) +
                                    " channels, spec wants " + std::to_string(sp.in_channels));
    if (kn != sp.out_channels || kc != sp.in_channels ||
        kh != sp.kernel_size || kw != sp.kernel_size)
        throw std::invalid_argument("conv2d: kernel tensor dims inconsistent with spec");
    if (bias_len != static_cast<std::size_t>(sp.out_channels))
        throw std::invalid_argument("conv2d: bias length != out_channels");
    const int span = sp.dilation * (sp.kernel_size - 1);
    if (in_h + 2 * sp.padding - span <= 0 || in_w + 2 * sp.padding - span <= 0)
        throw std::invalid_argument("conv2d: effective kernel extent exceeds padded input");
}

} // namespace detail

// Dilated 2-D convolution, stride 1, zero padding, implemented literally as
// cross-correlation: out(oh,ow) = bias + sum_{ci,i,j} in(oh+r*i-p, ow+r*j-p) * K(i,j).
// Out-of-range taps read zero. Accumulation runs in double per output row.
template <typename T>
Tensor4T<T> conv2d_forward(const Tensor4T<T>& in, const ConvSpec& sp,
                           const ConvWeightsT<T>& wt) {
    detail::check_conv_args(in.c, in.h, in.w, sp, wt.kernel.n, wt.kernel.c,
                            wt.kernel.h, wt.kernel.w, wt.bias.size());
    const int k = sp.kernel_size, r = sp.dilation, p = sp.padding;
    const int ho = in.h + 2 * p - r * (k - 1);
    const int wo = in.w + 2 * p - r * (k - 1);
    Tensor4T<T> out(in.n, sp.out_channels, ho, wo);
    std::vector<double> acc(static_cast<std::size_t>(wo));

    const auto tap = [&](const T* in_row, double g, int off) {
        // iw = ow + off; clip ow so every read stays inside the row
        const int ow0 = std::max(0, -off);
        const int ow1 = std::min(wo, in.w - off);
        for (int ow = ow0; ow < ow1; ++ow)
            acc[ow] += g * static_cast<double>(in_row[ow + off]);
    };

    for (int b = 0; b < in.n; ++b) {
        for (int co = 0; co < sp.out_channels; ++co) {
            for (int oh = 0; oh < ho; ++oh) {
                std::fill(acc.begin(), acc.end(), static_cast<double>(wt.bias[co]));
                for (int ci = 0; ci < sp.in_channels; ++ci) {
                    for (int i = 0; i < k; ++i) {
                        const int ih = oh + r * i - p;
                        if (ih < 0 || ih >= in.h) continue;
                        const T* in_row = &in.data[in.index(b, ci, ih, 0)];
                        const T* k_row = &wt.kernel.data[wt.kernel.index(co, ci, i, 0)];
                        if (k == 3) {
                            // fused taps over the jointly valid span, one pass over acc
                            const double g0 = k_row[0], g1 = k_row[1], g2 = k_row[2];
                            const int o0 = -p, o1 = r - p, o2 = 2 * r - p;
                            const int lo = std::max({0, -o0, -o1, -o2});
                            const int hi = std::min({wo, in.w - o0, in.w - o1, in.w - o2});
                            if (hi <= lo) {
                                tap(in_row, g0, o0);
                                tap(in_row, g1, o1);
                                tap(in_row, g2, o2);
                                continue;
                            }
                            for (int ow = std::max(0, -o0); ow < lo; ++ow) acc[ow] += g0 * in_row[ow + o0];
                            for (int ow = std::max(0, -o1); ow < lo; ++ow) acc[ow] += g1 * in_row[ow + o1];
                            for (int ow = std::max(0, -o2); ow < lo; ++ow) acc[ow] += g2 * in_row[ow + o2];
                            for (int ow = lo; ow < hi; ++ow)
                                acc[ow] += g0 * static_cast<double>(in_row[ow + o0]) +
                                           g1 * static_cast<double>(in_row[ow + o1]) +
                                           g2 * static_cast<double>(in_row[ow + o2]);
                            for (int ow = hi; ow < std::min(wo, in.w - o0); ++ow) acc[ow] += g0 * in_row[ow + o0];
                            for (int ow = hi; ow < std::min(wo, in.w - o1); ++ow) acc[ow] += g1 * in_row[ow + o1];
                            for (int ow = hi; ow < std::min(wo, in.w - o2); ++ow) acc[ow] += g2 * in_row[ow + o2];
                        } else {
                            for (int j = 0; j < k; ++j)
                                tap(in_row, static_cast<double>(k_row[j]), r * j - p);
                        }
                    }
                }
                T* out_row = &out.data[out.index(b, co, oh, 0)];
                for (int ow = 0; ow < wo; ++ow)
                    out_row[ow] = static_cast<T>(acc[ow]);
            }
        }
    }
    return out;
}

template <typename T>
struct ConvGradsT {
    Tensor4T<T> input;    // same dims as the forward input
    Tensor4T<T> kernel;   // same dims as the kernel
    std::vector<T> bias;  // out_channels
};

// Exact partials of any scalar loss through conv2d_forward given dL/dout.
template <typename T>
ConvGradsT<T> conv2d_backward(const Tensor4T<T>& in, const ConvSpec& sp,
                              const ConvWeightsT<T>& wt, const Tensor4T<T>& gout) {
    detail::check_conv_args(in.c, in.h, in.w, sp, wt.kernel.n, wt.kernel.c,
                            wt.kernel.h, wt.kernel.w, wt.bias.size());
    const int k = sp.kernel_size, r = sp.dilation, p = sp.padding;
    const int ho = in.h + 2 * p - r * (k - 1);
    const int wo = in.w + 2 * p - r * (k - 1);
    if (gout.n != in.n || gout.c != sp.out_channels || gout.h != ho || gout.w != wo)
        throw std::invalid_argument("conv2d_backward: grad_output dims do not match forward output");

    std::vector<double> gin(in.size(), 0.0);
    std::vector<double> gk(wt.kernel.size(), 0.0);
    std::vector<double> gb(static_cast<std::size_t>(sp.out_channels), 0.0);

    for (int b = 0; b < in.n; ++b) {
        for (int co = 0; co < sp.out_channels; ++co) {
            for (int oh = 0; oh < ho; ++oh) {
                for (int ow = 0; ow < wo; ++ow) {
                    const double g = static_cast<double>(gout.at(b, co, oh, ow));
                    if (g == 0.0) continue;
                    gb[co] += g;
                    for (int ci = 0; ci < sp.in_channels; ++ci) {
                        for (int i = 0; i < k; ++i) {
                            const int ih = oh + r * i - p;
                            if (ih < 0 || ih >= in.h) continue;
                            for (int j = 0; j < k; ++j) {
                                const int iw = ow + r * j - p;
                                if (iw < 0 || iw >= in.w) continue;
                                const std::size_t ii = in.index(b, ci, ih, iw);
                                const std::size_t ki = wt.kernel.index(co, ci, i, j);
                                gk[ki] += g * static_cast<double>(in.data[ii]);
                                gin[ii] += g * static_cast<double>(wt.kernel.data[ki]);
                            }
                        }
                    }
                }
            }
        }
    }

    ConvGradsT<T> grads;
    grads.input = Tensor4T<T>(in.n, in.c, in.h, in.w);
    grads.kernel = Tensor4T<T>(wt.kernel.n, wt.kernel.c, wt.kernel.h, wt.kernel.w);
    grads.bias.resize(gb.size());
    for (std::size_t i = 0; i < gin.size(); ++i) grads.input.data[i] = static_cast<T>(gin[i]);
    for (std::size_t i = 0; i < gk.size(); ++i) grads.kernel.data[i] = static_cast<T>(gk[i]);
    for (std::size_t i = 0; i < gb.size(); ++i) grads.bias[i] = static_cast<T>(gb[i]);
    return grads;
}

// Winning input position per 2x2 window, recorded for gradient routing.
template <typename T>
struct MaxPoolResultT {
    Tensor4T<T> output;
    std::vector<std::int64_t> argmax; // flat index into the input tensor, one per output element
    int in_n = 0, in_c = 0, in_h = 0, in_w = 0;
};

// 2x2 window, stride 2; odd trailing row/column dropped. Ties go to the first
// position in row-major window scan order.
template <typename T>
MaxPoolResultT<T> maxpool2x2_forward(const Tensor4T<T>& in) {
    if (in.h < 2 || in.w < 2)
        throw std::invalid_argument("maxpool2x2: input smaller than one window");
    const int ho = in.h / 2, wo = in.w / 2;
    MaxPoolResultT<T> res;
    res.output = Tensor4T<T>(in.n, in.c, ho, wo);
    res.argmax.resize(res.output.size());
    res.in_n = in.n; res.in_c = in.c; res.in_h = in.h; res.in_w = in.w;
    std::size_t oi = 0;
    for (int b = 0; b < in.n; ++b) {
        for (int ch = 0; ch < in.c; ++ch) {
            for (int oh = 0; oh < ho; ++oh) {
                for (int ow = 0; ow < wo; ++ow, ++oi) {
                    std::size_t best = in.index(b, ch, oh * 2, ow * 2);
                    T best_v = in.data[best];
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t ii = in.index(b, ch, oh * 2 + dy, ow * 2 + dx);
                            if (in.data[ii] > best_v) { best_v = in.data[ii]; best = ii; }
                        }
                    }
                    res.output.data[oi] = best_v;
                    res.argmax[oi] = static_cast<std::int64_t>(best);
                }
            }
        }
    }
    return res;
}

// Routes grad_output to the recorded argmax positions, zero elsewhere.
template <typename T>
Tensor4T<T> maxpool2x2_backward(const MaxPoolResultT<T>& fwd, const Tensor4T<T>& gout) {
    if (!gout.same_shape(fwd.output))
        throw std::invalid_argument("maxpool2x2_backward: grad_output dims do not match forward output");
    Tensor4T<T> gin(fwd.in_n, fwd.in_c, fwd.in_h, fwd.in_w);
    for (std::size_t i = 0; i < gout.size(); ++i)
        gin.data[static_cast<std::size_t>(fwd.argmax[i])] += gout.data[i];
    return gin;
}

template <typename T>
Tensor4T<T> relu_forward(const Tensor4T<T>& in) {
    Tensor4T<T> out(in.n, in.c, in.h, in.w);
    for (std::size_t i = 0; i < in.size(); ++i)
        out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
    return out;
}

// Derivative at 0 defined as 0.
template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& in, const Tensor4T<T>& gout) {
    if (!gout.same_shape(in))
        throw std::invalid_argument("relu_backward: grad_output dims do not match input");
    Tensor4T<T> gin(in.n, in.c, in.h, in.w);
    for (std::size_t i = 0; i < in.size(); ++i)
        gin.data[i] = in.data[i] > T(0) ? gout.data[i] : T(0);
    return gin;
}

// Per-channel bilinear interpolation with half-pixel centers:
// src = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped at borders.
// The nested-lerp form reproduces constant inputs exactly.
template <typename T>
Tensor4T<T> bilinear_resize(const Tensor4T<T>& in, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1)
        throw std::invalid_argument("bilinear_resize: target dims must be >= 1");
    Tensor4T<T> out(in.n, in.c, target_h, target_w);
    const double sy = static_cast<double>(in.h) / target_h;
    const double sx = static_cast<double>(in.w) / target_w;
    for (int b = 0; b < in.n; ++b) {
        for (int ch = 0; ch < in.c; ++ch) {
            for (int oh = 0; oh < target_h; ++oh) {
                const double fy = (oh + 0.5) * sy - 0.5;
                int y0 = static_cast<int>(std::floor(fy));
                const double ry = fy - y0;
                const int y1 = std::clamp(y0 + 1, 0, in.h - 1);
                y0 = std::clamp(y0, 0, in.h - 1);
                for (int ow = 0; ow < target_w; ++ow) {
                    const double fx = (ow + 0.5) * sx - 0.5;
                    int x0 = static_cast<int>(std::floor(fx));
                    const double rx = fx - x0;
                    const int x1 = std::clamp(x0 + 1, 0, in.w - 1);
                    x0 = std::clamp(x0, 0, in.w - 1);
                    const double v00 = in.at(b, ch, y0, x0);
                    const double v01 = in.at(b, ch, y0, x1);
                    const double v10 = in.at(b, ch, y1, x0);
                    const double v11 = in.at(b, ch, y1, x1);
                    const double top = v00 + rx * (v01 - v00);
                    const double bot = v10 + rx * (v11 - v10);
                    out.at(b, ch, oh, ow) = static_cast<T>(top + ry * (bot - top));
                }
            }
        }
    }
    return out;
}

} // namespace csrnet
