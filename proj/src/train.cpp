#include "csrnet/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace csrnet {

Tensor4 crop_image(const Tensor4& image, const PatchRect& rect) {
    if (rect.y0 < 0 || rect.x0 < 0 || rect.h < 1 || rect.w < 1 ||
        rect.y0 + rect.h > image.h || rect.x0 + rect.w > image.w)
        throw std::invalid_argument("crop_image: rect out of bounds");
    Tensor4 out(image.n, image.c, rect.h, rect.w);
    for (int b = 0; b < image.n; ++b)
        for (int ch = 0; ch < image.c; ++ch)
            for (int r = 0; r < rect.h; ++r)
                for (int c = 0; c < rect.w; ++c)
                    out.at(b, ch, r, c) = image.at(b, ch, rect.y0 + r, rect.x0 + c);
    return out;
}

Tensor4 mirror_image_horizontal(const Tensor4& image) {
    Tensor4 out(image.n, image.c, image.h, image.w);
    for (int b = 0; b < image.n; ++b)
        for (int ch = 0; ch < image.c; ++ch)
            for (int r = 0; r < image.h; ++r)
                for (int c = 0; c < image.w; ++c)
                    out.at(b, ch, r, image.w - 1 - c) = image.at(b, ch, r, c);
    return out;
}

DensityMap density_target(const DensityMap& full, int factor) {
    if (factor < 1)
        throw std::invalid_argument("density_target: factor must be >= 1");
    const int ch = (full.h / factor) * factor;
    const int cw = (full.w / factor) * factor;
    if (ch < factor || cw < factor)
        throw std::invalid_argument("density_target: map smaller than one block");
    return downsample_density_map(crop_density(full, 0, 0, ch, cw), factor);
}

namespace {

HeadAnnotations points_in_rect(const HeadAnnotations& points, const PatchRect& rect) {
    HeadAnnotations out;
    for (const Point& p : points) {
        if (p.x >= rect.x0 && p.x < rect.x0 + rect.w &&
            p.y >= rect.y0 && p.y < rect.y0 + rect.h)
            out.push_back({p.x - rect.x0, p.y - rect.y0});
    }
    return out;
}

HeadAnnotations mirror_points(const HeadAnnotations& points, int patch_w) {
    HeadAnnotations out = points;
    for (Point& p : out) p.x = (patch_w - 1) - p.x;
    return out;
}

} // namespace

std::vector<PatchSample> augment_nine_patches(const Tensor4& image, const HeadAnnotations& points,
                                              std::uint64_t seed) {
    if (image.h < 2 || image.w < 2)
        throw std::invalid_argument("augment_nine_patches: image too small to halve");
    const int ph = image.h / 2;
    const int pw = image.w / 2;

    std::vector<PatchRect> rects = {
        {0, 0, ph, pw},
        {0, pw, ph, pw},
        {ph, 0, ph, pw},
        {ph, pw, ph, pw},
    };
    std::mt19937_64 gen(seed);
    for (int i = 0; i < 5; ++i) {
        const int y0 = static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(image.h - ph + 1)));
        const int x0 = static_cast<int>(uniform_index(gen, static_cast<std::uint64_t>(image.w - pw + 1)));
        rects.push_back({y0, x0, ph, pw});
    }

    std::vector<PatchSample> patches;
    patches.reserve(18);
    for (const PatchRect& rect : rects) {
        PatchSample s;
        s.image = crop_image(image, rect);
        s.points = points_in_rect(points, rect);
        s.rect = rect;
        s.mirrored = false;
        patches.push_back(std::move(s));
    }
    for (int i = 0; i < 9; ++i) {
        PatchSample s;
        s.image = mirror_image_horizontal(patches[i].image);
        s.points = mirror_points(patches[i].points, pw);
        s.rect = patches[i].rect;
        s.mirrored = true;
        patches.push_back(std::move(s));
    }
    return patches;
}

void sgd_step(ParamStore& params, const ParamStore& grads, double lr) {
    if (params.layers.size() != grads.layers.size())
        throw std::invalid_argument("sgd_step: store shape mismatch");
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        ConvWeights& p = params.layers[li];
        const ConvWeights& g = grads.layers[li];
        if (!p.kernel.same_shape(g.kernel) || p.bias.size() != g.bias.size())
            throw std::invalid_argument("sgd_step: layer " + std::to_string(li) + " shape mismatch");
        for (std::size_t i = 0; i < p.kernel.data.size(); ++i) {
            if (!std::isfinite(g.kernel.data[i]))
                throw divergence_error("non-finite kernel gradient at layer " + std::to_string(li));
            p.kernel.data[i] -= static_cast<float>(lr * g.kernel.data[i]);
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            if (!std::isfinite(g.bias[i]))
                throw divergence_error("non-finite bias gradient at layer " + std::to_string(li));
            p.bias[i] -= static_cast<float>(lr * g.bias[i]);
        }
    }
}

namespace {

void accumulate(ParamStore& acc, const ParamStore& grads) {
    for (std::size_t li = 0; li < acc.layers.size(); ++li) {
        for (std::size_t i = 0; i < acc.layers[li].kernel.data.size(); ++i)
            acc.layers[li].kernel.data[i] += grads.layers[li].kernel.data[i];
        for (std::size_t i = 0; i < acc.layers[li].bias.size(); ++i)
            acc.layers[li].bias[i] += grads.layers[li].bias[i];
    }
}

void scale(ParamStore& store, float s) {
    for (auto& l : store.layers) {
        for (float& v : l.kernel.data) v *= s;
        for (float& v : l.bias) v *= s;
    }
}

void write_loss_log(const std::string& prefix, const std::vector<double>& losses) {
    std::ofstream os(prefix + ".loss.tsv");
    if (!os)
        throw io_error("cannot write loss log: " + prefix + ".loss.tsv");
    for (std::size_t e = 0; e < losses.size(); ++e)
        os << e + 1 << '\t' << losses[e] << '\n';
}

} // namespace

TrainResult train_loop(const NetworkConfig& config, const TrainConfig& tc,
                       const std::vector<TrainingSample>& dataset) {
    if (dataset.empty())
        throw std::invalid_argument("train_loop: empty dataset");
    if (tc.learning_rate <= 0.0 || tc.batch_size < 1)
        throw std::invalid_argument("train_loop: bad learning rate or batch size");

    TrainResult res;
    res.params = init_weights(config, tc.seed);
    std::mt19937_64 shuffle_gen(tc.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        shuffle_indices(order, shuffle_gen);
        double epoch_acc = 0.0;
        for (std::size_t pos = 0; pos < order.size();) {
            const std::size_t batch_end = std::min(order.size(), pos + static_cast<std::size_t>(tc.batch_size));
            const int batch_n = static_cast<int>(batch_end - pos);
            ParamStore batch_grads = zero_like(res.params);
            for (; pos < batch_end; ++pos) {
                const TrainingSample& sample = dataset[order[pos]];
                ForwardResultT<float> fwd = forward(config, res.params, sample.image, true);
                const DensityMap* target = &sample.target;
                LossResultT<float> loss = euclidean_loss(fwd.output, std::span<const DensityMap>(target, 1));
                if (!std::isfinite(loss.loss))
                    throw divergence_error("loss diverged at epoch " + std::to_string(epoch) +
                                           ", sample " + std::to_string(order[pos]));
                epoch_acc += loss.loss;
                accumulate(batch_grads, backward(config, res.params, fwd.tape, loss.grad));
            }
            if (batch_n > 1) scale(batch_grads, 1.0f / static_cast<float>(batch_n));
            try {
                sgd_step(res.params, batch_grads, tc.learning_rate);
            } catch (const divergence_error& e) {
                throw divergence_error(std::string(e.what()) + " at epoch " +
                                       std::to_string(epoch) + ", sample " +
                                       std::to_string(order[pos - 1]));
            }
        }
        res.epoch_loss.push_back(epoch_acc / static_cast<double>(dataset.size()));

        if (!tc.checkpoint_prefix.empty() && tc.checkpoint_every > 0 &&
            epoch % tc.checkpoint_every == 0) {
            save_weights(res.params, tc.checkpoint_prefix + ".epoch" + std::to_string(epoch) + ".csrw");
            write_loss_log(tc.checkpoint_prefix, res.epoch_loss);
        }
    }
    if (!tc.checkpoint_prefix.empty())
        write_loss_log(tc.checkpoint_prefix, res.epoch_loss);
    return res;
}

} // namespace csrnet
