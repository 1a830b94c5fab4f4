#include "htr/model.hpp"

#include <cmath>
#include <random>

namespace htr {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.conv_blocks = {{1024, 5}, {512, 3}, {256, 3}};
    c.dense_units = {256, 128};
    c.dropout_p = 0.5;
    c.classes = 47;
    return c;
}

ModelConfig ModelConfig::desk(std::size_t classes) {
    ModelConfig c;
    c.conv_blocks = {{8, 5}, {16, 3}, {32, 3}};
    c.dense_units = {64};
    c.dropout_p = 0.5;
    c.classes = classes;
    return c;
}

ShapeTrace trace_shapes(const ModelConfig& config) {
    if (config.input.channels == 0 || config.input.height == 0 || config.input.width == 0) {
        throw ConfigError("input shape must have positive extents");
    }
    if (config.classes < 2) {
        throw ConfigError("classes must be >= 2, got " + std::to_string(config.classes));
    }
    if (!(config.dropout_p >= 0.0 && config.dropout_p < 1.0)) {
        throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(config.dropout_p));
    }
    ShapeTrace trace;
    std::size_t channels = config.input.channels, h = config.input.height, w = config.input.width;
    for (std::size_t b = 0; b < config.conv_blocks.size(); ++b) {
        const ConvBlock& block = config.conv_blocks[b];
        const std::string name = "conv block " + std::to_string(b);
        if (block.filters == 0 || block.kernel == 0) {
            throw ConfigError(name + ": filters and kernel size must be >= 1");
        }
        if (block.kernel > h || block.kernel > w) {
            throw ConfigError(name + ": kernel " + std::to_string(block.kernel) + "x" + std::to_string(block.kernel) +
                              " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
        }
        h = h - block.kernel + 1;
        w = w - block.kernel + 1;
        if (h < 2 || w < 2) {
            throw ConfigError(name + ": feature map " + std::to_string(h) + "x" + std::to_string(w) +
                              " too small for 2x2 pooling");
        }
        h /= 2;
        w /= 2;
        channels = block.filters;
        trace.block_outputs.push_back(Shape{channels, h, w});
    }
    for (std::size_t d = 0; d < config.dense_units.size(); ++d) {
        if (config.dense_units[d] == 0) {
            throw ConfigError("dense layer " + std::to_string(d) + ": units must be >= 1");
        }
    }
    trace.flatten_width = channels * h * w;
    return trace;
}

template <typename T>
std::vector<BasicTensor<T>*> Parameters<T>::blocks() {
    std::vector<BasicTensor<T>*> out;
    for (auto& c : conv) {
        out.push_back(&c.kernels);
        out.push_back(&c.bias);
    }
    for (auto& d : dense) {
        out.push_back(&d.weight);
        out.push_back(&d.bias);
    }
    return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> Parameters<T>::blocks() const {
    std::vector<const BasicTensor<T>*> out;
    for (const auto& c : conv) {
        out.push_back(&c.kernels);
        out.push_back(&c.bias);
    }
    for (const auto& d : dense) {
        out.push_back(&d.weight);
        out.push_back(&d.bias);
    }
    return out;
}

template <typename T>
std::vector<std::string> Parameters<T>::block_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < conv.size(); ++i) {
        out.push_back("conv" + std::to_string(i) + ".kernels");
        out.push_back("conv" + std::to_string(i) + ".bias");
    }
    for (std::size_t i = 0; i < dense.size(); ++i) {
        out.push_back("dense" + std::to_string(i) + ".weight");
        out.push_back("dense" + std::to_string(i) + ".bias");
    }
    return out;
}

template <typename T>
Parameters<T> Parameters<T>::zeros_like() const {
    Parameters out;
    for (const auto& c : conv) {
        out.conv.push_back({BasicTensor<T>(c.kernels.shape()), BasicTensor<T>(c.bias.shape())});
    }
    for (const auto& d : dense) {
        out.dense.push_back({BasicTensor<T>(d.weight.shape()), BasicTensor<T>(d.bias.shape())});
    }
    return out;
}

template <typename T>
void Parameters<T>::accumulate(const Parameters& other) {
    auto mine = blocks();
    auto theirs = other.blocks();
    if (mine.size() != theirs.size()) {
        throw ShapeError("parameter sets have different block counts");
    }
    for (std::size_t b = 0; b < mine.size(); ++b) {
        if (mine[b]->shape() != theirs[b]->shape()) {
            throw ShapeError("parameter block " + std::to_string(b) + " shape mismatch");
        }
        auto dst = mine[b]->data();
        auto src = theirs[b]->data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
}

template <typename T>
std::size_t Parameters<T>::count() const {
    std::size_t n = 0;
    for (const auto* b : blocks()) {
        n += b->size();
    }
    return n;
}

namespace {
constexpr double kLogitInitGain = 0.1;
}

template <typename T>
Model<T> Model<T>::build(const ModelConfig& config, std::uint64_t seed) {
    ShapeTrace trace = trace_shapes(config);
    std::mt19937_64 rng(seed);
    auto he_normal = [&rng](BasicTensor<T>& t, std::size_t fan_in, double gain = 1.0) {
        std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
        for (auto& v : t.data()) {
            v = static_cast<T>(dist(rng));
        }
    };

    Parameters<T> params;
    std::size_t channels = config.input.channels;
    for (const ConvBlock& block : config.conv_blocks) {
        ConvParams<T> p{BasicTensor<T>(Shape{block.filters, channels, block.kernel, block.kernel}),
                        BasicTensor<T>(Shape{block.filters})};
        he_normal(p.kernels, channels * block.kernel * block.kernel);
        params.conv.push_back(std::move(p));
        channels = block.filters;
    }
    std::size_t width = trace.flatten_width;
    std::vector<std::size_t> widths = config.dense_units;
    widths.push_back(config.classes);
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::size_t units = widths[i];
        DenseParams<T> p{BasicTensor<T>(Shape{units, width}), BasicTensor<T>(Shape{units})};
        he_normal(p.weight, width, i + 1 == widths.size() ? kLogitInitGain : 1.0);
        params.dense.push_back(std::move(p));
        width = units;
    }
    return Model(config, std::move(trace), std::move(params));
}

template <typename T>
Model<T> Model<T>::from_parameters(const ModelConfig& config, Parameters<T> params) {
    ShapeTrace trace = trace_shapes(config);
    if (params.conv.size() != config.conv_blocks.size() || params.dense.size() != config.dense_units.size() + 1) {
        throw CompatibilityError("parameter layer counts do not match the model config");
    }
    std::size_t channels = config.input.channels;
    for (std::size_t b = 0; b < params.conv.size(); ++b) {
        const ConvBlock& block = config.conv_blocks[b];
        const Shape expected{block.filters, channels, block.kernel, block.kernel};
        if (params.conv[b].kernels.shape() != expected || params.conv[b].bias.shape() != Shape{block.filters}) {
            throw CompatibilityError("conv block " + std::to_string(b) + " expects kernels " + expected.to_string() +
                                     ", got " + params.conv[b].kernels.shape().to_string());
        }
        channels = block.filters;
    }
    std::size_t width = trace.flatten_width;
    std::vector<std::size_t> widths = config.dense_units;
    widths.push_back(config.classes);
    for (std::size_t d = 0; d < widths.size(); ++d) {
        const Shape expected{widths[d], width};
        if (params.dense[d].weight.shape() != expected || params.dense[d].bias.shape() != Shape{widths[d]}) {
            throw CompatibilityError("dense layer " + std::to_string(d) + " expects weight " + expected.to_string() +
                                     ", got " + params.dense[d].weight.shape().to_string());
        }
        width = widths[d];
    }
    return Model(config, std::move(trace), std::move(params));
}

template <typename T>
BasicTensor<T> batch_row(const BasicTensor<T>& batch, std::size_t index) {
    const auto& dims = batch.shape().dims();
    if (dims.size() < 2) {
        throw ShapeError("batch tensor needs rank >= 2, got " + batch.shape().to_string());
    }
    if (index >= dims[0]) {
        throw ShapeError("batch row " + std::to_string(index) + " out of range for " + batch.shape().to_string());
    }
    Shape row_shape(std::vector<std::size_t>(dims.begin() + 1, dims.end()));
    const std::size_t n = row_shape.elements();
    auto src = batch.data().subspan(index * n, n);
    return BasicTensor<T>(row_shape, std::vector<T>(src.begin(), src.end()));
}

template <typename T>
std::vector<std::size_t> one_hot_targets(const BasicTensor<T>& one_hot) {
    if (one_hot.shape().rank() != 2) {
        throw ShapeError("one-hot targets must be (B, classes), got " + one_hot.shape().to_string());
    }
    const std::size_t rows = one_hot.dim(0), classes = one_hot.dim(1);
    std::vector<std::size_t> targets(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t ones = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            const T v = one_hot[r * classes + c];
            if (v == T(1)) {
                ++ones;
                targets[r] = c;
            } else if (v != T(0)) {
                throw InputError("target row " + std::to_string(r) + " is not one-hot");
            }
        }
        if (ones != 1) {
            throw InputError("target row " + std::to_string(r) + " is not one-hot");
        }
    }
    return targets;
}

template <typename T>
BasicTensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    if (labels.empty()) {
        throw InputError("one_hot needs at least one label");
    }
    BasicTensor<T> out(Shape{labels.size(), classes});
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= classes) {
            throw InputError("label " + std::to_string(labels[r]) + " out of range for " + std::to_string(classes) +
                             " classes");
        }
        out[r * classes + labels[r]] = T(1);
    }
    return out;
}

template <typename T>
typename Model<T>::SampleCache Model<T>::forward_sample(BasicTensor<T> x, bool training, std::uint64_t seed) const {
    SampleCache cache;
    cache.blocks.reserve(params_.conv.size());
    for (const ConvParams<T>& conv : params_.conv) {
        BlockCache block;
        block.input = x;
        block.conv_out = conv2d_forward(x, conv);
        block.pool = pool2d_forward(relu(block.conv_out), PoolMode::max);
        x = block.pool.output;
        cache.blocks.push_back(std::move(block));
    }
    auto dropped = dropout_forward(x, DropoutSpec{config_.dropout_p, seed}, training);
    cache.dropout_mask = std::move(dropped.mask);
    BasicTensor<T> h = reshape(dropped.output, Shape{trace_.flatten_width});
    const std::size_t hidden = params_.dense.size() - 1;
    for (std::size_t d = 0; d < hidden; ++d) {
        cache.dense_inputs.push_back(h);
        cache.dense_pre.push_back(dense_forward(h, params_.dense[d]));
        h = relu(cache.dense_pre.back());
    }
    cache.dense_inputs.push_back(h);
    cache.probs = softmax(dense_forward(h, params_.dense.back()));
    return cache;
}

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& batch, bool training, std::uint64_t seed) {
    const Shape expected = config_.input.shape();
    if (batch.shape().rank() != 4 || Shape{batch.dim(1), batch.dim(2), batch.dim(3)} != expected) {
        throw ShapeError("model expects batch (B," + expected.to_string().substr(1) + ", got " +
                         batch.shape().to_string());
    }
    const std::size_t rows = batch.dim(0);
    cache_.clear();
    cache_.reserve(rows);
    BasicTensor<T> probs(Shape{rows, config_.classes});
    for (std::size_t r = 0; r < rows; ++r) {
        SampleCache sample = forward_sample(batch_row(batch, r), training, mix_seed(seed, r));
        std::copy(sample.probs.data().begin(), sample.probs.data().end(), probs.data().begin() + r * config_.classes);
        cache_.push_back(std::move(sample));
    }
    return probs;
}

template <typename T>
void Model<T>::backward_sample(const SampleCache& cache, std::size_t target, T scale, Parameters<T>& grads) const {
    // Fused softmax + cross-entropy: d loss / d logits = (p - y) / B.
    BasicTensor<T> d = cache.probs;
    d[target] -= T(1);
    for (auto& v : d.data()) {
        v *= scale;
    }
    for (std::size_t layer = params_.dense.size(); layer-- > 0;) {
        if (layer + 1 < params_.dense.size()) {
            d = relu_backward(cache.dense_pre[layer], d);
        }
        DenseGrad<T> g = dense_backward(cache.dense_inputs[layer], params_.dense[layer], d);
        grads.dense[layer].weight = add(grads.dense[layer].weight, g.param_grads.weight);
        grads.dense[layer].bias = add(grads.dense[layer].bias, g.param_grads.bias);
        d = std::move(g.input_grad);
    }
    d = reshape(d, cache.dropout_mask.shape());
    d = dropout_backward(cache.dropout_mask, d);
    for (std::size_t b = params_.conv.size(); b-- > 0;) {
        const BlockCache& block = cache.blocks[b];
        d = pool2d_backward(block.pool, d);
        d = relu_backward(block.conv_out, d);
        ConvGrad<T> g = conv2d_backward(block.input, params_.conv[b], d);
        grads.conv[b].kernels = add(grads.conv[b].kernels, g.param_grads.kernels);
        grads.conv[b].bias = add(grads.conv[b].bias, g.param_grads.bias);
        d = std::move(g.input_grad);
    }
}

template <typename T>
Parameters<T> Model<T>::backward(const BasicTensor<T>& one_hot) const {
    if (cache_.empty()) {
        throw StateError("backward called without a cached forward pass");
    }
    if (one_hot.shape() != Shape{cache_.size(), config_.classes}) {
        throw ShapeError("targets " + one_hot.shape().to_string() + " do not match cached batch of " +
                         std::to_string(cache_.size()) + " rows and " + std::to_string(config_.classes) + " classes");
    }
    const std::vector<std::size_t> targets = one_hot_targets(one_hot);
    Parameters<T> grads = params_.zeros_like();
    const T scale = T(1) / static_cast<T>(cache_.size());
    for (std::size_t r = 0; r < cache_.size(); ++r) {
        backward_sample(cache_[r], targets[r], scale, grads);
    }
    return grads;
}

template struct Parameters<float>;
template struct Parameters<double>;
template class Model<float>;
template class Model<double>;
template BasicTensor<float> batch_row(const BasicTensor<float>&, std::size_t);
template BasicTensor<double> batch_row(const BasicTensor<double>&, std::size_t);
template std::vector<std::size_t> one_hot_targets(const BasicTensor<float>&);
template std::vector<std::size_t> one_hot_targets(const BasicTensor<double>&);
template BasicTensor<float> one_hot(std::span<const std::size_t>, std::size_t);
template BasicTensor<double> one_hot(std::span<const std::size_t>, std::size_t);

} // namespace htr
