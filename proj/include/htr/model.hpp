#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htr/layers.hpp"

namespace htr {

struct ConvBlock {
    std::size_t filters = 0;
    std::size_t kernel = 0; // square kernel extent

    friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct InputShape {
    std::size_t channels = 1;
    std::size_t height = 32;
    std::size_t width = 32;

    Shape shape() const { return Shape{channels, height, width}; }
    friend bool operator==(const InputShape&, const InputShape&) = default;
};

// Declarative architecture:
//   [conv -> relu -> maxpool 2x2] * blocks -> dropout -> flatten
//   -> [dense -> relu] * dense_units -> dense(classes) -> softmax
struct ModelConfig {
    InputShape input;
    std::vector<ConvBlock> conv_blocks;
    std::vector<std::size_t> dense_units;
    double dropout_p = 0.5;
    std::size_t classes = 47;

    // 1024@5x5, 512@3x3, 256@3x3, dense 256/128, 47 classes on 32x32x1.
    static ModelConfig full();
    // 8@5x5, 16@3x3, 32@3x3, dense 64. Trains in minutes on one core.
    static ModelConfig desk(std::size_t classes = 47);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Output shape of every conv block (after pooling) and the flatten width.
struct ShapeTrace {
    std::vector<Shape> block_outputs;
    std::size_t flatten_width = 0;
};

// Throws ConfigError naming the first layer whose shape algebra fails.
ShapeTrace trace_shapes(const ModelConfig& config);

template <typename T>
struct Parameters {
    std::vector<ConvParams<T>> conv;
    std::vector<DenseParams<T>> dense; // hidden layers followed by the output layer

    std::vector<BasicTensor<T>*> blocks();
    std::vector<const BasicTensor<T>*> blocks() const;
    // "conv0.kernels", "conv0.bias", ..., "dense2.weight", "dense2.bias"
    std::vector<std::string> block_names() const;

    Parameters zeros_like() const;
    void accumulate(const Parameters& other);
    std::size_t count() const;

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        for (const auto& c : conv) {
            out.conv.push_back(c.template cast<U>());
        }
        for (const auto& d : dense) {
            out.dense.push_back(d.template cast<U>());
        }
        return out;
    }

    friend bool operator==(const Parameters&, const Parameters&) = default;
};

template <typename T>
class Model {
public:
    // He-normal weights (std sqrt(2 / fan_in)), zero biases. The output layer
    // uses a tenth of that std so initial predictions are near uniform.
    static Model build(const ModelConfig& config, std::uint64_t seed);
    // Wraps existing parameters after checking they fit the config.
    static Model from_parameters(const ModelConfig& config, Parameters<T> params);

    const ModelConfig& config() const noexcept { return config_; }
    const ShapeTrace& shapes() const noexcept { return trace_; }
    std::size_t class_count() const noexcept { return config_.classes; }
    std::size_t flatten_width() const noexcept { return trace_.flatten_width; }

    Parameters<T>& params() noexcept { return params_; }
    const Parameters<T>& params() const noexcept { return params_; }

    // batch: (B, C, H, W). Returns (B, classes) probabilities and keeps the
    // activations needed by backward(). Dropout masks derive from seed and the
    // row index.
    BasicTensor<T> forward(const BasicTensor<T>& batch, bool training, std::uint64_t seed = 0);

    // Gradients of mean categorical cross-entropy over the cached batch.
    // one_hot: (B, classes), every row exactly one-hot.
    Parameters<T> backward(const BasicTensor<T>& one_hot) const;

    bool has_cache() const noexcept { return !cache_.empty(); }
    void clear_cache() { cache_.clear(); }

    template <typename U>
    Model<U> cast() const {
        return Model<U>::from_parameters(config_, params_.template cast<U>());
    }

private:
    struct BlockCache {
        BasicTensor<T> input;
        BasicTensor<T> conv_out;
        PoolResult<T> pool;
    };
    struct SampleCache {
        std::vector<BlockCache> blocks;
        BasicTensor<T> dropout_mask;
        std::vector<BasicTensor<T>> dense_inputs;
        std::vector<BasicTensor<T>> dense_pre;
        BasicTensor<T> probs;
    };

    Model(ModelConfig config, ShapeTrace trace, Parameters<T> params)
        : config_(std::move(config)), trace_(std::move(trace)), params_(std::move(params)) {}

    SampleCache forward_sample(BasicTensor<T> x, bool training, std::uint64_t seed) const;
    void backward_sample(const SampleCache& cache, std::size_t target, T scale, Parameters<T>& grads) const;

    ModelConfig config_;
    ShapeTrace trace_;
    Parameters<T> params_;
    std::vector<SampleCache> cache_;
};

// Rows of a (B, C, H, W) or (B, n) tensor.
template <typename T>
BasicTensor<T> batch_row(const BasicTensor<T>& batch, std::size_t index);

// Validates one-hot rows and returns the target class of each.
template <typename T>
std::vector<std::size_t> one_hot_targets(const BasicTensor<T>& one_hot);

template <typename T>
BasicTensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes);

} // namespace htr
