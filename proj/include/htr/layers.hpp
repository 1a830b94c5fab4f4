#pragma once

#include <cstdint>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

// Learned filters h[m,n] for one convolution layer.
template <typename T>
struct ConvParams {
    BasicTensor<T> kernels; // (out_channels, in_channels, kH, kW)
    BasicTensor<T> bias;    // (out_channels)

    std::size_t out_channels() const { return kernels.dim(0); }
    std::size_t in_channels() const { return kernels.dim(1); }
    std::size_t kernel_height() const { return kernels.dim(2); }
    std::size_t kernel_width() const { return kernels.dim(3); }

    template <typename U>
    ConvParams<U> cast() const { return {kernels.template cast<U>(), bias.template cast<U>()}; }

    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

template <typename T>
struct DenseParams {
    BasicTensor<T> weight; // (out_units, in_units)
    BasicTensor<T> bias;   // (out_units)

    std::size_t out_units() const { return weight.dim(0); }
    std::size_t in_units() const { return weight.dim(1); }

    template <typename U>
    DenseParams<U> cast() const { return {weight.template cast<U>(), bias.template cast<U>()}; }

    friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

struct DropoutSpec {
    double p = 0.5; // drop probability, 0 <= p < 1
    std::uint64_t seed = 0;
};

template <typename Params, typename T>
struct LayerGrad {
    BasicTensor<T> input_grad;
    Params param_grads;
};

template <typename T>
using ConvGrad = LayerGrad<ConvParams<T>, T>;
template <typename T>
using DenseGrad = LayerGrad<DenseParams<T>, T>;

// Valid padding, stride 1, cross-correlation:
//   y[o,i,j] = bias[o] + sum_c sum_m sum_n k[o,c,m,n] * x[c,i+m,j+n]
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& k);

// Exact gradients of sum(upstream * conv2d_forward(x, k)).
template <typename T>
ConvGrad<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& k, const BasicTensor<T>& upstream);

enum class PoolMode { max, average };

// 2x2 window, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    PoolMode mode = PoolMode::max;
    Shape input_shape;
    // Flat input index of each output's maximum (max mode only). Ties go to the
    // first cell in row-major window order.
    std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> pool2d_forward(const BasicTensor<T>& x, PoolMode mode);

template <typename T>
BasicTensor<T> pool2d_backward(const PoolResult<T>& pooled, const BasicTensor<T>& upstream);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

// Passes upstream where x > 0; the subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& upstream);

// Inverted dropout. mask[i] is 0 for dropped elements and 1/(1-p) for kept
// ones, so backward is a plain elementwise product with the mask.
template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    BasicTensor<T> mask;
};

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, const DropoutSpec& spec, bool training);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& mask, const BasicTensor<T>& upstream);

// y = W x + b for x of shape (in,).
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const DenseParams<T>& p);

template <typename T>
DenseGrad<T> dense_backward(const BasicTensor<T>& x, const DenseParams<T>& p, const BasicTensor<T>& upstream);

// Max-shifted softmax over a rank-1 tensor.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& z);

} // namespace htr
