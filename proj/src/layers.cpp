#include "htr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace htr {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.rank() != rank) {
        throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " + s.to_string());
    }
}

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": expected " + a.to_string() + ", got " + b.to_string());
    }
}

struct ConvGeometry {
    std::size_t channels, height, width, kh, kw, out_h, out_w;
    std::size_t patch() const { return channels * kh * kw; }
    std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const ConvParams<T>& k) {
    require_rank(x.shape(), 3, "conv2d input");
    require_rank(k.kernels.shape(), 4, "conv2d kernels");
    if (k.bias.shape() != Shape{k.out_channels()}) {
        throw ShapeError("conv2d bias " + k.bias.shape().to_string() + " does not match " +
                         std::to_string(k.out_channels()) + " output channels");
    }
    if (x.dim(0) != k.in_channels()) {
        throw ShapeError("conv2d input has " + std::to_string(x.dim(0)) + " channels, kernels expect " +
                         std::to_string(k.in_channels()));
    }
    if (k.kernel_height() > x.dim(1) || k.kernel_width() > x.dim(2)) {
        throw ShapeError("conv2d kernel " + k.kernels.shape().to_string() + " larger than input " +
                         x.shape().to_string());
    }
    return {x.dim(0),          x.dim(1),
            x.dim(2),          k.kernel_height(),
            k.kernel_width(),  x.dim(1) - k.kernel_height() + 1,
            x.dim(2) - k.kernel_width() + 1};
}

// Unrolls receptive fields into a (C*kH*kW) x (outH*outW) matrix.
template <typename T>
std::vector<T> im2col(std::span<const T> x, const ConvGeometry& g) {
    std::vector<T> cols(g.patch() * g.positions());
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t m = 0; m < g.kh; ++m) {
            for (std::size_t n = 0; n < g.kw; ++n, ++row) {
                T* dst = cols.data() + row * g.positions();
                for (std::size_t i = 0; i < g.out_h; ++i) {
                    const T* src = x.data() + (c * g.height + i + m) * g.width + n;
                    std::copy(src, src + g.out_w, dst + i * g.out_w);
                }
            }
        }
    }
    return cols;
}

template <typename T>
void col2im_accumulate(std::span<const T> cols, const ConvGeometry& g, std::span<T> x) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t m = 0; m < g.kh; ++m) {
            for (std::size_t n = 0; n < g.kw; ++n, ++row) {
                const T* src = cols.data() + row * g.positions();
                for (std::size_t i = 0; i < g.out_h; ++i) {
                    T* dst = x.data() + (c * g.height + i + m) * g.width + n;
                    for (std::size_t j = 0; j < g.out_w; ++j) {
                        dst[j] += src[i * g.out_w + j];
                    }
                }
            }
        }
    }
}

} // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const ConvParams<T>& k) {
    const ConvGeometry g = conv_geometry(x, k);
    const std::size_t out_ch = k.out_channels();
    BasicTensor<T> y(Shape{out_ch, g.out_h, g.out_w});
    auto out = y.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        std::fill_n(out.begin() + o * g.positions(), g.positions(), k.bias[o]);
    }
    const std::vector<T> cols = im2col(x.data(), g);
    kernels::gemm_accumulate<T>(k.kernels.data(), cols, out, out_ch, g.patch(), g.positions());
    return y;
}

template <typename T>
ConvGrad<T> conv2d_backward(const BasicTensor<T>& x, const ConvParams<T>& k, const BasicTensor<T>& upstream) {
    const ConvGeometry g = conv_geometry(x, k);
    const std::size_t out_ch = k.out_channels();
    require_same(Shape{out_ch, g.out_h, g.out_w}, upstream.shape(), "conv2d upstream gradient");

    ConvGrad<T> grad{BasicTensor<T>(x.shape()), {BasicTensor<T>(k.kernels.shape()), BasicTensor<T>(k.bias.shape())}};
    const auto up = upstream.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        T acc{};
        for (std::size_t p = 0; p < g.positions(); ++p) {
            acc += up[o * g.positions() + p];
        }
        grad.param_grads.bias[o] = acc;
    }

    const std::vector<T> cols = im2col(x.data(), g);
    kernels::gemm_nt_accumulate<T>(up, cols, grad.param_grads.kernels.data(), out_ch, g.positions(), g.patch());

    std::vector<T> dcols(cols.size(), T{});
    kernels::gemm_tn_accumulate<T>(k.kernels.data(), up, dcols, out_ch, g.patch(), g.positions());
    col2im_accumulate<T>(dcols, g, grad.input_grad.data());
    return grad;
}

template <typename T>
PoolResult<T> pool2d_forward(const BasicTensor<T>& x, PoolMode mode) {
    require_rank(x.shape(), 3, "pool2d input");
    const std::size_t channels = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) {
        throw ShapeError("pool2d input " + x.shape().to_string() + " is smaller than the 2x2 window");
    }
    PoolResult<T> r{BasicTensor<T>(Shape{channels, oh, ow}), mode, x.shape(), {}};
    if (mode == PoolMode::max) {
        r.argmax.resize(r.output.size());
    }
    std::size_t out_idx = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j, ++out_idx) {
                const std::size_t base = (c * h + 2 * i) * w + 2 * j;
                const std::size_t cells[4] = {base, base + 1, base + w, base + w + 1};
                if (mode == PoolMode::max) {
                    std::size_t best = cells[0];
                    for (std::size_t q = 1; q < 4; ++q) {
                        if (x[cells[q]] > x[best]) {
                            best = cells[q];
                        }
                    }
                    r.output[out_idx] = x[best];
                    r.argmax[out_idx] = best;
                } else {
                    r.output[out_idx] = (x[cells[0]] + x[cells[1]] + x[cells[2]] + x[cells[3]]) / T(4);
                }
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> pool2d_backward(const PoolResult<T>& pooled, const BasicTensor<T>& upstream) {
    require_same(pooled.output.shape(), upstream.shape(), "pool2d upstream gradient");
    const Shape& in = pooled.input_shape;
    if (in.rank() != 3 || in[0] != upstream.dim(0) || in[1] / 2 != upstream.dim(1) || in[2] / 2 != upstream.dim(2)) {
        throw ShapeError("pool2d index information " + in.to_string() + " does not match upstream " +
                         upstream.shape().to_string());
    }
    BasicTensor<T> dx(in);
    if (pooled.mode == PoolMode::max) {
        if (pooled.argmax.size() != upstream.size()) {
            throw ShapeError("pool2d argmax table is stale");
        }
        for (std::size_t o = 0; o < upstream.size(); ++o) {
            dx[pooled.argmax[o]] += upstream[o];
        }
        return dx;
    }
    const std::size_t channels = in[0], h = in[1], w = in[2];
    const std::size_t oh = h / 2, ow = w / 2;
    std::size_t out_idx = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j, ++out_idx) {
                const std::size_t base = (c * h + 2 * i) * w + 2 * j;
                const T share = upstream[out_idx] / T(4);
                dx[base] += share;
                dx[base + 1] += share;
                dx[base + w] += share;
                dx[base + w + 1] += share;
            }
        }
    }
    return dx;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > T{} ? x[i] : T{};
    }
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& upstream) {
    require_same(x.shape(), upstream.shape(), "relu upstream gradient");
    BasicTensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        dx[i] = x[i] > T{} ? upstream[i] : T{};
    }
    return dx;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, const DropoutSpec& spec, bool training) {
    if (!(spec.p >= 0.0 && spec.p < 1.0)) {
        throw InputError("dropout probability must be in [0, 1), got " + std::to_string(spec.p));
    }
    if (!training || spec.p == 0.0) {
        return {x, BasicTensor<T>::full(x.shape(), T(1))};
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.p));
    DropoutResult<T> r{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool keep = uniform(rng) >= spec.p;
        r.mask[i] = keep ? keep_scale : T{};
        r.output[i] = x[i] * r.mask[i];
    }
    return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& mask, const BasicTensor<T>& upstream) {
    require_same(mask.shape(), upstream.shape(), "dropout upstream gradient");
    return multiply(mask, upstream);
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const DenseParams<T>& p) {
    require_rank(x.shape(), 1, "dense input");
    require_rank(p.weight.shape(), 2, "dense weight");
    if (p.bias.shape() != Shape{p.out_units()}) {
        throw ShapeError("dense bias " + p.bias.shape().to_string() + " does not match weight " +
                         p.weight.shape().to_string());
    }
    if (x.size() != p.in_units()) {
        throw ShapeError("dense input length " + std::to_string(x.size()) + " does not match weight " +
                         p.weight.shape().to_string());
    }
    BasicTensor<T> y = p.bias;
    kernels::gemm_nt_accumulate<T>(x.data(), p.weight.data(), y.data(), 1, p.in_units(), p.out_units());
    return y;
}

template <typename T>
DenseGrad<T> dense_backward(const BasicTensor<T>& x, const DenseParams<T>& p, const BasicTensor<T>& upstream) {
    require_rank(x.shape(), 1, "dense input");
    if (x.size() != p.in_units()) {
        throw ShapeError("dense input length " + std::to_string(x.size()) + " does not match weight " +
                         p.weight.shape().to_string());
    }
    require_same(Shape{p.out_units()}, upstream.shape(), "dense upstream gradient");
    DenseGrad<T> g{BasicTensor<T>(x.shape()), {BasicTensor<T>(p.weight.shape()), upstream}};
    kernels::gemm_accumulate<T>(upstream.data(), p.weight.data(), g.input_grad.data(), 1, p.out_units(),
                                p.in_units());
    // Outer product upstream (out x 1) * x (1 x in).
    kernels::gemm_accumulate<T>(upstream.data(), x.data(), g.param_grads.weight.data(), p.out_units(), 1,
                                p.in_units());
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& z) {
    require_rank(z.shape(), 1, "softmax input");
    const T peak = *std::max_element(z.data().begin(), z.data().end());
    BasicTensor<T> out(z.shape());
    T total{};
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - peak);
        total += out[i];
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] /= total;
    }
    return out;
}

#define HTR_INSTANTIATE_LAYERS(T)                                                                            \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&);                     \
    template ConvGrad<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&); \
    template PoolResult<T> pool2d_forward(const BasicTensor<T>&, PoolMode);                                  \
    template BasicTensor<T> pool2d_backward(const PoolResult<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                     \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template DropoutResult<T> dropout_forward(const BasicTensor<T>&, const DropoutSpec&, bool);              \
    template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> dense_forward(const BasicTensor<T>&, const DenseParams<T>&);                     \
    template DenseGrad<T> dense_backward(const BasicTensor<T>&, const DenseParams<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> softmax(const BasicTensor<T>&);

HTR_INSTANTIATE_LAYERS(float)
HTR_INSTANTIATE_LAYERS(double)

#undef HTR_INSTANTIATE_LAYERS

} // namespace htr
