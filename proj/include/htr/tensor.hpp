#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "htr/error.hpp"

namespace htr {

// Ordered list of extents. Every extent is >= 1; a rank-0 shape describes a
// scalar with one element.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    std::size_t elements() const noexcept { return elements_; }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    std::string to_string() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
    std::size_t elements_ = 1;
};

// Dense row-major array (last index fastest). Images are (C, H, W), batches
// (B, C, H, W).
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() : data_(1, T{}) {}
    explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(shape_.elements(), T{}) {}
    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_.elements()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.to_string());
        }
    }

    static BasicTensor full(Shape shape, T value) {
        BasicTensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <typename... I>
    T& at(I... idx) { return data_[offset({static_cast<std::size_t>(idx)...})]; }
    template <typename... I>
    const T& at(I... idx) const { return data_[offset({static_cast<std::size_t>(idx)...})]; }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.rank()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) + " for shape " + shape_.to_string());
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) {
                throw ShapeError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis) +
                                 " of shape " + shape_.to_string());
            }
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
BasicTensor<T> zeros(const Shape& shape) {
    return BasicTensor<T>(shape);
}

template <typename T, typename Op>
BasicTensor<T> elementwise(Op op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("elementwise shape mismatch: " + a.shape().to_string() + " vs " + b.shape().to_string());
    }
    BasicTensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        c[i] = op(a[i], b[i]);
    }
    return c;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return elementwise([](T x, T y) { return x + y; }, a, b);
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return elementwise([](T x, T y) { return x * y; }, a, b);
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& t, const Shape& shape) {
    if (t.size() != shape.elements()) {
        throw ShapeError("cannot reshape " + t.shape().to_string() + " to " + shape.to_string());
    }
    return BasicTensor<T>(shape, t.values());
}

namespace kernels {

// out(m x n) += a(m x k) * b(k x n), all row-major.
template <typename T>
void gemm_accumulate(std::span<const T> a, std::span<const T> b, std::span<T> out, std::size_t m, std::size_t k,
                     std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* row = out.data() + i * n;
        const T* arow = a.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const T s = arow[t];
            if (s == T{}) {
                continue;
            }
            const T* brow = b.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] += s * brow[j];
            }
        }
    }
}

// out(m x n) += a(m x k) * b(n x k)^T
template <typename T>
void gemm_nt_accumulate(std::span<const T> a, std::span<const T> b, std::span<T> out, std::size_t m, std::size_t k,
                        std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b.data() + j * k;
            T acc{};
            for (std::size_t t = 0; t < k; ++t) {
                acc += arow[t] * brow[t];
            }
            out[i * n + j] += acc;
        }
    }
}

// out(k x n) += a(m x k)^T * b(m x n)
template <typename T>
void gemm_tn_accumulate(std::span<const T> a, std::span<const T> b, std::span<T> out, std::size_t m, std::size_t k,
                        std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        const T* brow = b.data() + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const T s = arow[t];
            if (s == T{}) {
                continue;
            }
            T* orow = out.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += s * brow[j];
            }
        }
    }
}

} // namespace kernels

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + a.shape().to_string() + " and " +
                         b.shape().to_string());
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul inner dimension mismatch: " + a.shape().to_string() + " x " + b.shape().to_string());
    }
    BasicTensor<T> c(Shape{m, n});
    kernels::gemm_accumulate<T>(a.data(), b.data(), c.data(), m, k, n);
    return c;
}

} // namespace htr
