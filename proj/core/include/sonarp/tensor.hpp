#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "sonarp/errors.hpp"

namespace sonarp {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t num_elements(const Shape& shape);

/// Dense row-major array. Images are stored channels-first (C, H, W) and
/// batches prepend N, giving (N, C, H, W).
///
/// A default-constructed tensor is empty (rank 0, no data); every other
/// tensor has extents >= 1 and exactly product(shape) elements.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0});
    Tensor(Shape shape, std::vector<T> data);

    /// 1-D tensor from a literal list.
    static Tensor vector(std::initializer_list<T> values);
    /// 2-D tensor from nested literal rows.
    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Bounds-checked multi-index access.
    T& at(std::initializer_list<std::size_t> index);
    const T& at(std::initializer_list<std::size_t> index) const;

    /// Same data, new extents; throws DimensionError when sizes differ.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(T value);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<T> data_;
};

enum class BinaryOp { Add, Sub, Mul, Div, Max };
enum class UnaryOp { Exp, Log };
enum class Reduction { Sum, Mean, Max, Argmax };

/// z[i] = sum_j w[i, j] * x[j] + b[i]
template <typename T>
Tensor<T> matvec_affine(const Tensor<T>& weights, const Tensor<T>& x, const Tensor<T>& bias);

/// [M, K] x [K, N] -> [M, N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, T scalar);
/// Log of a non-positive element throws DomainError.
template <typename T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& a);

/// Reduction over all elements; result has shape {1}. Argmax returns the flat
/// index of the first maximum.
template <typename T>
Tensor<T> reduce(Reduction op, const Tensor<T>& a);
/// Reduction along one axis, which is removed from the shape (a rank-1 input
/// yields shape {1}). Argmax ties resolve to the lowest index.
template <typename T>
Tensor<T> reduce(Reduction op, const Tensor<T>& a, std::size_t axis);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Add, a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Sub, a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return elementwise(BinaryOp::Mul, a, s); }

/// Largest |a - b| over matching elements.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// Slice of the leading axis: rows [begin, begin + count).
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);

/// Stack equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items);
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>* const> items);

namespace detail {

// Row-major GEMM kernels. C = A * B (+ C when accumulate).
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// C = A * B^T, with B stored [n, k].
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
// C = A^T * B, with A stored [k, m].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace sonarp
