#include "sonarp/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace sonarp {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::size_t num_elements(const Shape& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be >= 1, got " + to_string(shape));
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(num_elements(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != num_elements(shape_)) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape_));
    }
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw DimensionError("index rank " + std::to_string(index.size()) + " vs tensor shape " + to_string(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) throw DimensionError("index out of range for shape " + to_string(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
    return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    return data_[offset(index)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
    check_extents(shape);
    if (num_elements(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = std::move(data_);
    shape_.clear();
    return out;
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    MapC<T> A(a, m, k);
    MapC<T> B(b, k, n);
    Map<T> C(c, m, n);
    if (accumulate) C.noalias() += A * B;
    else C.noalias() = A * B;
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    MapC<T> A(a, m, k);
    MapC<T> B(b, n, k);
    Map<T> C(c, m, n);
    if (accumulate) C.noalias() += A * B.transpose();
    else C.noalias() = A * B.transpose();
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    MapC<T> A(a, k, m);
    MapC<T> B(b, k, n);
    Map<T> C(c, m, n);
    if (accumulate) C.noalias() += A.transpose() * B;
    else C.noalias() = A.transpose() * B;
}

template void gemm_nn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_nt<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_tn<float>(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
template void gemm_tn<double>(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);

}  // namespace detail

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matvec_affine(const Tensor<T>& weights, const Tensor<T>& x, const Tensor<T>& bias) {
    if (weights.rank() != 2 || x.rank() != 1 || bias.rank() != 1 || weights.dim(1) != x.dim(0) ||
        weights.dim(0) != bias.dim(0)) {
        throw DimensionError("matvec_affine: weights " + to_string(weights.shape()) + ", x " + to_string(x.shape()) +
                             ", bias " + to_string(bias.shape()));
    }
    Tensor<T> out = bias;
    detail::gemm_nn(weights.raw(), x.raw(), out.raw(), weights.dim(0), weights.dim(1), 1, true);
    return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    Tensor<T> out({a.dim(0), b.dim(1)});
    detail::gemm_nn(a.raw(), b.raw(), out.raw(), a.dim(0), a.dim(1), b.dim(1), false);
    return out;
}

namespace {

template <typename T>
T apply(BinaryOp op, T x, T y) {
    switch (op) {
        case BinaryOp::Add: return x + y;
        case BinaryOp::Sub: return x - y;
        case BinaryOp::Mul: return x * y;
        case BinaryOp::Div: return x / y;
        case BinaryOp::Max: return std::max(x, y);
    }
    return x;
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("elementwise: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, a[i], b[i]);
    return out;
}

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, T scalar) {
    Tensor<T> out = a;
    for (auto& v : out.data()) v = apply(op, v, scalar);
    return out;
}

template <typename T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& a) {
    Tensor<T> out = a;
    for (auto& v : out.data()) {
        if (op == UnaryOp::Exp) {
            v = std::exp(v);
        } else {
            if (!(v > T{0}) && !std::isnan(v)) throw DomainError("log of non-positive value " + std::to_string(v));
            v = std::log(v);
        }
    }
    return out;
}

template <typename T>
Tensor<T> reduce(Reduction op, const Tensor<T>& a) {
    if (a.empty()) throw DimensionError("reduce over empty tensor");
    return reduce(op, a.reshaped({a.size()}), 0);
}

template <typename T>
Tensor<T> reduce(Reduction op, const Tensor<T>& a, std::size_t axis) {
    if (a.empty()) throw DimensionError("reduce over empty tensor");
    if (axis >= a.rank()) {
        throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for " + to_string(a.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const std::size_t len = a.dim(axis);

    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape = {1};
    Tensor<T> out(out_shape);

    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const T* p = a.raw() + o * len * inner + in;
            T acc{};
            std::size_t best = 0;
            switch (op) {
                case Reduction::Sum:
                case Reduction::Mean:
                    for (std::size_t i = 0; i < len; ++i) acc += p[i * inner];
                    if (op == Reduction::Mean) acc /= static_cast<T>(len);
                    break;
                case Reduction::Max:
                case Reduction::Argmax:
                    acc = p[0];
                    for (std::size_t i = 1; i < len; ++i) {
                        if (p[i * inner] > acc) {
                            acc = p[i * inner];
                            best = i;
                        }
                    }
                    if (op == Reduction::Argmax) acc = static_cast<T>(best);
                    break;
            }
            out[o * inner + in] = acc;
        }
    }
    return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    T m{0};
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
    return m;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
    if (a.rank() == 0 || begin + count > a.dim(0) || count == 0) {
        throw DimensionError("slice_rows out of range for " + to_string(a.shape()));
    }
    const std::size_t row = a.size() / a.dim(0);
    Shape s = a.shape();
    s[0] = count;
    std::vector<T> data(a.raw() + begin * row, a.raw() + (begin + count) * row);
    return Tensor<T>(std::move(s), std::move(data));
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>* const> items) {
    if (items.empty()) throw DimensionError("stack of zero tensors");
    const Shape& s0 = items.front()->shape();
    Shape s;
    s.push_back(items.size());
    s.insert(s.end(), s0.begin(), s0.end());
    std::vector<T> data;
    data.reserve(num_elements(s));
    for (const auto* t : items) {
        if (t->shape() != s0) throw DimensionError("stack: " + to_string(t->shape()) + " vs " + to_string(s0));
        data.insert(data.end(), t->data().begin(), t->data().end());
    }
    return Tensor<T>(std::move(s), std::move(data));
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
    std::vector<const Tensor<T>*> ptrs;
    ptrs.reserve(items.size());
    for (const auto& t : items) ptrs.push_back(&t);
    return stack<T>(std::span<const Tensor<T>* const>(ptrs));
}

#define SONARP_INSTANTIATE(T)                                                                     \
    template Tensor<T> matvec_affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, T);                                \
    template Tensor<T> elementwise(UnaryOp, const Tensor<T>&);                                    \
    template Tensor<T> reduce(Reduction, const Tensor<T>&);                                       \
    template Tensor<T> reduce(Reduction, const Tensor<T>&, std::size_t);                          \
    template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                    \
    template Tensor<T> stack(std::span<const Tensor<T>>);                                         \
    template Tensor<T> stack(std::span<const Tensor<T>* const>);

SONARP_INSTANTIATE(float)
SONARP_INSTANTIATE(double)

#undef SONARP_INSTANTIATE

}  // namespace sonarp
