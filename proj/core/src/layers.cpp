#include "sonarp/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sonarp/parallel.hpp"

namespace sonarp {

// LayerSpec ----------------------------------------------------------------

namespace {

const std::map<LayerKind, std::string>& kind_names() {
    static const std::map<LayerKind, std::string> names = {
        {LayerKind::Conv2D, "conv2d"},
        {LayerKind::MaxPool2x2, "maxpool2x2"},
        {LayerKind::GlobalAvgPool, "global_avg_pool"},
        {LayerKind::FullyConnected, "fully_connected"},
        {LayerKind::BatchNorm, "batch_norm"},
        {LayerKind::Dropout, "dropout"},
        {LayerKind::Activation, "activation"},
        {LayerKind::Flatten, "flatten"},
        {LayerKind::ChannelConcat, "channel_concat"},
    };
    return names;
}

const std::map<ActivationKind, std::string>& activation_names() {
    static const std::map<ActivationKind, std::string> names = {
        {ActivationKind::Linear, "linear"},   {ActivationKind::Relu, "relu"},
        {ActivationKind::Sigmoid, "sigmoid"}, {ActivationKind::Tanh, "tanh"},
        {ActivationKind::Softplus, "softplus"}, {ActivationKind::Elu, "elu"},
        {ActivationKind::Softmax, "softmax"},
    };
    return names;
}

}  // namespace

std::string to_string(LayerKind kind) { return kind_names().at(kind); }
std::string to_string(ActivationKind kind) { return activation_names().at(kind); }

LayerKind layer_kind_from_string(const std::string& name) {
    for (const auto& [k, n] : kind_names())
        if (n == name) return k;
    throw ConfigError("unknown layer kind '" + name + "'");
}

ActivationKind activation_from_string(const std::string& name) {
    for (const auto& [k, n] : activation_names())
        if (n == name) return k;
    throw ConfigError("unknown activation '" + name + "'");
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, std::size_t padding, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.filters = filters;
    s.kernel_h = s.kernel_w = kernel;
    s.padding = padding;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::conv_same(std::size_t filters, std::size_t kernel) {
    return conv(filters, kernel, (kernel - 1) / 2, 1);
}

LayerSpec LayerSpec::conv_valid(std::size_t filters, std::size_t kernel_h, std::size_t kernel_w) {
    LayerSpec s = conv(filters, kernel_h, 0, 1);
    s.kernel_w = kernel_w;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::FullyConnected;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::max_pool() {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2x2;
    return s;
}

LayerSpec LayerSpec::global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    return s;
}

LayerSpec LayerSpec::batch_norm(double epsilon, double momentum) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.epsilon = epsilon;
    s.momentum = momentum;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::act(ActivationKind kind) {
    LayerSpec s;
    s.kind = LayerKind::Activation;
    s.activation = kind;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::concat() {
    LayerSpec s;
    s.kind = LayerKind::ChannelConcat;
    return s;
}

void LayerSpec::validate() const {
    switch (kind) {
        case LayerKind::Conv2D:
            if (filters == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0)
                throw ConfigError("conv2d needs filters, kernel and stride >= 1");
            // Padded kernels must be odd so the padding is symmetric.
            if (padding > 0 && (kernel_h % 2 == 0 || kernel_w % 2 == 0))
                throw ConfigError("conv2d kernel extents must be odd, got " + std::to_string(kernel_h) + "x" +
                                  std::to_string(kernel_w));
            break;
        case LayerKind::FullyConnected:
            if (units == 0) throw ConfigError("fully_connected needs units >= 1");
            break;
        case LayerKind::Dropout:
            if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must satisfy 0 <= p < 1");
            break;
        case LayerKind::BatchNorm:
            if (!(epsilon > 0.0) || !(momentum >= 0.0 && momentum < 1.0))
                throw ConfigError("batch_norm needs epsilon > 0 and 0 <= momentum < 1");
            break;
        default:
            break;
    }
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t padding, std::size_t stride) {
    if (stride == 0) throw ConfigError("stride must be >= 1");
    const long span = static_cast<long>(input) + 2 * static_cast<long>(padding) - static_cast<long>(kernel);
    if (span < 0) {
        throw ConfigError("kernel " + std::to_string(kernel) + " larger than padded input " +
                          std::to_string(input + 2 * padding));
    }
    if (span % static_cast<long>(stride) != 0) {
        throw ConfigError("(W - N + 2P) = " + std::to_string(span) + " not divisible by stride " +
                          std::to_string(stride));
    }
    return static_cast<std::size_t>(span) / stride + 1;
}

// Parameter / Layer base -------------------------------------------------

template <typename T>
ParamPtr<T> make_param(std::string name, Shape shape, T fill) {
    auto p = std::make_shared<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape, fill);
    p->grad = Tensor<T>(std::move(shape), T{0});
    return p;
}

template <typename T>
void Layer<T>::share_from(const Layer& other) {
    if (!(other.spec() == spec_)) throw ConfigError("cannot share parameters between different layer specs");
    auto params = other.parameters();
    auto bufs = other.buffers();
    auto mine = parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.shape() != mine.at(i)->value.shape()) {
            throw DimensionError("shared parameter shape mismatch for " + params[i]->name);
        }
    }
    set_state(std::move(params), std::move(bufs));
}

template <typename T>
void Layer<T>::set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers) {
    if (!params.empty() || !buffers.empty()) throw ConfigError("layer has no parameters to share");
}

namespace {

void require_inputs(std::span<const Shape> inputs, std::size_t n, const char* what) {
    if (inputs.size() != n) {
        throw DimensionError(std::string(what) + " expects " + std::to_string(n) + " input(s), got " +
                             std::to_string(inputs.size()));
    }
}

template <typename T>
const Tensor<T>& single_input(std::span<const Tensor<T>* const> inputs, const char* what) {
    if (inputs.size() != 1 || inputs[0] == nullptr || inputs[0]->empty()) {
        throw DimensionError(std::string(what) + " expects exactly one non-empty input");
    }
    return *inputs[0];
}

void require_cache(bool ok, const char* what) {
    if (!ok) throw MissingCacheError(std::string(what) + ": backward() without forward()");
}

}  // namespace

// Conv2D -------------------------------------------------------------------

template <typename T>
Conv2D<T>::Conv2D(const LayerSpec& spec, const Shape& input, const std::string& name) : Layer<T>(spec) {
    spec.validate();
    if (input.size() != 3) throw DimensionError("conv2d expects (C, H, W) input, got " + to_string(input));
    channels_ = input[0];
    weights_ = make_param<T>(name + ".weights", {spec.filters, channels_, spec.kernel_h, spec.kernel_w});
    bias_ = make_param<T>(name + ".bias", {spec.filters});
}

template <typename T>
void Conv2D<T>::set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>>) {
    weights_ = params.at(0);
    bias_ = params.at(1);
}

template <typename T>
Shape Conv2D<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "conv2d");
    const Shape& in = inputs[0];
    if (in.size() != 3 || in[0] != channels_) {
        throw DimensionError("conv2d expects " + std::to_string(channels_) + " channels, got " + to_string(in));
    }
    const auto& s = this->spec_;
    return {s.filters, conv_output_size(in[1], s.kernel_h, s.padding, s.stride),
            conv_output_size(in[2], s.kernel_w, s.padding, s.stride)};
}

template <typename T>
void Conv2D<T>::im2col(const T* x, T* cols, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) const {
    const auto& s = this->spec_;
    const long pad = static_cast<long>(s.padding);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels_; ++c) {
        const T* xc = x + c * h * w;
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++row) {
                T* out = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * s.stride + ki) - pad;
                    T* orow = out + oy * ow;
                    if (iy < 0 || iy >= static_cast<long>(h)) {
                        std::fill(orow, orow + ow, T{0});
                        continue;
                    }
                    const T* xrow = xc + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * s.stride + kj) - pad;
                        orow[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? T{0} : xrow[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void Conv2D<T>::col2im(const T* cols, T* dx, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) const {
    const auto& s = this->spec_;
    const long pad = static_cast<long>(s.padding);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels_; ++c) {
        T* dxc = dx + c * h * w;
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++row) {
                const T* in = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * s.stride + ki) - pad;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    T* dxrow = dxc + static_cast<std::size_t>(iy) * w;
                    const T* irow = in + oy * ow;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * s.stride + kj) - pad;
                        if (ix >= 0 && ix < static_cast<long>(w)) dxrow[ix] += irow[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
Tensor<T> Conv2D<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "conv2d");
    if (x.rank() != 4) throw DimensionError("conv2d expects (N, C, H, W), got " + to_string(x.shape()));
    const Shape per_sample{x.dim(1), x.dim(2), x.dim(3)};
    const Shape os = output_shape(std::span<const Shape>(&per_sample, 1));
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), oh = os[1], ow = os[2];
    const auto& s = this->spec_;
    const std::size_t ckk = channels_ * s.kernel_h * s.kernel_w;
    const bool pointwise = s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.padding == 0;

    Tensor<T> out({n, s.filters, oh, ow});
    const T* wptr = weights_->value.raw();
    const T* bptr = bias_->value.raw();
    parallel_for(n, [&](std::size_t i) {
        const T* xi = x.raw() + i * channels_ * h * w;
        T* yi = out.raw() + i * s.filters * oh * ow;
        if (pointwise) {
            detail::gemm_nn(wptr, xi, yi, s.filters, ckk, oh * ow, false);
        } else {
            std::vector<T> cols(ckk * oh * ow);
            im2col(xi, cols.data(), h, w, oh, ow);
            detail::gemm_nn(wptr, cols.data(), yi, s.filters, ckk, oh * ow, false);
        }
        for (std::size_t f = 0; f < s.filters; ++f) {
            T* yf = yi + f * oh * ow;
            for (std::size_t p = 0; p < oh * ow; ++p) yf[p] += bptr[f];
        }
    });
    cached_input_ = x;
    return out;
}

template <typename T>
std::vector<Tensor<T>> Conv2D<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!cached_input_.empty(), "conv2d");
    const Tensor<T>& x = cached_input_;
    const auto& s = this->spec_;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (grad_out.rank() != 4 || grad_out.dim(0) != n || grad_out.dim(1) != s.filters) {
        throw DimensionError("conv2d backward: unexpected grad shape " + to_string(grad_out.shape()));
    }
    const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
    const std::size_t ckk = channels_ * s.kernel_h * s.kernel_w;
    const std::size_t wsize = s.filters * ckk;
    const bool pointwise = s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.padding == 0;

    Tensor<T> dx(x.shape(), T{0});
    std::vector<T> dw_parts(n * wsize);
    std::vector<T> db_parts(n * s.filters);
    const T* wptr = weights_->value.raw();

    parallel_for(n, [&](std::size_t i) {
        const T* xi = x.raw() + i * channels_ * h * w;
        const T* gi = grad_out.raw() + i * s.filters * oh * ow;
        T* dxi = dx.raw() + i * channels_ * h * w;
        T* dwi = dw_parts.data() + i * wsize;
        for (std::size_t f = 0; f < s.filters; ++f) {
            T acc{0};
            const T* gf = gi + f * oh * ow;
            for (std::size_t p = 0; p < oh * ow; ++p) acc += gf[p];
            db_parts[i * s.filters + f] = acc;
        }
        if (pointwise) {
            detail::gemm_nt(gi, xi, dwi, s.filters, oh * ow, ckk, false);
            detail::gemm_tn(wptr, gi, dxi, ckk, s.filters, oh * ow, false);
        } else {
            std::vector<T> cols(ckk * oh * ow);
            im2col(xi, cols.data(), h, w, oh, ow);
            detail::gemm_nt(gi, cols.data(), dwi, s.filters, oh * ow, ckk, false);
            detail::gemm_tn(wptr, gi, cols.data(), ckk, s.filters, oh * ow, false);
            col2im(cols.data(), dxi, h, w, oh, ow);
        }
    });

    T* dw = weights_->grad.raw();
    T* db = bias_->grad.raw();
    for (std::size_t i = 0; i < n; ++i) {
        const T* part = dw_parts.data() + i * wsize;
        for (std::size_t j = 0; j < wsize; ++j) dw[j] += part[j];
        for (std::size_t f = 0; f < s.filters; ++f) db[f] += db_parts[i * s.filters + f];
    }
    return {std::move(dx)};
}

// MaxPool2x2 -----------------------------------------------------------------

template <typename T>
Shape MaxPool2x2<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "maxpool2x2");
    const Shape& in = inputs[0];
    if (in.size() != 3) throw DimensionError("maxpool2x2 expects (C, H, W), got " + to_string(in));
    if (in[1] % 2 != 0 || in[2] % 2 != 0) {
        throw ConfigError("maxpool2x2 needs even extents, got " + to_string(in));
    }
    return {in[0], in[1] / 2, in[2] / 2};
}

template <typename T>
Tensor<T> MaxPool2x2<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "maxpool2x2");
    if (x.rank() != 4) throw DimensionError("maxpool2x2 expects (N, C, H, W), got " + to_string(x.shape()));
    const Shape per_sample{x.dim(1), x.dim(2), x.dim(3)};
    const Shape os = output_shape(std::span<const Shape>(&per_sample, 1));
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = os[1], ow = os[2];
    if (x.size() > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("maxpool2x2 input too large");

    Tensor<T> out({x.dim(0), os[0], oh, ow});
    argmax_.assign(out.size(), 0);
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = base + (2 * oy) * w + 2 * ox;
                T v = x[best];
                const std::size_t cand[3] = {base + (2 * oy) * w + 2 * ox + 1, base + (2 * oy + 1) * w + 2 * ox,
                                             base + (2 * oy + 1) * w + 2 * ox + 1};
                for (auto c : cand) {
                    if (x[c] > v) {
                        v = x[c];
                        best = c;
                    }
                }
                const std::size_t o = p * oh * ow + oy * ow + ox;
                out[o] = v;
                argmax_[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    input_shape_ = x.shape();
    return out;
}

template <typename T>
std::vector<Tensor<T>> MaxPool2x2<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!input_shape_.empty(), "maxpool2x2");
    if (grad_out.size() != argmax_.size()) throw DimensionError("maxpool2x2 backward: grad shape mismatch");
    Tensor<T> dx(input_shape_, T{0});
    for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
    return {std::move(dx)};
}

// GlobalAvgPool ----------------------------------------------------------------

template <typename T>
Shape GlobalAvgPool<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "global_avg_pool");
    if (inputs[0].size() != 3) throw DimensionError("global_avg_pool expects (C, H, W), got " + to_string(inputs[0]));
    return {inputs[0][0]};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "global_avg_pool");
    if (x.rank() != 4) throw DimensionError("global_avg_pool expects (N, C, H, W), got " + to_string(x.shape()));
    const std::size_t planes = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> out({x.dim(0), x.dim(1)});
    for (std::size_t p = 0; p < planes; ++p) {
        T acc{0};
        for (std::size_t i = 0; i < hw; ++i) acc += x[p * hw + i];
        out[p] = acc / static_cast<T>(hw);
    }
    input_shape_ = x.shape();
    return out;
}

template <typename T>
std::vector<Tensor<T>> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!input_shape_.empty(), "global_avg_pool");
    const std::size_t hw = input_shape_[2] * input_shape_[3];
    Tensor<T> dx(input_shape_);
    for (std::size_t p = 0; p < grad_out.size(); ++p) {
        const T g = grad_out[p] / static_cast<T>(hw);
        std::fill(dx.raw() + p * hw, dx.raw() + (p + 1) * hw, g);
    }
    return {std::move(dx)};
}

// FullyConnected ---------------------------------------------------------------

template <typename T>
FullyConnected<T>::FullyConnected(const LayerSpec& spec, const Shape& input, const std::string& name)
    : Layer<T>(spec) {
    spec.validate();
    if (input.size() != 1) throw DimensionError("fully_connected expects a flat input, got " + to_string(input));
    in_features_ = input[0];
    weights_ = make_param<T>(name + ".weights", {spec.units, in_features_});
    bias_ = make_param<T>(name + ".bias", {spec.units});
}

template <typename T>
void FullyConnected<T>::set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>>) {
    weights_ = params.at(0);
    bias_ = params.at(1);
}

template <typename T>
Shape FullyConnected<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "fully_connected");
    if (inputs[0] != Shape{in_features_}) {
        throw DimensionError("fully_connected expects (" + std::to_string(in_features_) + "), got " +
                             to_string(inputs[0]));
    }
    return {this->spec_.units};
}

template <typename T>
Tensor<T> FullyConnected<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "fully_connected");
    if (x.rank() != 2 || x.dim(1) != in_features_) {
        throw DimensionError("fully_connected expects (N, " + std::to_string(in_features_) + "), got " +
                             to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), units = this->spec_.units;
    Tensor<T> out({n, units});
    for (std::size_t i = 0; i < n; ++i)
        std::copy(bias_->value.raw(), bias_->value.raw() + units, out.raw() + i * units);
    detail::gemm_nt(x.raw(), weights_->value.raw(), out.raw(), n, in_features_, units, true);
    cached_input_ = x;
    return out;
}

template <typename T>
std::vector<Tensor<T>> FullyConnected<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!cached_input_.empty(), "fully_connected");
    const std::size_t n = cached_input_.dim(0), units = this->spec_.units;
    if (grad_out.shape() != Shape{n, units}) {
        throw DimensionError("fully_connected backward: unexpected grad shape " + to_string(grad_out.shape()));
    }
    detail::gemm_tn(grad_out.raw(), cached_input_.raw(), weights_->grad.raw(), units, n, in_features_, true);
    T* db = bias_->grad.raw();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t u = 0; u < units; ++u) db[u] += grad_out[i * units + u];
    Tensor<T> dx({n, in_features_});
    detail::gemm_nn(grad_out.raw(), weights_->value.raw(), dx.raw(), n, units, in_features_, false);
    return {std::move(dx)};
}

// BatchNorm ------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(const LayerSpec& spec, const Shape& input, const std::string& name) : Layer<T>(spec) {
    spec.validate();
    if (input.size() != 1 && input.size() != 3) {
        throw DimensionError("batch_norm expects (D) or (C, H, W), got " + to_string(input));
    }
    features_ = input[0];
    gamma_ = make_param<T>(name + ".gamma", {features_}, T{1});
    beta_ = make_param<T>(name + ".beta", {features_}, T{0});
    running_mean_ = make_param<T>(name + ".running_mean", {features_}, T{0});
    running_var_ = make_param<T>(name + ".running_var", {features_}, T{1});
}

template <typename T>
void BatchNorm<T>::set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers) {
    gamma_ = params.at(0);
    beta_ = params.at(1);
    running_mean_ = buffers.at(0);
    running_var_ = buffers.at(1);
}

template <typename T>
Shape BatchNorm<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "batch_norm");
    if ((inputs[0].size() != 1 && inputs[0].size() != 3) || inputs[0][0] != features_) {
        throw DimensionError("batch_norm expects " + std::to_string(features_) + " features, got " +
                             to_string(inputs[0]));
    }
    return inputs[0];
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "batch_norm");
    if ((x.rank() != 2 && x.rank() != 4) || x.dim(1) != features_) {
        throw DimensionError("batch_norm: unexpected input " + to_string(x.shape()));
    }
    const std::size_t n = x.dim(0);
    const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    const std::size_t count = n * inner;
    const T eps = static_cast<T>(this->spec_.epsilon);
    const T m = static_cast<T>(this->spec_.momentum);

    Tensor<T> y(x.shape());
    cached_xhat_ = Tensor<T>(x.shape());
    cached_inv_std_.assign(features_, T{0});
    cached_train_ = mode == Mode::Train;

    if (mode == Mode::Train && n < 2) throw ConfigError("batch_norm in training mode needs batch size >= 2");

    for (std::size_t f = 0; f < features_; ++f) {
        T mean, var;
        if (mode == Mode::Train) {
            T acc{0};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < inner; ++p) acc += x[(i * features_ + f) * inner + p];
            mean = acc / static_cast<T>(count);
            T sq{0};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < inner; ++p) {
                    const T d = x[(i * features_ + f) * inner + p] - mean;
                    sq += d * d;
                }
            var = sq / static_cast<T>(count);
            const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
            running_mean_->value[f] = m * running_mean_->value[f] + (T{1} - m) * mean;
            running_var_->value[f] = m * running_var_->value[f] + (T{1} - m) * unbiased;
        } else {
            mean = running_mean_->value[f];
            var = running_var_->value[f];
        }
        const T inv_std = T{1} / std::sqrt(var + eps);
        cached_inv_std_[f] = inv_std;
        const T g = gamma_->value[f], b = beta_->value[f];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < inner; ++p) {
                const std::size_t idx = (i * features_ + f) * inner + p;
                const T xh = (x[idx] - mean) * inv_std;
                cached_xhat_[idx] = xh;
                y[idx] = g * xh + b;
            }
        }
    }
    return y;
}

template <typename T>
std::vector<Tensor<T>> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!cached_xhat_.empty(), "batch_norm");
    if (grad_out.shape() != cached_xhat_.shape()) throw DimensionError("batch_norm backward: grad shape mismatch");
    const Tensor<T>& xhat = cached_xhat_;
    const std::size_t n = xhat.dim(0);
    const std::size_t inner = xhat.rank() == 4 ? xhat.dim(2) * xhat.dim(3) : 1;
    const T count = static_cast<T>(n * inner);
    Tensor<T> dx(xhat.shape());

    for (std::size_t f = 0; f < features_; ++f) {
        T sum_g{0}, sum_gx{0};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < inner; ++p) {
                const std::size_t idx = (i * features_ + f) * inner + p;
                sum_g += grad_out[idx];
                sum_gx += grad_out[idx] * xhat[idx];
            }
        gamma_->grad[f] += sum_gx;
        beta_->grad[f] += sum_g;
        const T g = gamma_->value[f];
        const T inv_std = cached_inv_std_[f];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < inner; ++p) {
                const std::size_t idx = (i * features_ + f) * inner + p;
                if (cached_train_) {
                    dx[idx] = g * inv_std / count * (count * grad_out[idx] - sum_g - xhat[idx] * sum_gx);
                } else {
                    dx[idx] = g * inv_std * grad_out[idx];
                }
            }
    }
    return {std::move(dx)};
}

// Dropout ---------------------------------------------------------------------------

template <typename T>
Shape Dropout<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "dropout");
    return inputs[0];
}

template <typename T>
Tensor<T> Dropout<T>::forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) {
    const Tensor<T>& x = single_input(inputs, "dropout");
    this->spec_.validate();
    const double p = this->spec_.rate;
    mask_.assign(x.size(), T{1});
    if (mode == Mode::Train) {
        if (p > 0.0) {
            std::bernoulli_distribution drop(p);
            for (auto& m : mask_) m = drop(rng) ? T{0} : T{1};
        }
    } else {
        std::fill(mask_.begin(), mask_.end(), static_cast<T>(1.0 - p));
    }
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask_[i];
    return y;
}

template <typename T>
std::vector<Tensor<T>> Dropout<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!mask_.empty(), "dropout");
    if (grad_out.size() != mask_.size()) throw DimensionError("dropout backward: grad shape mismatch");
    Tensor<T> dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return {std::move(dx)};
}

// Activation ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    if (x.rank() != 1 && x.rank() != 2) throw DimensionError("softmax expects a vector or (N, K), got " +
                                                             to_string(x.shape()));
    const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t k = x.size() / rows;
    Tensor<T> y = x;
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = y.raw() + r * k;
        const T mx = *std::max_element(row, row + k);
        T sum{0};
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return y;
}

template <typename T>
Tensor<T> activation(ActivationKind kind, const Tensor<T>& x) {
    if (kind == ActivationKind::Softmax) return softmax(x);
    Tensor<T> y = x;
    for (auto& v : y.data()) {
        switch (kind) {
            case ActivationKind::Linear: break;
            case ActivationKind::Relu: v = v > T{0} ? v : T{0}; break;
            case ActivationKind::Sigmoid:
                v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
                break;
            case ActivationKind::Tanh: v = std::tanh(v); break;
            case ActivationKind::Softplus: v = std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); break;
            case ActivationKind::Elu: v = v > T{0} ? v : std::expm1(v); break;
            case ActivationKind::Softmax: break;
        }
    }
    return y;
}

template <typename T>
Shape Activation<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "activation");
    if (this->spec_.activation == ActivationKind::Softmax && inputs[0].size() != 1) {
        throw DimensionError("softmax expects a flat per-sample input, got " + to_string(inputs[0]));
    }
    return inputs[0];
}

template <typename T>
Tensor<T> Activation<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "activation");
    Tensor<T> y = activation(this->spec_.activation, x);
    cached_input_ = x;
    cached_output_ = y;
    return y;
}

template <typename T>
std::vector<Tensor<T>> Activation<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!cached_output_.empty(), "activation");
    if (grad_out.shape() != cached_output_.shape()) throw DimensionError("activation backward: grad shape mismatch");
    const Tensor<T>& x = cached_input_;
    const Tensor<T>& y = cached_output_;
    Tensor<T> dx = grad_out;
    switch (this->spec_.activation) {
        case ActivationKind::Linear: break;
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > T{0} ? dx[i] : T{0};
            break;
        case ActivationKind::Sigmoid:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T{1} - y[i]);
            break;
        case ActivationKind::Tanh:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= T{1} - y[i] * y[i];
            break;
        case ActivationKind::Softplus:
            for (std::size_t i = 0; i < dx.size(); ++i) {
                const T s = x[i] >= T{0} ? T{1} / (T{1} + std::exp(-x[i])) : std::exp(x[i]) / (T{1} + std::exp(x[i]));
                dx[i] *= s;
            }
            break;
        case ActivationKind::Elu:
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= x[i] > T{0} ? T{1} : y[i] + T{1};
            break;
        case ActivationKind::Softmax: {
            const std::size_t rows = y.rank() == 2 ? y.dim(0) : 1;
            const std::size_t k = y.size() / rows;
            for (std::size_t r = 0; r < rows; ++r) {
                T dot{0};
                for (std::size_t j = 0; j < k; ++j) dot += grad_out[r * k + j] * y[r * k + j];
                for (std::size_t j = 0; j < k; ++j) dx[r * k + j] = y[r * k + j] * (grad_out[r * k + j] - dot);
            }
            break;
        }
    }
    return {std::move(dx)};
}

// Flatten ---------------------------------------------------------------------------

template <typename T>
Shape Flatten<T>::output_shape(std::span<const Shape> inputs) const {
    require_inputs(inputs, 1, "flatten");
    return {num_elements(inputs[0])};
}

template <typename T>
Tensor<T> Flatten<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    const Tensor<T>& x = single_input(inputs, "flatten");
    input_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

template <typename T>
std::vector<Tensor<T>> Flatten<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!input_shape_.empty(), "flatten");
    return {grad_out.reshaped(input_shape_)};
}

// ChannelConcat ----------------------------------------------------------------------

template <typename T>
Shape ChannelConcat<T>::output_shape(std::span<const Shape> inputs) const {
    if (inputs.empty()) throw DimensionError("channel_concat needs at least one input");
    Shape out = inputs[0];
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        const Shape& s = inputs[i];
        if (s.size() != out.size() || !std::equal(s.begin() + 1, s.end(), out.begin() + 1)) {
            throw DimensionError("channel_concat: " + to_string(s) + " incompatible with " + to_string(inputs[0]));
        }
        out[0] += s[0];
    }
    return out;
}

template <typename T>
Tensor<T> ChannelConcat<T>::forward(std::span<const Tensor<T>* const> inputs, Mode, Rng&) {
    if (inputs.empty()) throw DimensionError("channel_concat needs at least one input");
    const std::size_t n = inputs[0]->dim(0);
    std::vector<Shape> per_sample;
    input_shapes_.clear();
    for (const auto* t : inputs) {
        if (t->dim(0) != n) throw DimensionError("channel_concat: batch size mismatch");
        input_shapes_.push_back(t->shape());
        per_sample.emplace_back(t->shape().begin() + 1, t->shape().end());
    }
    Shape os = output_shape(per_sample);
    Shape full{n};
    full.insert(full.end(), os.begin(), os.end());
    Tensor<T> out(full);
    const std::size_t out_row = out.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t off = 0;
        for (const auto* t : inputs) {
            const std::size_t row = t->size() / n;
            std::copy(t->raw() + i * row, t->raw() + (i + 1) * row, out.raw() + i * out_row + off);
            off += row;
        }
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> ChannelConcat<T>::backward(const Tensor<T>& grad_out) {
    require_cache(!input_shapes_.empty(), "channel_concat");
    const std::size_t n = grad_out.dim(0);
    const std::size_t out_row = grad_out.size() / n;
    std::vector<Tensor<T>> grads;
    std::size_t off = 0;
    for (const auto& s : input_shapes_) {
        Tensor<T> g(s);
        const std::size_t row = g.size() / n;
        for (std::size_t i = 0; i < n; ++i)
            std::copy(grad_out.raw() + i * out_row + off, grad_out.raw() + i * out_row + off + row, g.raw() + i * row);
        off += row;
        grads.push_back(std::move(g));
    }
    return grads;
}

// Factory ----------------------------------------------------------------------------

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::span<const Shape> inputs, const std::string& name) {
    spec.validate();
    std::unique_ptr<Layer<T>> layer;
    switch (spec.kind) {
        case LayerKind::Conv2D:
            require_inputs(inputs, 1, "conv2d");
            layer = std::make_unique<Conv2D<T>>(spec, inputs[0], name);
            break;
        case LayerKind::FullyConnected:
            require_inputs(inputs, 1, "fully_connected");
            layer = std::make_unique<FullyConnected<T>>(spec, inputs[0], name);
            break;
        case LayerKind::BatchNorm:
            require_inputs(inputs, 1, "batch_norm");
            layer = std::make_unique<BatchNorm<T>>(spec, inputs[0], name);
            break;
        case LayerKind::MaxPool2x2: layer = std::make_unique<MaxPool2x2<T>>(spec); break;
        case LayerKind::GlobalAvgPool: layer = std::make_unique<GlobalAvgPool<T>>(spec); break;
        case LayerKind::Dropout: layer = std::make_unique<Dropout<T>>(spec); break;
        case LayerKind::Activation: layer = std::make_unique<Activation<T>>(spec); break;
        case LayerKind::Flatten: layer = std::make_unique<Flatten<T>>(spec); break;
        case LayerKind::ChannelConcat: layer = std::make_unique<ChannelConcat<T>>(spec); break;
    }
    // Validates shape composition eagerly.
    (void)layer->output_shape(inputs);
    return layer;
}

#define SONARP_INSTANTIATE(T)                                                                           \
    template ParamPtr<T> make_param<T>(std::string, Shape, T);                                          \
    template class Layer<T>;                                                                            \
    template class Conv2D<T>;                                                                           \
    template class MaxPool2x2<T>;                                                                       \
    template class GlobalAvgPool<T>;                                                                    \
    template class FullyConnected<T>;                                                                   \
    template class BatchNorm<T>;                                                                        \
    template class Dropout<T>;                                                                          \
    template class Activation<T>;                                                                       \
    template class Flatten<T>;                                                                          \
    template class ChannelConcat<T>;                                                                    \
    template Tensor<T> softmax(const Tensor<T>&);                                                       \
    template Tensor<T> activation(ActivationKind, const Tensor<T>&);                                    \
    template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, std::span<const Shape>, const std::string&);

SONARP_INSTANTIATE(float)
SONARP_INSTANTIATE(double)

#undef SONARP_INSTANTIATE

}  // namespace sonarp
