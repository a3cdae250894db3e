#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sonarp/tensor.hpp"

namespace sonarp {

using Rng = std::mt19937_64;

enum class Mode { Train, Infer };

enum class LayerKind {
    Conv2D,
    MaxPool2x2,
    GlobalAvgPool,
    FullyConnected,
    BatchNorm,
    Dropout,
    Activation,
    Flatten,
    ChannelConcat,
};

enum class ActivationKind { Linear, Relu, Sigmoid, Tanh, Softplus, Elu, Softmax };

std::string to_string(LayerKind kind);
std::string to_string(ActivationKind kind);
LayerKind layer_kind_from_string(const std::string& name);
/// Throws ConfigError for unknown names.
ActivationKind activation_from_string(const std::string& name);

/// Kind plus kind-specific hyper-parameters. Unused fields keep defaults.
struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;

    // Conv2D
    std::size_t filters = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // FullyConnected
    std::size_t units = 0;

    // Dropout: probability of dropping a unit.
    double rate = 0.0;

    // Activation
    ActivationKind activation = ActivationKind::Linear;

    // BatchNorm
    double epsilon = 1e-3;
    double momentum = 0.99;

    static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t padding, std::size_t stride = 1);
    /// Convolution with P = (N - 1) / 2, S = 1.
    static LayerSpec conv_same(std::size_t filters, std::size_t kernel);
    static LayerSpec conv_valid(std::size_t filters, std::size_t kernel_h, std::size_t kernel_w);
    static LayerSpec dense(std::size_t units);
    static LayerSpec max_pool();
    static LayerSpec global_avg_pool();
    static LayerSpec batch_norm(double epsilon = 1e-3, double momentum = 0.99);
    static LayerSpec dropout(double rate);
    static LayerSpec act(ActivationKind kind);
    static LayerSpec flatten();
    static LayerSpec concat();

    /// Throws ConfigError when the hyper-parameters are invalid on their own.
    void validate() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// O = (W - N + 2P) / S + 1; throws ConfigError when (W - N + 2P) is negative
/// or not divisible by S.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t padding, std::size_t stride);

/// A trainable tensor and its accumulated gradient. Layers hold these through
/// shared_ptr so that weight-shared branches point at the same object.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

template <typename T>
using ParamPtr = std::shared_ptr<Parameter<T>>;

template <typename T>
ParamPtr<T> make_param(std::string name, Shape shape, T fill = T{0});

/// One node operation. Inputs and outputs carry a leading batch axis.
///
/// forward() caches what backward() needs; backward() returns the gradient
/// for every input and accumulates (+=) parameter gradients.
template <typename T>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const noexcept { return spec_; }

    /// Per-sample output shape for per-sample input shapes; throws on mismatch.
    virtual Shape output_shape(std::span<const Shape> inputs) const = 0;

    virtual Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) = 0;
    virtual std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) = 0;

    /// Trainable tensors.
    virtual std::vector<ParamPtr<T>> parameters() const { return {}; }
    /// Non-trainable state (BatchNorm running statistics).
    virtual std::vector<ParamPtr<T>> buffers() const { return {}; }
    /// Replace this layer's parameter/buffer objects by other's (same spec).
    virtual void share_from(const Layer& other);

    Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) {
        const Tensor<T>* in[] = {&x};
        return forward(std::span<const Tensor<T>* const>(in), mode, rng);
    }

protected:
    virtual void set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers);

    LayerSpec spec_;
};

/// Builds a layer for the given per-sample input shapes. Parameter tensors are
/// allocated (zero) and named "<name>.weights", "<name>.bias", ...
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::span<const Shape> input_shapes,
                                     const std::string& name);

// Concrete layers --------------------------------------------------------

template <typename T>
class Conv2D final : public Layer<T> {
public:
    Conv2D(const LayerSpec& spec, const Shape& input, const std::string& name);
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;
    std::vector<ParamPtr<T>> parameters() const override { return {weights_, bias_}; }

    const Parameter<T>& weights() const { return *weights_; }
    const Parameter<T>& bias() const { return *bias_; }

protected:
    void set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers) override;

private:
    void im2col(const T* x, T* cols, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) const;
    void col2im(const T* cols, T* dx, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow) const;

    std::size_t channels_;
    ParamPtr<T> weights_;  // [f, C, kh, kw]
    ParamPtr<T> bias_;     // [f]
    Tensor<T> cached_input_;
};

template <typename T>
class MaxPool2x2 final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    Shape input_shape_;
    std::vector<std::uint32_t> argmax_;  // flat input index per output element
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    Shape input_shape_;
};

template <typename T>
class FullyConnected final : public Layer<T> {
public:
    FullyConnected(const LayerSpec& spec, const Shape& input, const std::string& name);
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;
    std::vector<ParamPtr<T>> parameters() const override { return {weights_, bias_}; }

protected:
    void set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers) override;

private:
    std::size_t in_features_;
    ParamPtr<T> weights_;  // [units, in]
    ParamPtr<T> bias_;     // [units]
    Tensor<T> cached_input_;
};

/// Normalizes each feature (rank-2 input) or each channel (rank-4 input) with
/// batch statistics in training and running statistics at inference.
template <typename T>
class BatchNorm final : public Layer<T> {
public:
    BatchNorm(const LayerSpec& spec, const Shape& input, const std::string& name);
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;
    std::vector<ParamPtr<T>> parameters() const override { return {gamma_, beta_}; }
    std::vector<ParamPtr<T>> buffers() const override { return {running_mean_, running_var_}; }

    Parameter<T>& running_mean() { return *running_mean_; }
    Parameter<T>& running_var() { return *running_var_; }

protected:
    void set_state(std::vector<ParamPtr<T>> params, std::vector<ParamPtr<T>> buffers) override;

private:
    std::size_t features_;
    ParamPtr<T> gamma_, beta_, running_mean_, running_var_;
    Tensor<T> cached_xhat_;
    std::vector<T> cached_inv_std_;
    bool cached_train_ = false;
};

/// Non-inverted dropout: training zeroes each unit with probability `rate`,
/// inference scales by (1 - rate).
template <typename T>
class Dropout final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    std::vector<T> mask_;  // multiplier per element
};

template <typename T>
class Activation final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    Tensor<T> cached_input_;
    Tensor<T> cached_output_;
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    Shape input_shape_;
};

/// Concatenates inputs along axis 1 (channels for images, features for vectors).
template <typename T>
class ChannelConcat final : public Layer<T> {
public:
    using Layer<T>::Layer;
    Shape output_shape(std::span<const Shape> inputs) const override;
    Tensor<T> forward(std::span<const Tensor<T>* const> inputs, Mode mode, Rng& rng) override;
    std::vector<Tensor<T>> backward(const Tensor<T>& grad_out) override;

private:
    std::vector<Shape> input_shapes_;
};

// Stateless helpers shared with losses and pipelines -----------------------

/// Elementwise activation (or row-wise softmax for rank-2 input).
template <typename T>
Tensor<T> activation(ActivationKind kind, const Tensor<T>& x);

/// Numerically stable row softmax of a [N, K] tensor (a rank-1 input is one row).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

}  // namespace sonarp
