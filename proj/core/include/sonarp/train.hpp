#pragma once

#include <functional>
#include <optional>

#include "sonarp/losses.hpp"
#include "sonarp/network.hpp"
#include "sonarp/optim.hpp"

namespace sonarp {

/// Samples stacked along the leading axis: one tensor per network input, plus
/// targets. Dual-output networks also use `class_targets` (one-hot).
template <typename T>
struct Dataset {
    std::vector<Tensor<T>> inputs;
    Tensor<T> targets;
    Tensor<T> class_targets;

    std::size_t size() const { return targets.empty() ? 0 : targets.dim(0); }
    /// Rows selected by index, in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
    /// Throws DimensionError when inputs and targets disagree on N.
    void validate() const;
};

/// Rows of `src` (leading axis) in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> rows);

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 20;
    LossKind loss = LossKind::CategoricalCE;
    double gamma = 1.0;  // multi-task weight, dual-output networks only
    OptimizerConfig optimizer{};
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0;
    double val_loss = 0;  // NaN without a validation set
    double val_metric = 0;
};

/// Accuracy for classification losses (CE, BCE, hinge, multi-task class
/// head), mean absolute error for regression losses (MSE, MAE).
template <typename T>
struct Evaluation {
    double loss = 0;
    double metric = 0;
};

/// Mini-batch training, shuffled every epoch with `rng`. The last short batch
/// is trained; a trailing batch of one sample is merged into the previous one
/// so batch normalization always sees two or more samples. Throws
/// DivergenceError when the loss or a gradient becomes NaN/Inf.
template <typename T>
std::vector<EpochLog> train(Network<T>& net, const Dataset<T>& data, const Dataset<T>* validation,
                            const TrainConfig& config, Rng& rng,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

/// Inference over a stacked input set in chunks; returns one tensor per
/// network output.
template <typename T>
std::vector<Tensor<T>> predict(Network<T>& net, std::span<const Tensor<T>> inputs, std::size_t batch_size = 64);
template <typename T>
Tensor<T> predict(Network<T>& net, const Tensor<T>& input, std::size_t batch_size = 64);

template <typename T>
Evaluation<T> evaluate(Network<T>& net, const Dataset<T>& data, const TrainConfig& config);

/// Row-wise argmax of an [N, K] tensor ([N, 1] thresholds at 0.5).
template <typename T>
std::vector<std::size_t> predicted_classes(const Tensor<T>& out);

}  // namespace sonarp
