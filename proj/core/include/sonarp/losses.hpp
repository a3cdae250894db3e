#pragma once

#include "sonarp/tensor.hpp"

namespace sonarp {

enum class LossKind { MSE, MAE, CategoricalCE, BinaryCE, Hinge };

std::string to_string(LossKind kind);
LossKind loss_from_string(const std::string& name);

template <typename T>
struct LossResult {
    T value{};
    Tensor<T> grad;  // d value / d prediction
};

/// Probabilities are clamped to [1e-7, 1 - 1e-7] before taking logs.
inline constexpr double kProbClamp = 1e-7;

/// Batch-averaged loss. Predictions and targets are [N, ...] with equal shape.
///  - MSE/MAE/BinaryCE/Hinge average over every element.
///  - CategoricalCE sums over classes (last axis) and averages over rows.
///  - Hinge targets are -1 or +1.
/// Throws DimensionError on shape mismatch and DomainError when a probability
/// lies outside [0, 1] by more than 1e-6.
template <typename T>
LossResult<T> loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target);

/// Categorical CE against class indices.
template <typename T>
LossResult<T> categorical_ce(const Tensor<T>& probs, std::span<const std::size_t> labels);

/// One-hot [N, classes] matrix.
template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes);

template <typename T>
struct MultitaskResult {
    T value{};
    T objectness{};
    T classification{};
    Tensor<T> grad_objectness;
    Tensor<T> grad_classes;
};

/// MSE(objectness) + gamma * CE(classes).
template <typename T>
MultitaskResult<T> multitask_loss(const Tensor<T>& pred_obj, const Tensor<T>& target_obj, const Tensor<T>& pred_cls,
                                  const Tensor<T>& target_cls, T gamma);

}  // namespace sonarp
