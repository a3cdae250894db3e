#include "sonarp/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sonarp {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::MSE: return "mse";
        case LossKind::MAE: return "mae";
        case LossKind::CategoricalCE: return "categorical_ce";
        case LossKind::BinaryCE: return "binary_ce";
        case LossKind::Hinge: return "hinge";
    }
    return "?";
}

LossKind loss_from_string(const std::string& name) {
    for (auto k : {LossKind::MSE, LossKind::MAE, LossKind::CategoricalCE, LossKind::BinaryCE, LossKind::Hinge})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown loss '" + name + "'");
}

namespace {

template <typename T>
T clamp_prob(T p) {
    if (!(p >= T(-1e-6) && p <= T(1 + 1e-6))) {
        throw DomainError("probability " + std::to_string(static_cast<double>(p)) + " outside [0, 1]");
    }
    return std::clamp(p, T(kProbClamp), T(1 - kProbClamp));
}

}  // namespace

template <typename T>
LossResult<T> loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape() || pred.empty()) {
        throw DimensionError("loss: prediction " + to_string(pred.shape()) + " vs target " +
                             to_string(target.shape()));
    }
    LossResult<T> r;
    r.grad = Tensor<T>(pred.shape());
    const std::size_t n = pred.size();
    const T inv_n = T{1} / static_cast<T>(n);
    double acc = 0.0;
    switch (kind) {
        case LossKind::MSE:
            for (std::size_t i = 0; i < n; ++i) {
                const T d = pred[i] - target[i];
                acc += static_cast<double>(d) * d;
                r.grad[i] = T{2} * d * inv_n;
            }
            break;
        case LossKind::MAE:
            for (std::size_t i = 0; i < n; ++i) {
                const T d = pred[i] - target[i];
                acc += std::abs(static_cast<double>(d));
                r.grad[i] = (d > T{0} ? T{1} : d < T{0} ? T{-1} : T{0}) * inv_n;
            }
            break;
        case LossKind::BinaryCE:
            for (std::size_t i = 0; i < n; ++i) {
                const T p = clamp_prob(pred[i]);
                const T y = target[i];
                acc += -(static_cast<double>(y) * std::log(p) + (1.0 - y) * std::log(T{1} - p));
                r.grad[i] = (-y / p + (T{1} - y) / (T{1} - p)) * inv_n;
            }
            break;
        case LossKind::CategoricalCE: {
            const std::size_t rows = pred.rank() >= 2 ? pred.dim(0) : 1;
            const T inv_rows = T{1} / static_cast<T>(rows);
            for (std::size_t i = 0; i < n; ++i) {
                const T p = clamp_prob(pred[i]);
                const T y = target[i];
                if (y != T{0}) acc -= static_cast<double>(y) * std::log(p);
                r.grad[i] = -y / p * inv_rows;
            }
            acc = acc * static_cast<double>(n) / static_cast<double>(rows);
            break;
        }
        case LossKind::Hinge:
            for (std::size_t i = 0; i < n; ++i) {
                const T y = target[i];
                if (y != T{1} && y != T{-1}) throw DomainError("hinge targets must be -1 or +1");
                const T margin = T{1} - y * pred[i];
                if (margin > T{0}) {
                    acc += margin;
                    r.grad[i] = -y * inv_n;
                } else {
                    r.grad[i] = T{0};
                }
            }
            break;
    }
    r.value = static_cast<T>(acc / static_cast<double>(n));
    return r;
}

template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    if (labels.empty() || classes == 0) throw DimensionError("one_hot: empty labels or zero classes");
    Tensor<T> t({labels.size(), classes}, T{0});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw DimensionError("label " + std::to_string(labels[i]) + " out of range");
        t[i * classes + labels[i]] = T{1};
    }
    return t;
}

template <typename T>
LossResult<T> categorical_ce(const Tensor<T>& probs, std::span<const std::size_t> labels) {
    if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
        throw DimensionError("categorical_ce: probabilities " + to_string(probs.shape()) + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    return loss(LossKind::CategoricalCE, probs, one_hot<T>(labels, probs.dim(1)));
}

template <typename T>
MultitaskResult<T> multitask_loss(const Tensor<T>& pred_obj, const Tensor<T>& target_obj, const Tensor<T>& pred_cls,
                                  const Tensor<T>& target_cls, T gamma) {
    if (!(gamma >= T{0})) throw ConfigError("multitask gamma must be >= 0");
    auto obj = loss(LossKind::MSE, pred_obj, target_obj);
    auto cls = loss(LossKind::CategoricalCE, pred_cls, target_cls);
    MultitaskResult<T> r;
    r.objectness = obj.value;
    r.classification = cls.value;
    r.value = obj.value + gamma * cls.value;
    r.grad_objectness = std::move(obj.grad);
    r.grad_classes = std::move(cls.grad);
    for (auto& g : r.grad_classes.data()) g *= gamma;
    return r;
}

#define SONARP_INSTANTIATE(T)                                                                                  \
    template LossResult<T> loss<T>(LossKind, const Tensor<T>&, const Tensor<T>&);                             \
    template LossResult<T> categorical_ce<T>(const Tensor<T>&, std::span<const std::size_t>);                 \
    template Tensor<T> one_hot<T>(std::span<const std::size_t>, std::size_t);                                 \
    template MultitaskResult<T> multitask_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                                  const Tensor<T>&, T);

SONARP_INSTANTIATE(float)
SONARP_INSTANTIATE(double)

#undef SONARP_INSTANTIATE

}  // namespace sonarp
