#include "sonarp/optim.hpp"

#include <cmath>

namespace sonarp {

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::SGD: return "sgd";
        case OptimizerKind::AdaGrad: return "adagrad";
        case OptimizerKind::RMSProp: return "rmsprop";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
    for (auto k : {OptimizerKind::SGD, OptimizerKind::AdaGrad, OptimizerKind::RMSProp, OptimizerKind::Adam})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown optimizer '" + name + "'");
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config, std::vector<ParamPtr<T>> params)
    : config_(config), params_(std::move(params)) {
    if (!(config_.learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (!(config_.epsilon > 0)) throw ConfigError("epsilon must be > 0");
    for (const auto& p : params_) {
        r_.emplace_back(p->value.shape(), T{0});
        if (config_.kind == OptimizerKind::Adam) s_.emplace_back(p->value.shape(), T{0});
    }
}

template <typename T>
void Optimizer<T>::zero_grad() {
    for (auto& p : params_) p->grad.fill(T{0});
}

template <typename T>
void Optimizer<T>::step() {
    for (const auto& p : params_) {
        for (T g : p->grad.data()) {
            if (!std::isfinite(g)) throw DomainError("non-finite gradient in " + p->name);
        }
    }
    ++steps_;
    const double a = config_.learning_rate, eps = config_.epsilon;
    const double c1 = 1.0 - std::pow(config_.rho1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.rho2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        T* theta = params_[k]->value.raw();
        const T* g = params_[k]->grad.raw();
        T* r = r_[k].raw();
        const std::size_t n = params_[k]->value.size();
        switch (config_.kind) {
            case OptimizerKind::SGD:
                for (std::size_t i = 0; i < n; ++i) theta[i] -= static_cast<T>(a * g[i]);
                break;
            case OptimizerKind::AdaGrad:
                for (std::size_t i = 0; i < n; ++i) {
                    r[i] += g[i] * g[i];
                    theta[i] -= static_cast<T>(a * g[i] / (eps + std::sqrt(static_cast<double>(r[i]))));
                }
                break;
            case OptimizerKind::RMSProp: {
                const double rho = config_.rho;
                for (std::size_t i = 0; i < n; ++i) {
                    r[i] = static_cast<T>(rho * r[i] + (1.0 - rho) * g[i] * g[i]);
                    theta[i] -= static_cast<T>(a * g[i] / std::sqrt(eps + r[i]));
                }
                break;
            }
            case OptimizerKind::Adam: {
                T* s = s_[k].raw();
                const double r1 = config_.rho1, r2 = config_.rho2;
                for (std::size_t i = 0; i < n; ++i) {
                    s[i] = static_cast<T>(r1 * s[i] + (1.0 - r1) * g[i]);
                    r[i] = static_cast<T>(r2 * r[i] + (1.0 - r2) * g[i] * g[i]);
                    const double s_hat = s[i] / c1;
                    const double r_hat = r[i] / c2;
                    theta[i] -= static_cast<T>(a * s_hat / (std::sqrt(r_hat) + eps));
                }
                break;
            }
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace sonarp
