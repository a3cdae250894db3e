#pragma once

#include "sonarp/layers.hpp"

namespace sonarp {

enum class OptimizerKind { SGD, AdaGrad, RMSProp, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 0.01;
    double rho = 0.9;     // RMSProp decay
    double rho1 = 0.9;    // Adam first moment
    double rho2 = 0.999;  // Adam second moment
    double epsilon = 1e-8;
};

/// Updates a fixed list of parameters from their accumulated gradients.
///  SGD:     theta -= a * g
///  AdaGrad: r += g^2;                     theta -= a * g / (eps + sqrt(r))
///  RMSProp: r = rho r + (1 - rho) g^2;    theta -= a * g / sqrt(eps + r)
///  Adam:    bias-corrected moments;       theta -= a * s_hat / (sqrt(r_hat) + eps)
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerConfig config, std::vector<ParamPtr<T>> params);

    /// Throws DomainError (before touching anything) when a gradient is NaN/Inf.
    void step();
    void zero_grad();

    std::size_t steps() const noexcept { return steps_; }
    const OptimizerConfig& config() const noexcept { return config_; }

private:
    OptimizerConfig config_;
    std::vector<ParamPtr<T>> params_;
    std::vector<Tensor<T>> r_;  // squared-gradient history
    std::vector<Tensor<T>> s_;  // first moment (Adam)
    std::size_t steps_ = 0;
};

}  // namespace sonarp
