#pragma once

#include "sonarp/layers.hpp"

namespace sonarp {

struct SvmConfig {
    double c = 1.0;  // lambda = 1 / (c * n) for n training rows
    std::size_t epochs = 40;
    std::uint64_t seed = 1;
};

/// Multi-class linear SVM built from one-versus-one binary machines trained
/// on the L2-regularized hinge loss by stochastic subgradient descent
/// (Pegasos). A constant bias feature is appended to every row.
class LinearSvm {
public:
    explicit LinearSvm(SvmConfig config = {}) : config_(config) {}

    /// features [N, D]; labels in [0, classes). Classes without samples are
    /// never predicted.
    void fit(const Tensor<float>& features, std::span<const std::size_t> labels, std::size_t classes);
    /// Majority vote over the pairwise machines; ties go to the lower class.
    std::vector<std::size_t> predict(const Tensor<float>& features) const;

    std::size_t classes() const noexcept { return classes_; }

private:
    struct Machine {
        std::size_t a = 0, b = 0;  // positive side is `a`
        std::vector<double> w;     // D + 1 weights, bias last
    };
    SvmConfig config_;
    std::size_t classes_ = 0;
    std::size_t dim_ = 0;
    std::vector<Machine> machines_;
};

/// Divides each row of an [N, D] tensor by its Euclidean norm (zero rows stay
/// zero).
void l2_normalize_rows(Tensor<float>& features);

/// Flattens [N, ...] to [N, D].
Tensor<float> flatten_rows(const Tensor<float>& x);

}  // namespace sonarp
