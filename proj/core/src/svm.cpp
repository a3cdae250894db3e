#include "sonarp/svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sonarp {

void l2_normalize_rows(Tensor<float>& f) {
    if (f.rank() != 2) throw DimensionError("expected [N, D] features");
    const std::size_t n = f.dim(0), d = f.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(f[i * d + j]) * f[i * d + j];
        if (s == 0) continue;
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < d; ++j) f[i * d + j] = static_cast<float>(f[i * d + j] * inv);
    }
}

Tensor<float> flatten_rows(const Tensor<float>& x) {
    if (x.rank() < 1 || x.dim(0) == 0) throw DimensionError("cannot flatten an empty batch");
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

void LinearSvm::fit(const Tensor<float>& x, std::span<const std::size_t> labels, std::size_t classes) {
    if (x.rank() != 2 || x.dim(0) != labels.size()) throw DimensionError("features and labels disagree");
    if (config_.c <= 0) throw ConfigError("SVM regularization coefficient must be positive");
    classes_ = classes;
    dim_ = x.dim(1);
    machines_.clear();
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw DomainError("label out of range");
        by_class[labels[i]].push_back(i);
    }
    const std::size_t d = dim_;
    Rng rng(config_.seed);
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b) {
            if (by_class[a].empty() || by_class[b].empty()) continue;
            std::vector<std::size_t> rows = by_class[a];
            rows.insert(rows.end(), by_class[b].begin(), by_class[b].end());
            const double lambda = 1.0 / (config_.c * static_cast<double>(rows.size()));
            std::vector<double> w(d + 1, 0.0), avg(d + 1, 0.0);
            std::size_t t = 0, averaged = 0;
            const std::size_t total = config_.epochs * rows.size();
            for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
                std::shuffle(rows.begin(), rows.end(), rng);
                for (std::size_t r : rows) {
                    ++t;
                    const double y = labels[r] == a ? 1.0 : -1.0;
                    const float* xr = x.raw() + r * d;
                    double margin = w[d];
                    for (std::size_t j = 0; j < d; ++j) margin += w[j] * xr[j];
                    const double eta = 1.0 / (lambda * static_cast<double>(t));
                    const double shrink = 1.0 - eta * lambda;
                    for (double& v : w) v *= shrink;
                    if (y * margin < 1.0) {
                        for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * xr[j];
                        w[d] += eta * y;
                    }
                    // Projection onto the ball of radius 1/sqrt(lambda).
                    double norm2 = 0;
                    for (double v : w) norm2 += v * v;
                    const double radius = 1.0 / std::sqrt(lambda);
                    if (norm2 > radius * radius) {
                        const double s = radius / std::sqrt(norm2);
                        for (double& v : w) v *= s;
                    }
                    // Average the second half of the iterates.
                    if (2 * t > total) {
                        for (std::size_t j = 0; j <= d; ++j) avg[j] += w[j];
                        ++averaged;
                    }
                }
            }
            if (averaged > 0)
                for (double& v : avg) v /= static_cast<double>(averaged);
            machines_.push_back({a, b, averaged > 0 ? avg : w});
        }
}

std::vector<std::size_t> LinearSvm::predict(const Tensor<float>& x) const {
    if (classes_ == 0) throw ConfigError("SVM used before fit()");
    if (x.rank() != 2 || x.dim(1) != dim_) throw DimensionError("feature dimension differs from training");
    const std::size_t n = x.dim(0), d = dim_;
    std::vector<std::size_t> out(n);
    std::vector<int> votes(classes_);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        const float* xr = x.raw() + i * d;
        for (const auto& m : machines_) {
            double s = m.w[d];
            for (std::size_t j = 0; j < d; ++j) s += m.w[j] * xr[j];
            ++votes[s >= 0 ? m.a : m.b];
        }
        out[i] = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
    return out;
}

}  // namespace sonarp
