#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "sonarp/layers.hpp"
#include "sonarp/losses.hpp"

namespace testing {

using sonarp::Rng;
using sonarp::Shape;
using sonarp::Tensor;

template <typename T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(u(rng));
    return t;
}

inline double rel_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

/// Central-difference check of a layer on the scalar sum(g * y) with a fixed
/// random g. Every forward reseeds the rng so dropout masks repeat. Returns
/// the largest relative error over input and parameter gradients.
inline double layer_gradient_error(sonarp::Layer<double>& layer, std::vector<Tensor<double>> inputs,
                                   sonarp::Mode mode, std::uint64_t seed, double h = 1e-5) {
    auto run = [&] {
        Rng r(seed);
        std::vector<const Tensor<double>*> ptrs;
        for (auto& x : inputs) ptrs.push_back(&x);
        return layer.forward(std::span<const Tensor<double>* const>(ptrs), mode, r);
    };
    const Tensor<double> y0 = run();
    Rng grng(seed ^ 0x5bd1e995ULL);
    const Tensor<double> g = random_tensor(y0.shape(), grng);
    auto objective = [&] {
        const Tensor<double> y = run();
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
        return s;
    };
    for (auto& p : layer.parameters()) p->grad.fill(0.0);
    run();
    const auto gx = layer.backward(g);
    std::vector<std::pair<std::string, Tensor<double>>> analytic;
    for (auto& p : layer.parameters()) analytic.emplace_back(p->name, p->grad);

    double worst = 0;
    auto probe = [&](double& v, double a) {
        const double saved = v;
        v = saved + h;
        const double fp = objective();
        v = saved - h;
        const double fm = objective();
        v = saved;
        worst = std::max(worst, rel_error(a, (fp - fm) / (2 * h)));
    };
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].size(); ++i) probe(inputs[k][i], gx[k][i]);
    const auto params = layer.parameters();
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k]->value.size(); ++i) probe(params[k]->value[i], analytic[k].second[i]);
    return worst;
}

/// Same check for a loss: d loss / d pred.
inline double loss_gradient_error(sonarp::LossKind kind, Tensor<double> pred, const Tensor<double>& target,
                                  double h = 1e-5) {
    const auto res = sonarp::loss(kind, pred, target);
    double worst = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double saved = pred[i];
        pred[i] = saved + h;
        const double fp = sonarp::loss(kind, pred, target).value;
        pred[i] = saved - h;
        const double fm = sonarp::loss(kind, pred, target).value;
        pred[i] = saved;
        worst = std::max(worst, rel_error(res.grad[i], (fp - fm) / (2 * h)));
    }
    return worst;
}

}  // namespace testing
