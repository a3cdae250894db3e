#pragma once

#include <utility>

#include "sonarp/layers.hpp"

namespace sonarp {

enum class InitScheme { Uniform, Gaussian, Glorot, Orthogonal };

std::string to_string(InitScheme scheme);
InitScheme init_scheme_from_string(const std::string& name);

struct InitSpec {
    InitScheme scheme = InitScheme::Glorot;
    double scale = 0.05;  // Uniform: U(-scale, scale)
    double sigma = 0.05;  // Gaussian: N(0, sigma^2)
    double gain = 1.0;    // Orthogonal
};

/// (F_in, F_out) for a dense [out, in] or conv [f, C, kh, kw] weight tensor.
std::pair<std::size_t, std::size_t> fan_in_out(const Shape& shape);

/// Orthogonal init flattens conv filters to (f, C*kh*kw) before the SVD.
/// Throws ConfigError for shapes of rank < 2.
template <typename T>
Tensor<T> init_weights(const InitSpec& spec, const Shape& shape, Rng& rng);

}  // namespace sonarp
