#include "sonarp/init.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace sonarp {

std::string to_string(InitScheme scheme) {
    switch (scheme) {
        case InitScheme::Uniform: return "uniform";
        case InitScheme::Gaussian: return "gaussian";
        case InitScheme::Glorot: return "glorot";
        case InitScheme::Orthogonal: return "orthogonal";
    }
    return "?";
}

InitScheme init_scheme_from_string(const std::string& name) {
    for (auto s : {InitScheme::Uniform, InitScheme::Gaussian, InitScheme::Glorot, InitScheme::Orthogonal})
        if (to_string(s) == name) return s;
    throw ConfigError("unknown init scheme '" + name + "'");
}

std::pair<std::size_t, std::size_t> fan_in_out(const Shape& shape) {
    if (shape.size() < 2) throw ConfigError("weight init needs rank >= 2, got " + to_string(shape));
    std::size_t receptive = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= shape[i];
    return {shape[1] * receptive, shape[0] * receptive};
}

template <typename T>
Tensor<T> init_weights(const InitSpec& spec, const Shape& shape, Rng& rng) {
    const auto [fan_in, fan_out] = fan_in_out(shape);
    Tensor<T> w(shape);
    switch (spec.scheme) {
        case InitScheme::Uniform: {
            if (!(spec.scale > 0)) throw ConfigError("uniform init needs scale > 0");
            std::uniform_real_distribution<double> d(-spec.scale, spec.scale);
            for (auto& v : w.data()) v = static_cast<T>(d(rng));
            break;
        }
        case InitScheme::Gaussian: {
            if (!(spec.sigma > 0)) throw ConfigError("gaussian init needs sigma > 0");
            std::normal_distribution<double> d(0.0, spec.sigma);
            for (auto& v : w.data()) v = static_cast<T>(d(rng));
            break;
        }
        case InitScheme::Glorot: {
            const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> d(-s, s);
            for (auto& v : w.data()) v = static_cast<T>(d(rng));
            break;
        }
        case InitScheme::Orthogonal: {
            const std::size_t rows = shape[0];
            const std::size_t cols = w.size() / rows;
            std::normal_distribution<double> d(0.0, 1.0);
            Eigen::MatrixXd a(rows, cols);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) a(i, j) = d(rng);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
            // U is rows x min, V is cols x min; pick whichever matches (rows, cols).
            Eigen::MatrixXd q = rows >= cols ? Eigen::MatrixXd(svd.matrixU())
                                             : Eigen::MatrixXd(svd.matrixV().transpose());
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) w[i * cols + j] = static_cast<T>(spec.gain * q(i, j));
            break;
        }
    }
    return w;
}

template Tensor<float> init_weights<float>(const InitSpec&, const Shape&, Rng&);
template Tensor<double> init_weights<double>(const InitSpec&, const Shape&, Rng&);

}  // namespace sonarp
