#pragma once

#include "sonarp/init.hpp"
#include "sonarp/network.hpp"

namespace sonarp {

enum class Regularization { None, BatchNorm, Dropout };
enum class MatcherKind { TwoChannel, Siamese };
enum class MatcherHead { Softmax2, Sigmoid };
enum class ObjectnessKind { Classic, Tiny };

std::string to_string(Regularization r);
Regularization regularization_from_string(const std::string& name);
std::string to_string(MatcherKind k);
MatcherKind matcher_kind_from_string(const std::string& name);
std::string to_string(MatcherHead h);
MatcherHead matcher_head_from_string(const std::string& name);
std::string to_string(ObjectnessKind k);
ObjectnessKind objectness_kind_from_string(const std::string& name);

/// Largest module count whose 2x2 pools keep every extent even, e.g. 5 for 96.
std::size_t max_modules(std::size_t input_size);

/// n x [Conv(f, 5x5, same) ReLU, MaxPool, BN] -> FC(64) ReLU [BN | Dropout(0.5)]
/// -> FC(C) softmax. Nodes: conv<i>, pool<i>, bn<i>, fc1, fc1_relu, fc2, probs.
Network<float> build_classic_net(std::size_t modules, std::size_t filters, Regularization reg, std::size_t classes,
                                 std::size_t input_size = 96);
/// n x [Conv(f, 3x3) ReLU, Conv(f, 1x1) ReLU, BN, MaxPool] -> Conv(C, 1x1)
/// -> global average pool -> softmax.
Network<float> build_tiny_net(std::size_t modules, std::size_t filters, std::size_t classes,
                              std::size_t input_size = 96);
/// Conv(8, 5x5) ReLU -> n x MaxFire(s11 = e11 = e33 = filters) -> Conv(C, 1x1)
/// -> global average pool -> softmax.
Network<float> build_fire_net(std::size_t modules, std::size_t filters, std::size_t classes,
                              std::size_t input_size = 96);

/// Two-channel net takes [2, 96, 96]; the siamese net takes two [1, 96, 96]
/// inputs whose branches share every parameter.
Network<float> build_matcher(MatcherKind kind, MatcherHead head);

/// Patch objectness in [0, 1] for a [1, 96, 96] input.
Network<float> build_objectness_net(ObjectnessKind kind);

/// Shared trunk with an objectness head (output 0, sigmoid) and a class head
/// (output 1, softmax over `classes`).
Network<float> build_detector(std::size_t classes);

/// Replaces the trailing Flatten -> FC(k) of a BN-free net with an equivalent
/// valid convolution so the net accepts any input whose sides are multiples
/// of its pooling factor. Throws ConfigError when the net is not convertible.
template <typename T>
Network<T> to_fcn(const Network<T>& net);

/// Weights from `spec`, biases zero, BN scale 1 / shift 0.
template <typename T>
void initialize(Network<T>& net, const InitSpec& spec, Rng& rng);

}  // namespace sonarp
