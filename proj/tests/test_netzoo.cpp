#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sonarp/serialize.hpp"
#include "sonarp/zoo.hpp"
#include "support.hpp"

using namespace sonarp;
using testing::random_tensor;

namespace {

// Trainable scalars computed from layer hyper-parameters and node shapes.
std::size_t count_oracle(const Network<float>& net) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& n = net.node(i);
        if (!n.shares.empty()) continue;
        const int src = n.inputs[0];
        const Shape in = src < 0 ? net.input_shapes()[-1 - src] : net.node(src).shape;
        switch (n.spec.kind) {
            case LayerKind::Conv2D: total += n.spec.filters * (in[0] * n.spec.kernel_h * n.spec.kernel_w + 1); break;
            case LayerKind::FullyConnected: total += n.spec.units * (in[0] + 1); break;
            case LayerKind::BatchNorm: total += 2 * in[0]; break;
            default: break;
        }
    }
    return total;
}

Tensor<float> forward_one(Network<float>& net, const Tensor<float>& x) {
    Rng rng(0);
    return net.forward(x, Mode::Infer, rng);
}

Network<float> initialized(Network<float> net, std::uint64_t seed) {
    Rng rng(seed);
    initialize(net, InitSpec{}, rng);
    return net;
}

}  // namespace

TEST_CASE("classic net feature shapes and depth limit") {
    auto net = build_classic_net(5, 32, Regularization::BatchNorm, 11);
    CHECK(net.node("conv5").shape == Shape{32, 6, 6});
    CHECK(net.node("pool5").shape == Shape{32, 3, 3});
    CHECK(net.output_shape() == Shape{11});
    CHECK(max_modules(96) == 5);
    CHECK_THROWS_AS(build_classic_net(7, 32, Regularization::BatchNorm, 11), ConfigError);
    CHECK_THROWS_AS(build_classic_net(6, 32, Regularization::BatchNorm, 11), ConfigError);
    CHECK_NOTHROW(build_classic_net(6, 8, Regularization::None, 11, 128));
}

TEST_CASE("classic net parameter count") {
    // conv 1->32 5x5, BN, conv 32->32 5x5, BN, FC 24*24*32 -> 64, BN, FC 64 -> 11
    const std::size_t expected = (32 * 25 + 32) + 64 + (32 * 32 * 25 + 32) + 64 + (18432 * 64 + 64) + 128 + (64 * 11 + 11);
    const auto net = build_classic_net(2, 32, Regularization::BatchNorm, 11);
    CHECK(net.num_parameters() == expected);
    CHECK(count_oracle(net) == expected);

    const auto drop = build_classic_net(2, 32, Regularization::Dropout, 11);
    CHECK(drop.num_parameters() == expected - 128 - 128);
    CHECK(drop.node("fc1_dropout").spec.rate == 0.5);
}

TEST_CASE("every design grid point composes") {
    for (std::size_t n = 1; n <= 5; ++n) {
        for (std::size_t f : {4, 8, 16, 32}) {
            CAPTURE(n);
            CAPTURE(f);
            CHECK_NOTHROW(build_classic_net(n, f, Regularization::BatchNorm, 11));
            CHECK_NOTHROW(build_tiny_net(n, f, 11));
            CHECK_NOTHROW(build_fire_net(n, f, 11));
        }
    }
}

TEST_CASE("tiny net shapes and head") {
    const auto net = build_tiny_net(5, 8, 11);
    std::size_t side = 48;
    for (std::size_t i = 1; i <= 5; ++i, side /= 2) CHECK(net.node("pool" + std::to_string(i)).shape == Shape{8, side, side});

    const auto small = build_tiny_net(1, 4, 11);
    MESSAGE("TinyNet n=1 f=4 C=11 trainable parameters: " << small.num_parameters());
    CHECK(small.num_parameters() == count_oracle(small));

    auto fire = initialized(build_fire_net(2, 4, 11), 3);
    Rng rng(4);
    const auto p = forward_one(fire, random_tensor<float>({2, 1, 96, 96}, rng));
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 11; ++j) s += p[r * 11 + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(fire.node("fire1a_concat").shape[0] == 8);
}

TEST_CASE("matcher heads and siamese weight sharing") {
    Rng rng(5);
    auto score = initialized(build_matcher(MatcherKind::TwoChannel, MatcherHead::Sigmoid), 6);
    const auto s = forward_one(score, random_tensor<float>({3, 2, 96, 96}, rng));
    for (float v : s.data()) CHECK((v >= 0.0f && v <= 1.0f));

    auto siam = initialized(build_matcher(MatcherKind::Siamese, MatcherHead::Softmax2), 7);
    const auto& a = dynamic_cast<const Conv2D<float>&>(siam.layer(siam.node_id("a_conv1")));
    const auto& b = dynamic_cast<const Conv2D<float>&>(siam.layer(siam.node_id("b_conv1")));
    CHECK(&a.weights() == &b.weights());
    auto pa = siam.layer(siam.node_id("a_fc1")).parameters();
    auto pb = siam.layer(siam.node_id("b_fc1")).parameters();
    pa[0]->value[0] = 42.0f;
    CHECK(pb[0]->value[0] == 42.0f);

    // Parameters are listed once even though two branches use them.
    const auto two = build_matcher(MatcherKind::Siamese, MatcherHead::Softmax2);
    CHECK(two.num_parameters() == count_oracle(two));
}

TEST_CASE("siamese merge concatenates branch features in input order") {
    Rng rng(8);
    auto net = initialized(build_matcher(MatcherKind::Siamese, MatcherHead::Softmax2), 9);
    const auto x = random_tensor<float>({1, 1, 96, 96}, rng);
    const auto y = random_tensor<float>({1, 1, 96, 96}, rng);
    Rng r(0);
    std::vector<Tensor<float>> xy{x, y}, yx{y, x};
    net.forward(std::span<const Tensor<float>>(xy), Mode::Infer, r);
    const auto m1 = net.activation("merge");
    net.forward(std::span<const Tensor<float>>(yx), Mode::Infer, r);
    const auto m2 = net.activation("merge");
    REQUIRE(m1.shape() == Shape{1, 192});
    for (std::size_t i = 0; i < 96; ++i) {
        CHECK(m1[i] == m2[96 + i]);
        CHECK(m1[96 + i] == m2[i]);
    }
}

TEST_CASE("objectness nets") {
    Rng rng(10);
    auto tiny = initialized(build_objectness_net(ObjectnessKind::Tiny), 11);
    CHECK(tiny.node("pool2").shape == Shape{24, 24, 24});
    const auto o = forward_one(tiny, random_tensor<float>({4, 1, 96, 96}, rng));
    for (float v : o.data()) CHECK((v >= 0.0f && v <= 1.0f));

    auto has_bn = [](const Network<float>& n) {
        for (std::size_t i = 0; i < n.size(); ++i)
            if (n.node(i).spec.kind == LayerKind::BatchNorm) return true;
        return false;
    };
    CHECK_FALSE(has_bn(tiny));
    CHECK(has_bn(build_objectness_net(ObjectnessKind::Classic)));
}

TEST_CASE("FCN conversion is equivalent on patches") {
    Rng rng(12);
    auto patch = initialized(build_objectness_net(ObjectnessKind::Tiny), 13);
    auto fcn = to_fcn(patch);
    const auto x = random_tensor<float>({10, 1, 96, 96}, rng, 0, 1);
    const auto a = forward_one(patch, x);
    const auto b = forward_one(fcn, x);
    REQUIRE(b.shape() == Shape{10, 1, 1, 1});
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);

    for (std::size_t k : {0, 1, 5}) {
        const auto y = forward_one(fcn, random_tensor<float>({1, 1, 96, 96 + 4 * k}, rng));
        CHECK(y.shape() == Shape{1, 1, 1, 1 + k});
    }

    CHECK_THROWS_AS(to_fcn(build_objectness_net(ObjectnessKind::Classic)), ConfigError);
}

TEST_CASE("detector heads and parameter count") {
    auto net = initialized(build_detector(11), 14);
    const std::size_t n = net.num_parameters();
    MESSAGE("detector trainable parameters: " << n);
    CHECK(n == count_oracle(net));
    CHECK(std::abs(static_cast<double>(n) - 1.8e6) / 1.8e6 < 0.05);

    Rng rng(15);
    const auto x = random_tensor<float>({3, 1, 96, 96}, rng);
    std::vector<Tensor<float>> in{x};
    const auto outs = net.forward(std::span<const Tensor<float>>(in), Mode::Infer, rng);
    REQUIRE(outs.size() == 2);
    for (float v : outs[0].data()) CHECK((v >= 0.0f && v <= 1.0f));
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t j = 0; j < 11; ++j) s += outs[1][r * 11 + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(net.node("obj_out").spec.kind == LayerKind::FullyConnected);
    CHECK(net.node(net.node_id("obj_out") - 1).spec.kind == LayerKind::BatchNorm);
}

TEST_CASE("model container round trip") {
    auto net = initialized(build_classic_net(2, 8, Regularization::BatchNorm, 5), 16);
    Rng rng(17);
    // Touch the running statistics so buffers are part of the check.
    std::vector<Tensor<float>> in{random_tensor<float>({4, 1, 96, 96}, rng)};
    net.forward(std::span<const Tensor<float>>(in), Mode::Train, rng);

    const std::string bytes = serialize_model(net);
    auto back = deserialize_model(bytes);
    CHECK(serialize_model(back) == bytes);
    CHECK(back.descriptor() == net.descriptor());
    const auto x = random_tensor<float>({2, 1, 96, 96}, rng);
    CHECK(forward_one(back, x) == forward_one(net, x));

    const auto path = std::filesystem::temp_directory_path() / "sonarp_test_model.flsn";
    save_model(net, path);
    CHECK(serialize_model(load_model(path)) == bytes);
    std::filesystem::remove(path);

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bad), MagicMismatchError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(deserialize_model(bad), VersionMismatchError);
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 3)), TruncatedFileError);
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, 8)), TruncatedFileError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.flsn"), DataError);
}
