#include <doctest.h>

#include "sonarp/init.hpp"
#include "sonarp/layers.hpp"
#include "support.hpp"

using namespace sonarp;
using L = LayerSpec;
using testing::random_tensor;

namespace {

std::unique_ptr<Layer<double>> layer(const LayerSpec& spec, std::vector<Shape> in) {
    return make_layer<double>(spec, in, "l");
}

void randomize(Layer<double>& l, Rng& rng) {
    for (auto& p : l.parameters()) p->value = random_tensor(p->value.shape(), rng);
}

}  // namespace

TEST_CASE("conv output size formula") {
    CHECK(conv_output_size(13, 3, 1, 1) == 13);
    CHECK(conv_output_size(96, 5, 2, 1) == 96);
    CHECK(conv_output_size(96, 5, 0, 1) == 92);
    CHECK(conv_output_size(7, 3, 0, 2) == 3);
    CHECK_THROWS_AS(conv_output_size(8, 3, 0, 2), ConfigError);
    CHECK_THROWS_AS(conv_output_size(2, 5, 0, 1), ConfigError);
}

TEST_CASE("conv of ones with a ones filter sums the window") {
    auto c = layer(L::conv(1, 3, 0), {{1, 3, 3}});
    c->parameters()[0]->value.fill(1.0);
    Rng rng(0);
    const auto y = c->forward(Tensor<double>({1, 1, 3, 3}, 1.0), Mode::Infer, rng);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 9.0);
}

TEST_CASE("conv rejects even kernels with padding and bad strides") {
    CHECK_THROWS_AS(L::conv(4, 4, 1).validate(), ConfigError);
    CHECK_NOTHROW(L::conv_valid(1, 24, 24).validate());
    CHECK_THROWS_AS(layer(L::conv(2, 3, 0, 2), {{1, 8, 8}}), ConfigError);
}

TEST_CASE("conv backward matches finite differences") {
    Rng rng(1);
    auto c = layer(L::conv(4, 3, 1), {{1, 8, 8}});
    randomize(*c, rng);
    CHECK(testing::layer_gradient_error(*c, {random_tensor({2, 1, 8, 8}, rng)}, Mode::Train, 7) < 1e-4);
}

TEST_CASE("zero upstream gradient gives zero gradients") {
    Rng rng(2);
    auto c = layer(L::conv(3, 3, 1), {{2, 5, 5}});
    randomize(*c, rng);
    c->forward(random_tensor({2, 2, 5, 5}, rng), Mode::Train, rng);
    const auto gx = c->backward(Tensor<double>({2, 3, 5, 5}));
    for (double v : gx[0].data()) CHECK(v == 0.0);
    for (auto& p : c->parameters())
        for (double v : p->grad.data()) CHECK(v == 0.0);
}

TEST_CASE("1x1 conv backward equals fully connected backward") {
    Rng rng(3);
    auto conv = layer(L::conv(3, 1, 0), {{5, 1, 1}});
    auto fc = layer(L::dense(3), {{5}});
    randomize(*conv, rng);
    fc->parameters()[0]->value = conv->parameters()[0]->value.reshaped({3, 5});
    fc->parameters()[1]->value = conv->parameters()[1]->value;
    const auto x = random_tensor({4, 5, 1, 1}, rng);
    const auto g = random_tensor({4, 3}, rng);
    const auto yc = conv->forward(x, Mode::Train, rng);
    const auto yf = fc->forward(x.reshaped({4, 5}), Mode::Train, rng);
    CHECK(max_abs_diff(yc.reshaped({4, 3}), yf) < 1e-12);
    const auto gc = conv->backward(g.reshaped({4, 3, 1, 1}));
    const auto gf = fc->backward(g);
    CHECK(max_abs_diff(gc[0].reshaped({4, 5}), gf[0]) < 1e-12);
    CHECK(max_abs_diff(conv->parameters()[0]->grad.reshaped({3, 5}), fc->parameters()[0]->grad) < 1e-12);
}

TEST_CASE("max pool forward, ties and odd extents") {
    auto p = layer(L::max_pool(), {{1, 2, 2}});
    Rng rng(0);
    const auto y = p->forward(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}), Mode::Train, rng);
    CHECK(y[0] == 4.0);

    auto q = layer(L::max_pool(), {{1, 4, 4}});
    const auto yc = q->forward(Tensor<double>({1, 1, 4, 4}, 0.25), Mode::Train, rng);
    CHECK(yc == Tensor<double>({1, 1, 2, 2}, 0.25));
    // Ties route the gradient to the first element in row-major order.
    const auto g = q->backward(Tensor<double>({1, 1, 2, 2}, 1.0));
    CHECK(g[0][0] == 1.0);
    CHECK(g[0][1] == 0.0);
    CHECK(g[0][4] == 0.0);

    CHECK_THROWS_AS(layer(L::max_pool(), {{1, 5, 4}}), ConfigError);
}

TEST_CASE("max pool gradient check and energy conservation") {
    Rng rng(4);
    auto p = layer(L::max_pool(), {{2, 6, 6}});
    CHECK(testing::layer_gradient_error(*p, {random_tensor({1, 2, 6, 6}, rng)}, Mode::Train, 3) < 1e-4);

    const auto x = random_tensor({3, 2, 6, 6}, rng);
    p->forward(x, Mode::Train, rng);
    const auto g = random_tensor({3, 2, 3, 3}, rng);
    const auto gx = p->backward(g);
    double a = 0, b = 0;
    for (double v : gx[0].data()) a += v;
    for (double v : g.data()) b += v;
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("global average pool") {
    Rng rng(0);
    auto gap = layer(L::global_avg_pool(), {{3, 4, 4}});
    CHECK(gap->forward(Tensor<double>({1, 3, 4, 4}, 1.0), Mode::Infer, rng) == Tensor<double>({1, 3}, 1.0));

    auto one = layer(L::global_avg_pool(), {{1, 1, 2}});
    CHECK(one->forward(Tensor<double>({1, 1, 1, 2}, {0, 2}), Mode::Infer, rng)[0] == 1.0);

    const auto x = random_tensor({2, 3, 5, 5}, rng);
    const auto y = gap->forward(x, Mode::Infer, rng);
    const auto oracle = reduce(Reduction::Mean, x.reshaped({6, 25}), 1);
    CHECK(max_abs_diff(y.reshaped({6}), oracle) < 1e-12);
}

TEST_CASE("batch norm modes") {
    Rng rng(5);
    auto bn = layer(L::batch_norm(), {{4}});
    // Fresh state: gamma 1, beta 0, running mean 0, running var 1.
    const auto x = random_tensor({8, 4}, rng);
    const auto yi = bn->forward(x, Mode::Infer, rng);
    CHECK(max_abs_diff(yi, x) < 1e-3);

    const auto yt = bn->forward(x, Mode::Train, rng);
    for (std::size_t j = 0; j < 4; ++j) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < 8; ++i) m += yt[i * 4 + j];
        m /= 8;
        for (std::size_t i = 0; i < 8; ++i) v += (yt[i * 4 + j] - m) * (yt[i * 4 + j] - m);
        v /= 8;
        CHECK(std::abs(m) < 1e-5);
        // Variance is var / (var + eps), slightly under 1.
        CHECK(v == doctest::Approx(1.0).epsilon(2e-2));
    }
    for (double r : bn->buffers()[1]->value.data()) CHECK(r >= 0.0);

    CHECK_THROWS_AS(bn->forward(random_tensor({1, 4}, rng), Mode::Train, rng), ConfigError);
}

TEST_CASE("batch norm gradient check in both modes") {
    Rng rng(6);
    auto bn = layer(L::batch_norm(), {{3, 2, 2}});
    randomize(*bn, rng);
    CHECK(testing::layer_gradient_error(*bn, {random_tensor({4, 3, 2, 2}, rng)}, Mode::Train, 9) < 1e-3);
    bn->buffers()[1]->value = random_tensor({3}, rng, 0.5, 2.0);
    CHECK(testing::layer_gradient_error(*bn, {random_tensor({4, 3, 2, 2}, rng)}, Mode::Infer, 9) < 1e-3);
}

TEST_CASE("dropout conventions") {
    Rng rng(7);
    auto d0 = layer(L::dropout(0.0), {{3}});
    const auto x = random_tensor({2, 3}, rng);
    CHECK(d0->forward(x, Mode::Train, rng) == x);
    CHECK(d0->forward(x, Mode::Infer, rng) == x);

    auto d = layer(L::dropout(0.5), {{2}});
    CHECK(d->forward(Tensor<double>({1, 2}, {2, 4}), Mode::Infer, rng) == Tensor<double>({1, 2}, {1, 2}));

    const auto big = random_tensor({4, 2}, rng, 1.0, 2.0);
    Rng a(42), b(42);
    const auto ya = d->forward(big, Mode::Train, a);
    const auto yb = d->forward(big, Mode::Train, b);
    CHECK(ya == yb);
    for (std::size_t i = 0; i < big.size(); ++i) CHECK((ya[i] == 0.0 || ya[i] == big[i]));

    CHECK_THROWS_AS(L::dropout(1.0).validate(), ConfigError);
    CHECK_THROWS_AS(L::dropout(-0.1).validate(), ConfigError);
}

TEST_CASE("activations") {
    Rng rng(8);
    auto relu = layer(L::act(ActivationKind::Relu), {{2}});
    CHECK(relu->forward(Tensor<double>({1, 2}, {-3, 2}), Mode::Infer, rng) == Tensor<double>({1, 2}, {0, 2}));

    auto sm = layer(L::act(ActivationKind::Softmax), {{2}});
    const auto half = sm->forward(Tensor<double>({1, 2}, 0.0), Mode::Infer, rng);
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(0.5));

    auto sm7 = layer(L::act(ActivationKind::Softmax), {{7}});
    for (int t = 0; t < 20; ++t) {
        const auto p = sm7->forward(random_tensor({3, 7}, rng, -30, 30), Mode::Infer, rng);
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) s += p[r * 7 + j];
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
    // Large logits do not overflow.
    const auto big = sm->forward(Tensor<double>({1, 2}, {1000, 0}), Mode::Infer, rng);
    CHECK(big[0] == doctest::Approx(1.0));

    auto sp = layer(L::act(ActivationKind::Softplus), {{1}});
    CHECK(sp->forward(Tensor<double>({1, 1}, 0.0), Mode::Infer, rng)[0] == doctest::Approx(std::log(2.0)));
    auto elu = layer(L::act(ActivationKind::Elu), {{1}});
    CHECK(elu->forward(Tensor<double>({1, 1}, -1.0), Mode::Infer, rng)[0] == doctest::Approx(std::exp(-1.0) - 1));
    CHECK_THROWS_AS(activation_from_string("swish"), ConfigError);
}

TEST_CASE("glorot and orthogonal initialization") {
    Rng rng(9);
    const auto w = init_weights<double>(InitSpec{}, {100, 100}, rng);
    const double s = std::sqrt(6.0 / 200.0);
    CHECK(s == doctest::Approx(0.1732).epsilon(1e-3));
    for (double v : w.data()) CHECK((v > -s && v < s));

    InitSpec orth{InitScheme::Orthogonal, 0.05, 0.05, 1.5};
    const auto q = init_weights<double>(orth, {16, 16}, rng);
    Tensor<double> qt({16, 16});
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) qt[i * 16 + j] = q[j * 16 + i];
    const auto qtq = matmul(qt, q);
    double worst = 0;
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) worst = std::max(worst, std::abs(qtq[i * 16 + j] - (i == j ? 2.25 : 0.0)));
    CHECK(worst < 1e-4);

    const auto conv = init_weights<double>(orth, {4, 2, 3, 3}, rng);
    CHECK(conv.shape() == Shape{4, 2, 3, 3});

    Rng a(5), b(5);
    CHECK(init_weights<float>(InitSpec{}, {8, 3}, a) == init_weights<float>(InitSpec{}, {8, 3}, b));
    CHECK_THROWS_AS(init_weights<float>(InitSpec{}, {8}, a), ConfigError);
}

TEST_CASE("forward is pure given input, state, mode and seed") {
    Rng rng(10);
    auto c = layer(L::conv(2, 3, 1), {{1, 6, 6}});
    randomize(*c, rng);
    const auto x = random_tensor({2, 1, 6, 6}, rng);
    Rng r1(1), r2(1);
    CHECK(c->forward(x, Mode::Train, r1) == c->forward(x, Mode::Train, r2));
}

TEST_CASE("backward without forward is an error") {
    auto fc = layer(L::dense(2), {{3}});
    CHECK_THROWS_AS(fc->backward(Tensor<double>({1, 2})), MissingCacheError);
}
