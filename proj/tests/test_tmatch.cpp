#include <doctest.h>

#include "sonarp/tmatch.hpp"
#include "support.hpp"

using namespace sonarp;
using testing::random_tensor;

namespace {

double cc_oracle(const Tensor<float>& a, const Tensor<float>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

Tensor<float> affine(const Tensor<float>& t, float a, float b) {
    Tensor<float> out = t;
    for (auto& v : out.data()) v = a * v + b;
    return out;
}

}  // namespace

TEST_CASE("cross-correlation examples") {
    Rng rng(41);
    const auto img = random_tensor<float>({1, 8, 8}, rng, 0, 1);
    CHECK(cc_similarity(img, img) == doctest::Approx(1.0).epsilon(1e-6));

    double mean = 0;
    for (float v : img.data()) mean += v / 64.0;
    CHECK(cc_similarity(affine(img, -1.0f, static_cast<float>(2 * mean)), img) == doctest::Approx(-1.0).epsilon(1e-6));

    for (int t = 0; t < 50; ++t) {
        const auto a = random_tensor<float>({1, 12, 9}, rng), b = random_tensor<float>({1, 12, 9}, rng);
        const double v = cc_similarity(a, b);
        CHECK(std::abs(v - cc_oracle(a, b)) < 1e-6);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(std::abs(cc_similarity(a, affine(b, 3.5f, -0.25f)) - v) < 1e-5);
    }

    CHECK_THROWS_AS(cc_similarity(Tensor<float>({1, 4, 4}, 0.3f), img.reshaped({1, 4, 16}).reshaped({1, 8, 8})),
                    DimensionError);
    CHECK_THROWS_AS(cc_similarity(Tensor<float>({1, 8, 8}, 0.3f), img), DegenerateInputError);
}

TEST_CASE("squared difference examples") {
    Rng rng(42);
    const auto a = random_tensor<float>({1, 6, 6}, rng), b = random_tensor<float>({1, 6, 6}, rng);
    CHECK(sqd_similarity(a, a) == 0.0);
    CHECK(sqd_similarity(a, affine(a, 1.0f, 1.0f)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sqd_similarity(a, b) == sqd_similarity(b, a));
}

TEST_CASE("1-NN template classification") {
    Rng rng(43);
    TemplateSet set;
    for (std::size_t c = 0; c < 3; ++c)
        for (int k = 0; k < 4; ++k) set.add(random_tensor<float>({1, 10, 10}, rng), c);

    CHECK(tm_classify(set.patches[5], set, TmMetric::CC) == set.labels[5]);
    CHECK(tm_classify(set.patches[9], set, TmMetric::SQD) == set.labels[9]);

    TemplateSet single;
    single.add(random_tensor<float>({1, 10, 10}, rng), 7);
    single.add(random_tensor<float>({1, 10, 10}, rng), 7);
    CHECK(tm_classify(random_tensor<float>({1, 10, 10}, rng), single, TmMetric::CC) == 7);

    for (int q = 0; q < 20; ++q) {
        const auto img = random_tensor<float>({1, 10, 10}, rng);
        std::size_t cc_best = 0, sqd_best = 0;
        for (std::size_t t = 1; t < set.size(); ++t) {
            if (cc_similarity(set.patches[t], img) > cc_similarity(set.patches[cc_best], img)) cc_best = t;
            if (sqd_similarity(set.patches[t], img) < sqd_similarity(set.patches[sqd_best], img)) sqd_best = t;
        }
        CHECK(tm_classify(img, set, TmMetric::CC) == set.labels[cc_best]);
        CHECK(tm_classify(img, set, TmMetric::SQD) == set.labels[sqd_best]);

        // SQD decisions do not depend on template order.
        TemplateSet reversed;
        for (std::size_t t = set.size(); t-- > 0;) reversed.add(set.patches[t], set.labels[t]);
        CHECK(tm_classify(img, reversed, TmMetric::SQD) == set.labels[sqd_best]);
    }

    // Ties go to the lowest template index.
    TemplateSet twins;
    const auto p = random_tensor<float>({1, 10, 10}, rng);
    twins.add(p, 1);
    twins.add(p, 2);
    CHECK(tm_classify(random_tensor<float>({1, 10, 10}, rng), twins, TmMetric::SQD) == 1);

    // Constant templates are skipped; all-constant is an error.
    TemplateSet flat;
    flat.add(Tensor<float>({1, 10, 10}, 0.5f), 0);
    CHECK_THROWS_AS(tm_classify(p, flat, TmMetric::CC), DegenerateInputError);
    flat.add(p, 4);
    CHECK(tm_classify(p, flat, TmMetric::CC) == 4);
    CHECK_THROWS_AS(tm_classify(p, TemplateSet{}, TmMetric::CC), ConfigError);
    CHECK_THROWS_AS(set.add(Tensor<float>({1, 3, 3}), 0), DimensionError);
}

TEST_CASE("more templates never lower training accuracy") {
    Rng rng(44);
    std::vector<Tensor<float>> pool;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 30; ++i) {
        pool.push_back(random_tensor<float>({1, 8, 8}, rng));
        labels.push_back(static_cast<std::size_t>(i % 3));
    }
    double prev = 0;
    for (std::size_t per_class = 1; per_class <= 10; ++per_class) {
        TemplateSet set;
        for (std::size_t i = 0; i < 3 * per_class; ++i) set.add(pool[i], labels[i]);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < set.size(); ++i) correct += tm_classify(set.patches[i], set, TmMetric::SQD) == set.labels[i];
        const double acc = static_cast<double>(correct) / static_cast<double>(set.size());
        CHECK(acc >= prev);
        prev = acc;
    }
}

TEST_CASE("template-matching objectness map") {
    Rng rng(45);
    auto frame = random_tensor<float>({1, 30, 40}, rng, 0, 1);
    const auto templ = crop(frame, BoundingBox{12, 8, 10, 10});
    const std::vector<Tensor<float>> one{templ};
    const auto map = tm_objectness_map(frame, one, 1);
    REQUIRE(map.values.shape() == Shape{21, 31});
    CHECK(map.values[8 * 31 + 12] == doctest::Approx(1.0f).epsilon(1e-5));
    for (float v : map.values.data()) CHECK((v >= 0.0f && v <= 1.0f));

    // Singleton set equals clamped sliding CC, at stride 2.
    const auto strided = tm_objectness_map(frame, one, 2);
    for (std::size_t i = 0; i < strided.values.dim(0); ++i) {
        for (std::size_t j = 0; j < strided.values.dim(1); ++j) {
            const BoundingBox b{static_cast<int>(2 * j), static_cast<int>(2 * i), 10, 10};
            const double expect = std::max(0.0, cc_oracle(templ, crop(frame, b)));
            CHECK(strided.values[i * strided.values.dim(1) + j] == doctest::Approx(expect).epsilon(1e-4));
        }
    }

    // Max over templates.
    const std::vector<Tensor<float>> two{templ, random_tensor<float>({1, 10, 10}, rng)};
    const auto both = tm_objectness_map(frame, two, 3);
    const auto first = tm_objectness_map(frame, one, 3);
    const std::vector<Tensor<float>> second_only{two[1]};
    const auto second = tm_objectness_map(frame, second_only, 3);
    for (std::size_t i = 0; i < both.values.size(); ++i)
        CHECK(both.values[i] == doctest::Approx(std::max(first.values[i], second.values[i])).epsilon(1e-6));

    CHECK_THROWS_AS(tm_objectness_map(crop(frame, BoundingBox{0, 0, 5, 5}), one), DimensionError);
}
