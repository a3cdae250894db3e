#include <doctest.h>

#include <chrono>
#include <thread>

#include "oracles.hpp"
#include "sonarp/metrics.hpp"

using namespace sonarp;
using Rng = std::mt19937_64;

TEST_CASE("accuracy") {
    std::vector<std::size_t> y(20, 1), p(20, 1);
    CHECK(accuracy(p, y) == 1.0);
    p[3] = 0;
    CHECK(accuracy(p, y) == doctest::Approx(0.95));
    std::vector<std::size_t> wrong(20, 2);
    CHECK(accuracy(wrong, y) == 0.0);
    CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), DimensionError);
    CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{1}, y), DimensionError);
}

TEST_CASE("recall and ABO examples") {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {20, 20, 10, 10}};
    CHECK(detection_recall(gt, gt).recall == 1.0);
    CHECK(detection_recall({}, gt).recall == 0.0);
    CHECK(detection_recall(gt, {}).recall == 1.0);
    CHECK(average_best_overlap(gt, gt) == 1.0);
    CHECK_THROWS_AS(average_best_overlap({}, gt), DomainError);

    const std::vector<BoundingBox> one{{0, 0, 10, 10}};
    const std::vector<BoundingBox> p{{0, 0, 10, 7}};
    CHECK(average_best_overlap(one, p) == doctest::Approx(0.7));
    CHECK(average_best_overlap(one, {}) == 0.0);

    // One proposal covering two boxes is credited once.
    const std::vector<BoundingBox> twins{{0, 0, 10, 10}, {1, 0, 10, 10}};
    const std::vector<BoundingBox> single{{0, 0, 11, 10}};
    const auto r = detection_recall(single, twins);
    CHECK(r.detected == 1);
    CHECK(r.recall == 0.5);
}

TEST_CASE("recall and ABO match exhaustive oracles") {
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        const auto truth = oracle::random_boxes(rng, 1 + t % 5);
        const auto props = oracle::random_boxes(rng, t % 7);
        for (double ot : {0.1, 0.3, 0.5}) {
            const auto r = detection_recall(props, truth, ot);
            CHECK(r.detected == oracle::max_detected(props, truth, ot));
            CHECK(r.recall == static_cast<double>(r.detected) / static_cast<double>(truth.size()));
            // The reported assignment is valid and one-to-one.
            std::vector<int> seen;
            for (std::size_t g = 0; g < truth.size(); ++g) {
                if (r.match[g] < 0) continue;
                CHECK(iou(truth[g], props[r.match[g]]) >= ot);
                seen.push_back(r.match[g]);
            }
            std::sort(seen.begin(), seen.end());
            CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
        }
        CHECK(average_best_overlap(truth, props) == doctest::Approx(oracle::abo(truth, props)).epsilon(1e-12));
    }
}

TEST_CASE("recall and ABO grow with more proposals and shrink with the overlap") {
    Rng rng(32);
    for (int t = 0; t < 50; ++t) {
        const auto truth = oracle::random_boxes(rng, 4);
        const auto props = oracle::random_boxes(rng, 12);
        double prev_r = 0, prev_a = 0;
        for (std::size_t k = 0; k <= props.size(); ++k) {
            const std::vector<BoundingBox> head(props.begin(), props.begin() + static_cast<long>(k));
            const double r = detection_recall(head, truth).recall;
            const double a = average_best_overlap(truth, head);
            CHECK(r >= prev_r);
            CHECK(a >= prev_a);
            prev_r = r;
            prev_a = a;
        }
        double prev = 1.0;
        for (int i = 1; i <= 9; ++i) {
            const double r = detection_recall(props, truth, i / 10.0).recall;
            CHECK(r <= prev);
            prev = r;
        }
    }
}

TEST_CASE("auc examples") {
    CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{1, 1, 0, 0}).auc == 1.0);
    CHECK(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 1, 0}).auc == 0.5);
    CHECK(roc_auc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 1, 0, 0}).auc ==
          doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DomainError);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), DimensionError);
}

TEST_CASE("auc matches the pairwise form and flips to its complement") {
    Rng rng(33);
    std::uniform_int_distribution<int> q(0, 10), bit(0, 1);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + t % 30;
        std::vector<double> s(n);
        std::vector<int> y(n), flipped(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = q(rng) / 10.0;
            y[i] = bit(rng);
        }
        y[0] = 1;
        y[1] = 0;
        for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
        const auto roc = roc_auc(s, y);
        CHECK(std::abs(roc.auc - oracle::auc(s, y)) < 1e-9);
        CHECK(std::abs(roc.auc + roc_auc(s, flipped).auc - 1.0) < 1e-9);
        CHECK(roc.points.front().fpr == 0.0);
        CHECK(roc.points.back().tpr == 1.0);
        for (std::size_t i = 1; i < roc.points.size(); ++i) {
            CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);
            CHECK(roc.points[i].tpr >= roc.points[i - 1].tpr);
        }
    }
}

TEST_CASE("correctly tracked frames") {
    const std::vector<BoundingBox> gt{{0, 0, 10, 10}, {5, 5, 10, 10}, {9, 9, 10, 10}};
    std::vector<std::optional<BoundingBox>> same(gt.begin(), gt.end());
    CHECK(ctf(same, gt) == 1.0);
    std::vector<std::optional<BoundingBox>> none(3);
    CHECK(ctf(none, gt) == 0.0);
    CHECK_THROWS_AS(ctf(none, std::vector<BoundingBox>(2)), DimensionError);

    std::vector<std::optional<BoundingBox>> off{BoundingBox{0, 0, 10, 8}, BoundingBox{6, 5, 10, 10}, std::nullopt};
    double prev = 1.0;
    for (int i = 0; i <= 10; ++i) {
        const double v = ctf(off, gt, i / 10.0);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("bench statistics") {
    int calls = 0;
    const auto r = bench([&] { ++calls; }, 2);
    CHECK(calls == 3);
    CHECK(r.repetitions == 2);
    CHECK_THROWS_AS(bench([] {}, 1), ConfigError);

    const auto sleep = bench([] { std::this_thread::sleep_for(std::chrono::milliseconds(5)); }, 10);
    CHECK(sleep.mean_ms >= 5.0);
    CHECK(sleep.std_ms < 0.1 * sleep.mean_ms);

    const std::vector<double> v{1, 2, 3, 4};
    const auto [m, s] = mean_std(v);
    CHECK(m == 2.5);
    CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(mean_std(std::vector<double>{7}).second == 0.0);
}
