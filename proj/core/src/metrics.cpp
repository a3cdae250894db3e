#include "sonarp/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace sonarp {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw DimensionError("accuracy needs equally sized, non-empty inputs");
    }
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) ok += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

RecallResult detection_recall(std::span<const BoundingBox> proposals, std::span<const BoundingBox> truth,
                              double overlap) {
    RecallResult r;
    r.total = truth.size();
    r.match.assign(truth.size(), -1);
    if (truth.empty()) return r;

    std::vector<std::vector<int>> adj(truth.size());
    for (std::size_t g = 0; g < truth.size(); ++g)
        for (std::size_t p = 0; p < proposals.size(); ++p)
            if (iou(truth[g], proposals[p]) >= overlap) adj[g].push_back(static_cast<int>(p));

    // Kuhn's augmenting paths.
    std::vector<int> owner(proposals.size(), -1);
    std::vector<char> seen;
    std::function<bool(int)> augment = [&](int g) {
        for (int p : adj[g]) {
            if (seen[p]) continue;
            seen[p] = 1;
            if (owner[p] < 0 || augment(owner[p])) {
                owner[p] = g;
                return true;
            }
        }
        return false;
    };
    for (std::size_t g = 0; g < truth.size(); ++g) {
        seen.assign(proposals.size(), 0);
        augment(static_cast<int>(g));
    }
    for (std::size_t p = 0; p < proposals.size(); ++p)
        if (owner[p] >= 0) r.match[owner[p]] = static_cast<int>(p);
    r.detected = static_cast<std::size_t>(std::count_if(r.match.begin(), r.match.end(), [](int m) { return m >= 0; }));
    r.recall = static_cast<double>(r.detected) / static_cast<double>(r.total);
    return r;
}

double average_best_overlap(std::span<const BoundingBox> truth, std::span<const BoundingBox> proposals) {
    if (truth.empty()) throw DomainError("average best overlap is undefined without ground truth");
    double sum = 0;
    for (const auto& g : truth) {
        double best = 0;
        for (const auto& p : proposals) best = std::max(best, iou(g, p));
        sum += best;
    }
    return sum / static_cast<double>(truth.size());
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1) ++pos;
        else if (l == 0) ++neg;
        else throw DomainError("ROC labels must be 0 or 1");
    }
    if (pos == 0 || neg == 0) throw DomainError("ROC needs both positive and negative samples");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve c;
    c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] == 1 ? tp : fp) += 1;
        const RocPoint p{static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, t};
        const RocPoint& q = c.points.back();
        c.auc += (p.fpr - q.fpr) * (p.tpr + q.tpr) / 2.0;
        c.points.push_back(p);
    }
    return c;
}

double ctf(std::span<const std::optional<BoundingBox>> predicted, std::span<const BoundingBox> truth,
           double overlap) {
    if (predicted.size() != truth.size()) throw DimensionError("predicted and ground-truth sequences differ in length");
    if (truth.empty()) throw DimensionError("empty sequence");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] && iou(*predicted[i], truth[i]) >= overlap) ++ok;
    return static_cast<double>(ok) / static_cast<double>(truth.size());
}

std::pair<double, double> mean_std(std::span<const double> v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

BenchResult bench(const std::function<void()>& op, std::size_t repetitions) {
    if (repetitions < 2) throw ConfigError("bench needs at least two repetitions");
    op();
    std::vector<double> ms;
    for (std::size_t i = 0; i < repetitions; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        op();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const auto [m, s] = mean_std(ms);
    return {m, s, repetitions};
}

}  // namespace sonarp
