#pragma once

#include <functional>

#include "sonarp/geometry.hpp"

namespace sonarp {

/// Fraction of equal entries; throws DimensionError on empty or unequal input.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

struct RecallResult {
    std::size_t detected = 0;
    std::size_t total = 0;
    double recall = 1.0;
    /// Index of the proposal credited to each ground-truth box, -1 if none.
    std::vector<int> match;
};

/// A ground-truth box is detected when a proposal overlaps it with
/// IoU >= overlap. Each proposal is credited to at most one box; the
/// assignment maximizes the number of detected boxes. Recall is 1 for empty
/// ground truth.
RecallResult detection_recall(std::span<const BoundingBox> proposals, std::span<const BoundingBox> truth,
                              double overlap = 0.5);

/// Mean over ground truth of the best IoU of any proposal. Throws DomainError
/// for empty ground truth.
double average_best_overlap(std::span<const BoundingBox> truth, std::span<const BoundingBox> proposals);

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
    double threshold = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // starts at (0, 0) with threshold +inf
    double auc = 0;
};

/// Curve over the distinct scores, AUC by the trapezoidal rule (equal to
/// the pairwise ranking probability with ties counted as 1/2). Throws
/// DomainError unless both labels 0 and 1 are present.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of frames whose predicted box overlaps the truth with
/// IoU >= overlap; frames without a prediction count as failures.
double ctf(std::span<const std::optional<BoundingBox>> predicted, std::span<const BoundingBox> truth,
           double overlap = 0.5);

struct BenchResult {
    double mean_ms = 0;
    double std_ms = 0;
    std::size_t repetitions = 0;
};

/// Wall-clock statistics of `repetitions` timed runs after one untimed
/// warm-up. Throws ConfigError when repetitions < 2.
BenchResult bench(const std::function<void()>& op, std::size_t repetitions = 100);

/// Sample mean and standard deviation (n - 1), std 0 for fewer than 2 values.
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace sonarp
