#pragma once

#include <functional>

#include "sonarp/synth.hpp"

namespace sonarp {

/// Objectness-scored windows of a frame.
using WindowScorer = std::function<std::vector<BoundingBox>(const SonarFrame&)>;
/// Similarity of each candidate crop to the template; higher is better.
using PairScorer = std::function<std::vector<double>(const Tensor<float>& templ, std::span<const Tensor<float>>)>;

struct TrackerConfig {
    double st = 0.7;        // NMS threshold on the proposals
    std::size_t top_k = 10;  // proposals matched per frame
    /// A match is declared only when the best score exceeds this value.
    std::optional<double> min_score;
    std::optional<BoundingBox> initial;  // first-frame target; default is the best proposal
};

struct TrackResult {
    std::vector<std::optional<BoundingBox>> boxes;  // one per frame
    Tensor<float> templ;
};

/// Frame 0 fixes the template (never updated). Each later frame: NMS, top-k
/// by objectness, the best-matching proposal wins with ties going to the
/// higher objectness. Frames without proposals or without a match emit
/// nothing.
TrackResult track(std::span<const SonarFrame> frames, const WindowScorer& scorer, const PairScorer& matcher,
                  const TrackerConfig& config);

/// Pairwise scores from cc_similarity; constant crops score -1.
PairScorer cc_pair_scorer();

}  // namespace sonarp
