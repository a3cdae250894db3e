#include "sonarp/tracker.hpp"

#include "sonarp/proposals.hpp"
#include "sonarp/tmatch.hpp"

namespace sonarp {

TrackResult track(std::span<const SonarFrame> frames, const WindowScorer& scorer, const PairScorer& matcher,
                  const TrackerConfig& config) {
    TrackResult out;
    if (frames.empty()) return out;
    BoundingBox target;
    if (config.initial) {
        target = *config.initial;
    } else {
        const auto scored = scorer(frames[0]);
        const auto best = select_top_k(scored, 1);
        if (best.empty()) throw DataError("no proposals in the first frame to initialize the tracker");
        target = best[0];
    }
    out.templ = crop(frames[0].image, target);
    out.boxes.push_back(target);

    for (std::size_t t = 1; t < frames.size(); ++t) {
        const auto scored = scorer(frames[t]);
        const auto kept = nms(scored, config.st);
        const auto candidates = select_top_k(kept, config.top_k);
        if (candidates.empty()) {
            out.boxes.push_back(std::nullopt);
            continue;
        }
        std::vector<Tensor<float>> crops;
        for (const auto& c : candidates) crops.push_back(crop(frames[t].image, c));
        const auto scores = matcher(out.templ, crops);
        // Candidates are in descending objectness, so strict > keeps the
        // higher-objectness proposal on equal match scores.
        std::size_t best = 0;
        for (std::size_t i = 1; i < scores.size(); ++i)
            if (scores[i] > scores[best]) best = i;
        if (config.min_score && !(scores[best] > *config.min_score)) {
            out.boxes.push_back(std::nullopt);
        } else {
            out.boxes.push_back(candidates[best]);
        }
    }
    return out;
}

PairScorer cc_pair_scorer() {
    return [](const Tensor<float>& templ, std::span<const Tensor<float>> crops) {
        std::vector<double> s;
        for (const auto& c : crops) {
            try {
                s.push_back(cc_similarity(templ, c));
            } catch (const DegenerateInputError&) {
                s.push_back(-1.0);
            }
        }
        return s;
    };
}

}  // namespace sonarp
