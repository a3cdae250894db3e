#pragma once

#include "sonarp/proposals.hpp"

namespace sonarp {

/// Pearson correlation of two equally shaped patches, in [-1, 1]. Throws
/// DegenerateInputError when either patch is constant.
double cc_similarity(const Tensor<float>& templ, const Tensor<float>& image);
/// Mean squared difference; lower means more similar.
double sqd_similarity(const Tensor<float>& templ, const Tensor<float>& image);

enum class TmMetric { CC, SQD };
std::string to_string(TmMetric m);
TmMetric tm_metric_from_string(const std::string& name);

struct TemplateSet {
    std::vector<Tensor<float>> patches;
    std::vector<std::size_t> labels;

    void add(Tensor<float> patch, std::size_t label);
    std::size_t size() const noexcept { return patches.size(); }
    /// Throws DimensionError on mixed shapes or a label count mismatch.
    void validate() const;
};

/// Label of the best template (max CC or min SQD); ties go to the lowest
/// template index. Constant templates are skipped under CC; if every
/// candidate is degenerate DegenerateInputError is thrown.
std::size_t tm_classify(const Tensor<float>& image, const TemplateSet& templates, TmMetric metric);

/// Sliding CC of every template over a [1, H, W] frame at the given stride,
/// max over templates, negatives clamped to 0. Window positions with zero
/// variance score 0. Throws DimensionError when the frame is smaller than a
/// template.
ObjectnessMap tm_objectness_map(const Tensor<float>& frame, std::span<const Tensor<float>> templates, int stride = 1);

}  // namespace sonarp
