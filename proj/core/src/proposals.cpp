#include "sonarp/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sonarp/csv.hpp"
#include "sonarp/train.hpp"

namespace sonarp {

double ObjectnessMap::sample(double y, double x) const {
    if (values.rank() != 2) throw DimensionError("objectness map must be [H, W]");
    const std::size_t h = values.dim(0), w = values.dim(1);
    const double fy = std::clamp((y - offset) / stride, 0.0, static_cast<double>(h - 1));
    const double fx = std::clamp((x - offset) / stride, 0.0, static_cast<double>(w - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double ty = fy - y0, tx = fx - x0;
    const float* p = values.raw();
    return (1 - ty) * ((1 - tx) * p[y0 * w + x0] + tx * p[y0 * w + x1]) +
           ty * ((1 - tx) * p[y1 * w + x0] + tx * p[y1 * w + x1]);
}

Tensor<float> ObjectnessMap::upsample(std::size_t height, std::size_t width) const {
    Tensor<float> out({height, width});
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            out[y * width + x] = static_cast<float>(sample(static_cast<double>(y), static_cast<double>(x)));
    return out;
}

std::vector<BoundingBox> score_windows(Network<float>& patch_net, const Tensor<float>& frame,
                                       std::span<const BoundingBox> windows, std::size_t batch_size) {
    if (patch_net.contract() != OutputContract::Score) {
        throw ConfigError("patch scorer must produce a single score, got " + to_string(patch_net.contract()));
    }
    std::vector<BoundingBox> out(windows.begin(), windows.end());
    if (windows.empty()) return out;
    const Shape in = patch_net.input_shapes().at(0);
    for (std::size_t b = 0; b < windows.size(); b += batch_size) {
        const std::size_t m = std::min(batch_size, windows.size() - b);
        std::vector<Tensor<float>> crops;
        for (std::size_t i = 0; i < m; ++i) {
            const auto& win = windows[b + i];
            if (static_cast<std::size_t>(win.h) != in[1] || static_cast<std::size_t>(win.w) != in[2]) {
                throw DimensionError("window size does not match the scorer input");
            }
            crops.push_back(crop(frame, win));
        }
        const Tensor<float> batch = stack(std::span<const Tensor<float>>(crops));
        const Tensor<float> scores = predict(patch_net, batch, m);
        for (std::size_t i = 0; i < m; ++i) out[b + i].score = std::clamp(static_cast<double>(scores[i]), 0.0, 1.0);
    }
    return out;
}

std::vector<BoundingBox> score_windows(const ObjectnessMap& map, std::size_t height, std::size_t width,
                                       std::span<const BoundingBox> windows) {
    const Tensor<float> up = map.upsample(height, width);
    std::vector<BoundingBox> out(windows.begin(), windows.end());
    for (auto& w : out) {
        const std::size_t cy = static_cast<std::size_t>(w.y + w.h / 2);
        const std::size_t cx = static_cast<std::size_t>(w.x + w.w / 2);
        if (cy >= height || cx >= width) throw DimensionError("window center outside the frame");
        w.score = std::clamp(static_cast<double>(up[cy * width + cx]), 0.0, 1.0);
    }
    return out;
}

ObjectnessMap fcn_objectness_map(Network<float>& fcn, const Tensor<float>& frame, int stride, int offset) {
    if (fcn.contract() != OutputContract::ObjectnessMap) throw ConfigError("network is not an FCN objectness model");
    if (frame.rank() != 3) throw DimensionError("frame must be [1, H, W]");
    Rng rng(0);
    const Tensor<float> batch = frame.reshaped({1, frame.dim(0), frame.dim(1), frame.dim(2)});
    const Tensor<float> out = fcn.forward(batch, Mode::Infer, rng);
    ObjectnessMap map;
    map.values = out.reshaped({out.dim(2), out.dim(3)});
    for (auto& v : map.values.data()) v = std::clamp(v, 0.0f, 1.0f);
    map.stride = stride;
    map.offset = offset;
    return map;
}

namespace {

void require_scores(std::span<const BoundingBox> boxes) {
    for (const auto& b : boxes)
        if (!b.score) throw DomainError("proposal without a score");
}

}  // namespace

std::vector<BoundingBox> select_by_threshold(std::span<const BoundingBox> scored, double threshold) {
    require_scores(scored);
    std::vector<BoundingBox> out;
    for (const auto& b : scored)
        if (*b.score >= threshold) out.push_back(b);
    return out;
}

std::vector<BoundingBox> select_top_k(std::span<const BoundingBox> scored, std::size_t k) {
    require_scores(scored);
    std::vector<BoundingBox> out(scored.begin(), scored.end());
    std::stable_sort(out.begin(), out.end(), [](const BoundingBox& a, const BoundingBox& b) { return *a.score > *b.score; });
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<BoundingBox> nms(std::span<const BoundingBox> scored, double threshold) {
    require_scores(scored);
    if (!(threshold > 0.0 && threshold <= 1.0)) throw DomainError("NMS threshold must lie in (0, 1]");
    std::vector<BoundingBox> sorted = select_top_k(scored, scored.size());
    std::vector<bool> removed(sorted.size(), false);
    std::vector<BoundingBox> keep;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (removed[i]) continue;
        keep.push_back(sorted[i]);
        for (std::size_t j = i + 1; j < sorted.size(); ++j)
            if (!removed[j] && iou(sorted[i], sorted[j]) > threshold) removed[j] = true;
    }
    return keep;
}

void write_proposals_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::vector<BoundingBox>>>& proposals,
                         bool with_class) {
    std::vector<std::string> header{"image_id", "x", "y", "w", "h", "score"};
    if (with_class) header.push_back("class");
    CsvWriter csv(path, header);
    for (const auto& [id, boxes] : proposals) {
        for (const auto& b : boxes) {
            std::vector<std::string> row{id, std::to_string(b.x), std::to_string(b.y), std::to_string(b.w),
                                         std::to_string(b.h), format_number(b.score.value_or(0.0))};
            if (with_class) row.push_back(b.label ? std::to_string(*b.label) : "");
            csv.row(row);
        }
    }
}

}  // namespace sonarp
