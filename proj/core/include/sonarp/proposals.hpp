#pragma once

#include <filesystem>

#include "sonarp/geometry.hpp"
#include "sonarp/network.hpp"

namespace sonarp {

/// Dense objectness raster: cell (i, j) corresponds to frame pixel
/// (offset + stride * i, offset + stride * j).
struct ObjectnessMap {
    Tensor<float> values;  // [H', W'], all in [0, 1]
    int stride = 1;
    int offset = 0;

    /// Bilinear interpolation of the raster at frame pixel (y, x), clamped at
    /// the borders.
    double sample(double y, double x) const;
    /// Map resampled to every pixel of an H x W frame.
    Tensor<float> upsample(std::size_t height, std::size_t width) const;
};

/// Window center (x + w/2, y + h/2), the point a dense map is read at.
inline std::pair<double, double> window_center(const BoundingBox& b) {
    return {b.y + b.h / 2.0, b.x + b.w / 2.0};
}

/// Scores every window with a patch network (Score contract, [1, 96, 96] input).
std::vector<BoundingBox> score_windows(Network<float>& patch_net, const Tensor<float>& frame,
                                       std::span<const BoundingBox> windows, std::size_t batch_size = 128);
/// Scores windows by reading a dense map at each window center after
/// bilinear upsampling to frame size.
std::vector<BoundingBox> score_windows(const ObjectnessMap& map, std::size_t height, std::size_t width,
                                       std::span<const BoundingBox> windows);

/// Runs an FCN (ObjectnessMap contract) on a whole [1, H, W] frame. The map
/// stride is the network's pooling factor and the offset is half the patch.
ObjectnessMap fcn_objectness_map(Network<float>& fcn, const Tensor<float>& frame, int stride = 4, int offset = 48);

/// Windows with score >= threshold, in input order.
std::vector<BoundingBox> select_by_threshold(std::span<const BoundingBox> scored, double threshold);
/// The k highest scores, descending; ties keep input (row-major) order.
std::vector<BoundingBox> select_top_k(std::span<const BoundingBox> scored, std::size_t k);
/// Greedy non-maximum suppression: keep the best remaining box, drop every
/// box with IoU > threshold against it, repeat. Output sorted by score.
std::vector<BoundingBox> nms(std::span<const BoundingBox> scored, double threshold);

/// image_id,x,y,w,h,score[,class]
void write_proposals_csv(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, std::vector<BoundingBox>>>& proposals,
                         bool with_class = false);

}  // namespace sonarp
