#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sonarp/tensor.hpp"

namespace sonarp {

/// Axis-aligned box in pixels; (x, y) is the top-left corner.
struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;
    std::optional<int> label;
    std::optional<double> score;

    long area() const { return static_cast<long>(w) * h; }
    /// Throws DomainError for non-positive extents or a score outside [0, 1].
    void validate() const;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// |A n B| / |A u B|, 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

/// 1 when iou >= 1 - eps, 0 when iou <= eps, iou in between.
double objectness_label(double iou, double eps = 0.2);

/// Boolean raster marking the valid sonar field of view.
struct FovMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major, 0 or 1

    static FovMask full(std::size_t height, std::size_t width, bool value = true);
    bool at(long y, long x) const {
        return y >= 0 && x >= 0 && static_cast<std::size_t>(y) < height && static_cast<std::size_t>(x) < width &&
               pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] != 0;
    }
    std::size_t count() const;
    /// True when all four corners of the box are inside the mask.
    bool contains(const BoundingBox& b) const;
};

/// Windows on the grid {0, s, 2s, ...} whose four corners lie in the mask,
/// in row-major order. Throws DimensionError when the frame is smaller than
/// the window or the mask extents differ from the frame.
std::vector<BoundingBox> sliding_windows(std::size_t height, std::size_t width, const FovMask& mask, int window = 96,
                                         int stride = 8);

/// Objectness per window from its best IoU against the ground truth.
std::vector<double> label_windows(std::span<const BoundingBox> windows, std::span<const BoundingBox> truth,
                                  double eps = 0.2);

/// Copy of frame[:, y:y+h, x:x+w] for a [C, H, W] frame; throws
/// DimensionError when the box leaves the frame.
Tensor<float> crop(const Tensor<float>& frame, const BoundingBox& box);

/// Bilinear resize of a [C, H, W] image (pixel centers aligned).
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t height, std::size_t width);

/// Left-right and up-down mirror images of a [C, H, W] tensor.
Tensor<float> flip_lr(const Tensor<float>& image);
Tensor<float> flip_ud(const Tensor<float>& image);

}  // namespace sonarp
