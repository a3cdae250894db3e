#include "sonarp/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace sonarp {

void BoundingBox::validate() const {
    if (w <= 0 || h <= 0) throw DomainError("bounding box extents must be positive");
    if (score && !(*score >= 0.0 && *score <= 1.0)) throw DomainError("bounding box score outside [0, 1]");
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    const long ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const long iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const long inter = ix * iy;
    if (inter == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

double objectness_label(double v, double eps) {
    if (!(eps > 0.0 && eps < 0.5)) throw DomainError("objectness epsilon must lie in (0, 0.5)");
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("iou outside [0, 1]");
    if (v >= 1.0 - eps) return 1.0;
    if (v <= eps) return 0.0;
    return v;
}

FovMask FovMask::full(std::size_t height, std::size_t width, bool value) {
    return {height, width, std::vector<std::uint8_t>(height * width, value ? 1 : 0)};
}

std::size_t FovMask::count() const { return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1)); }

bool FovMask::contains(const BoundingBox& b) const {
    return at(b.y, b.x) && at(b.y, b.x + b.w - 1) && at(b.y + b.h - 1, b.x) && at(b.y + b.h - 1, b.x + b.w - 1);
}

std::vector<BoundingBox> sliding_windows(std::size_t height, std::size_t width, const FovMask& mask, int window,
                                         int stride) {
    if (window <= 0 || stride <= 0) throw ConfigError("window and stride must be positive");
    if (height < static_cast<std::size_t>(window) || width < static_cast<std::size_t>(window)) {
        throw DimensionError("frame " + std::to_string(height) + "x" + std::to_string(width) +
                             " smaller than window " + std::to_string(window));
    }
    if (mask.height != height || mask.width != width) throw DimensionError("mask extents differ from frame");
    std::vector<BoundingBox> out;
    for (int y = 0; y + window <= static_cast<int>(height); y += stride) {
        for (int x = 0; x + window <= static_cast<int>(width); x += stride) {
            BoundingBox b{x, y, window, window, std::nullopt, std::nullopt};
            if (mask.contains(b)) out.push_back(b);
        }
    }
    return out;
}

std::vector<double> label_windows(std::span<const BoundingBox> windows, std::span<const BoundingBox> truth,
                                  double eps) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        double best = 0.0;
        for (const auto& g : truth) best = std::max(best, iou(w, g));
        out.push_back(objectness_label(best, eps));
    }
    return out;
}

Tensor<float> crop(const Tensor<float>& frame, const BoundingBox& box) {
    if (frame.rank() != 3) throw DimensionError("crop expects a [C, H, W] frame");
    box.validate();
    const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
    if (box.x < 0 || box.y < 0 || static_cast<std::size_t>(box.x + box.w) > w ||
        static_cast<std::size_t>(box.y + box.h) > h) {
        throw DimensionError("crop box leaves the frame");
    }
    Tensor<float> out({c, static_cast<std::size_t>(box.h), static_cast<std::size_t>(box.w)});
    for (std::size_t k = 0; k < c; ++k)
        for (int y = 0; y < box.h; ++y) {
            const float* src = frame.raw() + (k * h + box.y + y) * w + box.x;
            std::copy(src, src + box.w, out.raw() + (k * box.h + y) * box.w);
        }
    return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t oh, std::size_t ow) {
    if (image.rank() != 3 || oh == 0 || ow == 0) throw DimensionError("resize expects [C, H, W] and positive size");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor<float> out({c, oh, ow});
    const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
    for (std::size_t y = 0; y < oh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - y0;
        for (std::size_t x = 0; x < ow; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - x0;
            for (std::size_t k = 0; k < c; ++k) {
                const float* p = image.raw() + k * h * w;
                const double v = (1 - ty) * ((1 - tx) * p[y0 * w + x0] + tx * p[y0 * w + x1]) +
                                 ty * ((1 - tx) * p[y1 * w + x0] + tx * p[y1 * w + x1]);
                out[(k * oh + y) * ow + x] = static_cast<float>(v);
            }
        }
    }
    return out;
}

Tensor<float> flip_lr(const Tensor<float>& image) {
    if (image.rank() != 3) throw DimensionError("flip expects [C, H, W]");
    Tensor<float> out = image;
    const std::size_t rows = image.dim(0) * image.dim(1), w = image.dim(2);
    for (std::size_t r = 0; r < rows; ++r) std::reverse(out.raw() + r * w, out.raw() + (r + 1) * w);
    return out;
}

Tensor<float> flip_ud(const Tensor<float>& image) {
    if (image.rank() != 3) throw DimensionError("flip expects [C, H, W]");
    Tensor<float> out(image.shape());
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h; ++y)
            std::copy(image.raw() + (k * h + y) * w, image.raw() + (k * h + y + 1) * w,
                      out.raw() + (k * h + (h - 1 - y)) * w);
    return out;
}

}  // namespace sonarp
