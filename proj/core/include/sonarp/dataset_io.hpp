#pragma once

#include <filesystem>
#include <vector>

#include "sonarp/synth.hpp"

namespace sonarp {

struct SonarDataset {
    SceneConfig config;
    std::vector<SonarFrame> frames;
};

/// Writes images/<id>.png (8-bit gray), masks/<id>.png (1-bit),
/// annotations.jsonl and config.json under `dir`, creating it if needed.
void save_dataset(const std::filesystem::path& dir, const SonarDataset& data);

/// Reads a directory written by save_dataset. A malformed annotation line
/// throws ParseError with its line number; a missing image or mask throws
/// DataError.
SonarDataset load_dataset(const std::filesystem::path& dir);

/// 8-bit grayscale PNG of a [1, H, W] tensor in [0, 1] (values are clamped
/// and rounded).
void write_png_gray(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_png_gray(const std::filesystem::path& path);

}  // namespace sonarp
