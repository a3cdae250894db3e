#pragma once

#include <filesystem>

#include "sonarp/network.hpp"

namespace sonarp {

/// Model container, little-endian:
///   "FLSN" | u16 version | u32 n + n bytes JSON descriptor | u32 tensor count
///   | per tensor: u16 n + name | u8 dtype (0 = f32) | u8 rank | u32 extents | raw data
/// Parameters come first, then batch-norm running statistics, in node order.
inline constexpr std::uint16_t kModelVersion = 1;

std::string serialize_model(const Network<float>& net);
/// Throws MagicMismatchError, VersionMismatchError, TruncatedFileError or
/// FormatError.
Network<float> deserialize_model(const std::string& bytes);

void save_model(const Network<float>& net, const std::filesystem::path& path);
Network<float> load_model(const std::filesystem::path& path);

}  // namespace sonarp
