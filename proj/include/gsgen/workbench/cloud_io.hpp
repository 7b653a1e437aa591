#pragma once

#include "gsgen/core/gaussian.hpp"
#include "gsgen/io/codec.hpp"

#include <filesystem>
#include <stdexcept>

namespace gsgen {

inline constexpr int kCloudFormatVersion = 1;

/// Malformed, truncated or unsupported cloud data.
class CloudFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// ASCII header
///   gsgen-cloud <version>
///   fields center.x center.y ... color.b
///   count <n>
///   end_header
/// then n records of 14 little-endian float32 values in field order.
Bytes encode_cloud(const GaussianCloud& cloud);
GaussianCloud decode_cloud(std::span<const std::uint8_t> bytes);

void save_cloud(const std::filesystem::path& path, const GaussianCloud& cloud);
GaussianCloud load_cloud(const std::filesystem::path& path);

} // namespace gsgen
