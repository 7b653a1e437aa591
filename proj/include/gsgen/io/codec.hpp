#pragma once

#include "gsgen/core/image.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gsgen {

using Bytes = std::vector<std::uint8_t>;

/// PNG of a 1, 3 or 4 channel buffer with values in [0,1] (clamped).
/// `bit_depth` is 8 or 16.
Bytes encode_png(const ImageBuffer& image, int bit_depth = 8);

/// Decodes gray, gray+alpha, RGB or RGBA at 8 or 16 bits. Gray+alpha is
/// returned as RGBA. Values are scaled to [0,1]. Throws std::runtime_error.
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const ImageBuffer& image, int bit_depth = 8);
ImageBuffer read_png(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::runtime_error on characters outside the standard alphabet.
Bytes base64_decode(std::string_view text);

Bytes read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace gsgen
