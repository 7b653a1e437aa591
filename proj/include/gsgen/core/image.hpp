#pragma once

#include "gsgen/core/math.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace gsgen {

/// Row-major image of `channels` interleaved doubles per pixel.
/// Color buffers use 3 channels, masks and depth maps use 1.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    Vec3 rgb(int x, int y) const;
    void set_rgb(int x, int y, const Vec3& c);

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const ImageBuffer& other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    /// Copy with every value clamped to [lo, hi].
    ImageBuffer clamped(double lo = 0.0, double hi = 1.0) const;

    /// Area-weighted resample to the given size.
    ImageBuffer resized(int width, int height) const;

    bool operator==(const ImageBuffer&) const = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Throws std::invalid_argument unless a and b have identical shapes.
void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what);

} // namespace gsgen
