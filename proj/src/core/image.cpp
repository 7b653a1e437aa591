#include "gsgen/core/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gsgen {

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    if (channels != 1 && channels != 3 && channels != 4) {
        throw std::invalid_argument("image channels must be 1, 3 or 4");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Vec3 ImageBuffer::rgb(int x, int y) const {
    const std::size_t i = index(x, y, 0);
    if (channels_ == 1) {
        return Vec3::Constant(data_[i]);
    }
    return Vec3(data_[i], data_[i + 1], data_[i + 2]);
}

void ImageBuffer::set_rgb(int x, int y, const Vec3& c) {
    const std::size_t i = index(x, y, 0);
    for (int k = 0; k < std::min(channels_, 3); ++k) {
        data_[i + k] = c[k];
    }
}

ImageBuffer ImageBuffer::clamped(double lo, double hi) const {
    ImageBuffer out = *this;
    for (double& v : out.data_) {
        v = std::clamp(v, lo, hi);
    }
    return out;
}

ImageBuffer ImageBuffer::resized(int width, int height) const {
    if (width == width_ && height == height_) {
        return *this;
    }
    ImageBuffer out(width, height, channels_);
    const double sx = static_cast<double>(width_) / width;
    const double sy = static_cast<double>(height_) / height;
    for (int y = 0; y < height; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        for (int x = 0; x < width; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            double area = 0.0;
            std::vector<double> acc(channels_, 0.0);
            for (int yy = static_cast<int>(y0); yy < std::min(height_, static_cast<int>(std::ceil(y1))); ++yy) {
                const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                if (wy <= 0) continue;
                for (int xx = static_cast<int>(x0); xx < std::min(width_, static_cast<int>(std::ceil(x1))); ++xx) {
                    const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                    if (wx <= 0) continue;
                    const double w = wx * wy;
                    area += w;
                    for (int c = 0; c < channels_; ++c) {
                        acc[c] += w * at(xx, yy, c);
                    }
                }
            }
            for (int c = 0; c < channels_; ++c) {
                out.at(x, y, c) = area > 0 ? acc[c] / area : 0.0;
            }
        }
    }
    return out;
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": image shape mismatch (" +
                                    std::to_string(a.width()) + "x" + std::to_string(a.height()) + "x" +
                                    std::to_string(a.channels()) + " vs " + std::to_string(b.width()) + "x" +
                                    std::to_string(b.height()) + "x" + std::to_string(b.channels()) + ")");
    }
}

} // namespace gsgen
