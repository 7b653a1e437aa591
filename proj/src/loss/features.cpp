#include "gsgen/loss/features.hpp"

#include <cmath>
#include <stdexcept>

namespace gsgen {

namespace {

double luminance(const ImageBuffer& img, int x, int y) {
    if (img.channels() == 1) return img.at(x, y);
    return (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
}

struct PixelGradient {
    double gx, gy, magnitude;
};

PixelGradient forward_gradient(const ImageBuffer& img, int x, int y) {
    const double l = luminance(img, x, y);
    const double gx = x + 1 < img.width() ? luminance(img, x + 1, y) - l : 0.0;
    const double gy = y + 1 < img.height() ? luminance(img, x, y + 1) - l : 0.0;
    return {gx, gy, std::sqrt(gx * gx + gy * gy)};
}

} // namespace

std::vector<double> PatchStatsExtractor::extract(const ImageBuffer& image) const {
    if (image.empty()) {
        throw std::invalid_argument("extract_features: empty image");
    }
    const std::size_t patches = static_cast<std::size_t>(grid_ * grid_);
    std::vector<double> features(patches * 4, 0.0);
    std::vector<double> counts(patches, 0.0);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t p =
                static_cast<std::size_t>(patch_of(y, image.height()) * grid_ + patch_of(x, image.width()));
            const Vec3 c = image.rgb(x, y);
            features[p * 4 + 0] += c[0];
            features[p * 4 + 1] += c[1];
            features[p * 4 + 2] += c[2];
            features[p * 4 + 3] += forward_gradient(image, x, y).magnitude;
            counts[p] += 1.0;
        }
    }
    for (std::size_t p = 0; p < patches; ++p) {
        if (counts[p] == 0.0) continue;
        for (int k = 0; k < 4; ++k) features[p * 4 + static_cast<std::size_t>(k)] /= counts[p];
    }
    return features;
}

ImageBuffer PatchStatsExtractor::backward(const ImageBuffer& image, std::span<const double> feature_grad) const {
    if (feature_grad.size() != feature_length()) {
        throw std::invalid_argument("PatchStatsExtractor::backward: gradient length mismatch");
    }
    const int w = image.width(), h = image.height();
    const std::size_t patches = static_cast<std::size_t>(grid_ * grid_);
    std::vector<double> counts(patches, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            counts[static_cast<std::size_t>(patch_of(y, h) * grid_ + patch_of(x, w))] += 1.0;
        }
    }
    ImageBuffer grad(w, h, image.channels());
    const double lum_share = image.channels() == 1 ? 1.0 : 1.0 / 3.0;
    const auto add_lum = [&](int x, int y, double g) {
        for (int c = 0; c < std::min(3, image.channels()); ++c) grad.at(x, y, c) += g * lum_share;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(patch_of(y, h) * grid_ + patch_of(x, w));
            const double inv = 1.0 / counts[p];
            if (image.channels() == 1) {
                for (int k = 0; k < 3; ++k) grad.at(x, y) += feature_grad[p * 4 + static_cast<std::size_t>(k)] * inv;
            } else {
                for (int k = 0; k < 3; ++k) grad.at(x, y, k) += feature_grad[p * 4 + static_cast<std::size_t>(k)] * inv;
            }
            const PixelGradient pg = forward_gradient(image, x, y);
            if (pg.magnitude == 0.0) continue;
            const double g = feature_grad[p * 4 + 3] * inv / pg.magnitude;
            // magnitude = |(l(x+1)-l(x), l(y+1)-l(y))|
            if (x + 1 < w) {
                add_lum(x + 1, y, g * pg.gx);
                add_lum(x, y, -g * pg.gx);
            }
            if (y + 1 < h) {
                add_lum(x, y + 1, g * pg.gy);
                add_lum(x, y, -g * pg.gy);
            }
        }
    }
    return grad;
}

} // namespace gsgen
