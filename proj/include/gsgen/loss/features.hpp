#pragma once

#include "gsgen/core/image.hpp"

#include <span>
#include <vector>

namespace gsgen {

/// Maps an image to a flat descriptor. Implementations must be deterministic.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    virtual std::vector<double> extract(const ImageBuffer& image) const = 0;

    /// Vector-Jacobian product: d(loss)/d(image) given d(loss)/d(features).
    virtual ImageBuffer backward(const ImageBuffer& image, std::span<const double> feature_grad) const = 0;
};

/// Patch-grid descriptor: for each of grid x grid patches, mean R, G, B and
/// the mean forward-difference gradient magnitude of the luminance.
class PatchStatsExtractor final : public FeatureExtractor {
public:
    explicit PatchStatsExtractor(int grid = 4) : grid_(grid) {}

    std::vector<double> extract(const ImageBuffer& image) const override;
    ImageBuffer backward(const ImageBuffer& image, std::span<const double> feature_grad) const override;

    int grid() const { return grid_; }
    std::size_t feature_length() const { return static_cast<std::size_t>(grid_ * grid_) * 4; }

private:
    int patch_of(int coord, int extent) const { return coord * grid_ / extent; }

    int grid_;
};

inline std::vector<double> extract_features(const ImageBuffer& image, const FeatureExtractor& extractor) {
    return extractor.extract(image);
}

} // namespace gsgen
