#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/core/gaussian.hpp"
#include "gsgen/core/image.hpp"
#include "gsgen/io/http.hpp"

#include <filesystem>
#include <vector>

namespace gsgen {

/// Relative depth for a view; any global scale is acceptable. Pixels without
/// an estimate are 0.
class DepthPriorProvider {
public:
    virtual ~DepthPriorProvider() = default;
    virtual ImageBuffer estimate(const Camera& camera, const ImageBuffer& image) = 0;
};

/// Depth of a known scene, rendered with the same compositing as the model.
class RenderedDepthPrior : public DepthPriorProvider {
public:
    explicit RenderedDepthPrior(GaussianCloud truth, double scale = 1.0)
        : truth_(std::move(truth)), scale_(scale) {}
    ImageBuffer estimate(const Camera& camera, const ImageBuffer& image) override;

private:
    GaussianCloud truth_;
    double scale_;
};

struct DepthMapView {
    Camera camera;
    ImageBuffer depth;
};

/// Precomputed maps; answers with the map whose camera is closest in
/// azimuth then elevation, resampled to the request size.
class FileDepthPrior : public DepthPriorProvider {
public:
    explicit FileDepthPrior(std::vector<DepthMapView> maps);
    ImageBuffer estimate(const Camera& camera, const ImageBuffer& image) override;

private:
    std::vector<DepthMapView> maps_;
};

/// 16-bit grayscale PNG plus `<file>.json` holding {"scale": s}; depth is
/// sample/65535 * s.
void write_depth_map(const std::filesystem::path& png_path, const ImageBuffer& depth);
ImageBuffer read_depth_map(const std::filesystem::path& png_path);

/// Posts {"prompt", "timestep", "cameras": [1], "views": [1 RGB PNG], "seed"}
/// and expects {"views": [16-bit gray PNG], "scale"?}.
class RemoteDepthPrior : public DepthPriorProvider {
public:
    explicit RemoteDepthPrior(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    ImageBuffer estimate(const Camera& camera, const ImageBuffer& image) override;

private:
    HttpEndpoint endpoint_;
};

} // namespace gsgen
