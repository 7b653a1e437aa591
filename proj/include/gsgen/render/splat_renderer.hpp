#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/core/gaussian.hpp"
#include "gsgen/core/image.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace gsgen {

/// Added to the diagonal of every screen-space covariance (pixels^2).
inline constexpr double kScreenLowPass = 0.3;
/// Contributions below this per-pixel alpha are skipped.
inline constexpr double kMinPixelAlpha = 1.0 / 255.0;
/// Footprint cutoff, squared Mahalanobis distance (3 sigma).
inline constexpr double kFootprintCutoffSq = 9.0;
inline constexpr int kTileSize = 16;

struct ProjectedGaussian {
    std::size_t source = 0; ///< index into GaussianCloud::primitives
    Vec2 mean = Vec2::Zero(); ///< pixels
    Mat2 cov = Mat2::Identity(); ///< pixels^2, low-pass applied
    Mat2 conic = Mat2::Identity(); ///< cov^-1
    double depth = 0.0; ///< view-space z of the center
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double radius = 0.0; ///< 3 sigma bound along the major axis, pixels
};

/// Per-pixel alpha of a projected Gaussian at a pixel position, or 0 when
/// outside the 3 sigma footprint or below kMinPixelAlpha.
double splat_alpha(const ProjectedGaussian& g, const Vec2& pixel);

/// Projects, culls and sorts front to back (ties by source index).
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera);

struct PixelContribution {
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
    double depth = 0.0;
};

struct CompositeResult {
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    double alpha = 0.0;
};

/// Front-to-back alpha compositing of one pixel's ordered contributions.
CompositeResult composite_pixel(std::span<const PixelContribution> ordered, const Vec3& background);

struct RenderOutput {
    ImageBuffer color; ///< 3 channels
    ImageBuffer depth; ///< 1 channel, alpha-weighted view-space z
    ImageBuffer alpha; ///< 1 channel, 1 - prod(1 - alpha_i)
};

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const Vec3& background);

/// dLoss/d(render output). Any buffer may be left empty, meaning zero.
struct RenderUpstream {
    ImageBuffer color;
    ImageBuffer depth;
    ImageBuffer alpha;
};

/// Partials of a scalar loss with respect to every stored parameter.
struct GradientBuffers {
    std::vector<Vec3> center;
    std::vector<Vec3> log_scale;
    std::vector<Quat> rotation;
    std::vector<double> opacity_logit;
    std::vector<Vec3> color;
    /// |dLoss/d(screen mean)| in pixels for primitives that touched a pixel.
    std::vector<double> screen_grad_norm;
    std::vector<char> visible;

    explicit GradientBuffers(std::size_t n = 0) { resize(n); }
    void resize(std::size_t n);
    void zero();
    std::size_t size() const { return center.size(); }
    bool all_finite() const;
    GradientBuffers& operator+=(const GradientBuffers& other);
};

GradientBuffers render_backward(const GaussianCloud& cloud, const Camera& camera, const Vec3& background,
                                const RenderUpstream& upstream);

} // namespace gsgen
