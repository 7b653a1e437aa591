#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/core/image.hpp"
#include "gsgen/io/http.hpp"
#include "gsgen/loss/losses.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsgen {

inline constexpr std::size_t kGuidanceViews = 4;

struct GuidanceRequest {
    std::array<ImageBuffer, kGuidanceViews> views;
    std::array<Camera, kGuidanceViews> cameras;
    std::string prompt;
    double timestep = 0.98;
    double weight = 1.0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on empty or non-RGB views, t outside
    /// (0,1] or a negative weight.
    void validate() const;
};

struct GuidanceResponse {
    std::array<ImageBuffer, kGuidanceViews> views;
    std::optional<std::array<double, kGuidanceViews>> confidence;
    /// Foreground masks, when the provider has them.
    std::optional<std::array<ImageBuffer, kGuidanceViews>> masks;
};

using GuidanceError = ServiceError;

/// Throws GuidanceError(MalformedResponse) when shapes or confidences are off.
void validate_response(const GuidanceRequest& request, const GuidanceResponse& response);

class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;

    /// Target views for the request. Must be deterministic for a fixed seed.
    virtual GuidanceResponse guide(const GuidanceRequest& request) = 0;

    /// Providers with a fixed set of viewpoints can move a requested camera
    /// onto the one they will answer for.
    virtual std::optional<Camera> snap_camera(const Camera& requested) const {
        (void)requested;
        return std::nullopt;
    }
};

/// weight * mean squared error over all views; gradient with respect to the
/// rendered views.
ViewsLoss mv_sds_loss(std::span<const ImageBuffer> rendered, std::span<const ImageBuffer> targets,
                      double weight = 1.0);

/// t linearly annealed from `start` at fraction 0 to `end` at fraction 1.
double annealed_timestep(double fraction, double start = 0.98, double end = 0.02);

struct ReferenceView {
    Camera camera;
    ImageBuffer image;
    ImageBuffer mask; ///< optional, single channel
};

/// Answers every request camera with the registered view closest in azimuth,
/// then elevation; exact ties go to the view nearer azimuth 0.
class ReferenceGuidance : public GuidanceProvider {
public:
    ReferenceGuidance() = default;
    explicit ReferenceGuidance(std::vector<ReferenceView> views);

    void add(ReferenceView view);
    std::span<const ReferenceView> views() const { return views_; }

    const ReferenceView& nearest(const Camera& camera) const;

    GuidanceResponse guide(const GuidanceRequest& request) override;
    std::optional<Camera> snap_camera(const Camera& requested) const override;

private:
    std::vector<ReferenceView> views_;
};

GuidanceResponse reference_guidance(const GuidanceRequest& request, std::span<const ReferenceView> views);

/// Client for a diffusion service speaking the JSON wire format below.
class RemoteGuidance : public GuidanceProvider {
public:
    explicit RemoteGuidance(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    GuidanceResponse guide(const GuidanceRequest& request) override;
    const HttpEndpoint& endpoint() const { return endpoint_; }

private:
    HttpEndpoint endpoint_;
};

GuidanceResponse remote_guidance(const GuidanceRequest& request, const HttpEndpoint& endpoint);

// Wire format. Views travel as base64 8-bit RGB PNG.
std::string encode_guidance_request(const GuidanceRequest& request);
/// Cameras are rebuilt as orbit cameras around the origin at the view size.
GuidanceRequest decode_guidance_request(const std::string& body);
std::string encode_guidance_response(const GuidanceResponse& response);
/// Validates against `request`; throws GuidanceError(MalformedResponse).
GuidanceResponse decode_guidance_response(const std::string& body, const GuidanceRequest& request);

} // namespace gsgen
