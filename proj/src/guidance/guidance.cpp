#include "gsgen/guidance/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsgen {

void GuidanceRequest::validate() const {
    for (const auto& v : views) {
        if (v.empty() || v.channels() != 3) throw std::invalid_argument("guidance request views must be RGB");
        if (!v.same_shape(views[0])) throw std::invalid_argument("guidance request views differ in size");
    }
    if (!(timestep > 0.0 && timestep <= 1.0)) throw std::invalid_argument("guidance timestep must lie in (0,1]");
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw std::invalid_argument("guidance weight must be >= 0");
}

void validate_response(const GuidanceRequest& request, const GuidanceResponse& response) {
    for (std::size_t k = 0; k < kGuidanceViews; ++k) {
        if (!response.views[k].same_shape(request.views[k])) {
            throw GuidanceError(ServiceErrorKind::MalformedResponse,
                                "response view " + std::to_string(k) + " does not match the request resolution");
        }
        for (double x : response.views[k].data()) {
            if (!std::isfinite(x)) throw GuidanceError(ServiceErrorKind::MalformedResponse, "non-finite pixel");
        }
    }
    if (response.confidence) {
        for (double c : *response.confidence) {
            if (!(c >= 0.0 && c <= 1.0)) {
                throw GuidanceError(ServiceErrorKind::MalformedResponse, "confidence outside [0,1]");
            }
        }
    }
    if (response.masks) {
        for (std::size_t k = 0; k < kGuidanceViews; ++k) {
            const auto& m = (*response.masks)[k];
            if (m.channels() != 1 || m.width() != request.views[k].width() ||
                m.height() != request.views[k].height()) {
                throw GuidanceError(ServiceErrorKind::MalformedResponse, "mask shape mismatch");
            }
        }
    }
}

ViewsLoss mv_sds_loss(std::span<const ImageBuffer> rendered, std::span<const ImageBuffer> targets, double weight) {
    if (rendered.size() != targets.size() || rendered.empty()) {
        throw std::invalid_argument("mv_sds_loss: view count mismatch");
    }
    if (!(weight >= 0.0)) throw std::invalid_argument("mv_sds_loss: weight must be >= 0");
    std::size_t n = 0;
    for (std::size_t k = 0; k < rendered.size(); ++k) {
        require_same_shape(rendered[k], targets[k], "mv_sds_loss");
        n += rendered[k].size();
    }
    ViewsLoss out;
    double sum = 0.0;
    for (std::size_t k = 0; k < rendered.size(); ++k) {
        const auto x = rendered[k].data();
        const auto t = targets[k].data();
        ImageBuffer g(rendered[k].width(), rendered[k].height(), rendered[k].channels());
        auto gd = g.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = x[i] - t[i];
            sum += r * r;
            gd[i] = weight * 2.0 * r / static_cast<double>(n);
        }
        out.grads.push_back(std::move(g));
    }
    out.value = weight * sum / static_cast<double>(n);
    return out;
}

double annealed_timestep(double fraction, double start, double end) {
    const double f = std::clamp(fraction, 0.0, 1.0);
    return start * (1.0 - f) + end * f;
}

ReferenceGuidance::ReferenceGuidance(std::vector<ReferenceView> views) {
    for (auto& v : views) add(std::move(v));
}

void ReferenceGuidance::add(ReferenceView view) {
    view.camera.validate();
    if (view.image.empty() || view.image.channels() != 3) throw std::invalid_argument("reference image must be RGB");
    if (!view.mask.empty() && (view.mask.channels() != 1 || view.mask.width() != view.image.width() ||
                               view.mask.height() != view.image.height())) {
        throw std::invalid_argument("reference mask must be single channel and match the image");
    }
    views_.push_back(std::move(view));
}

const ReferenceView& ReferenceGuidance::nearest(const Camera& camera) const {
    if (views_.empty()) throw GuidanceError(ServiceErrorKind::NoReferences, "no reference views registered");
    constexpr double eps = 1e-9;
    const double az = camera.azimuth_deg();
    const double el = camera.elevation_deg();
    const ReferenceView* best = nullptr;
    double best_az = 0.0, best_el = 0.0, best_zero = 0.0;
    for (const auto& v : views_) {
        const double ref_az = v.camera.azimuth_deg();
        const double d_az = std::abs(wrap_degrees(ref_az - az));
        const double d_el = std::abs(v.camera.elevation_deg() - el);
        const double d_zero = std::abs(wrap_degrees(ref_az));
        bool better = best == nullptr;
        if (!better) {
            if (d_az < best_az - eps) better = true;
            else if (d_az <= best_az + eps) {
                if (d_el < best_el - eps) better = true;
                else if (d_el <= best_el + eps && d_zero < best_zero - eps) better = true;
            }
        }
        if (better) {
            best = &v;
            best_az = d_az;
            best_el = d_el;
            best_zero = d_zero;
        }
    }
    return *best;
}

GuidanceResponse ReferenceGuidance::guide(const GuidanceRequest& request) {
    request.validate();
    GuidanceResponse response;
    bool all_masks = true;
    std::array<ImageBuffer, kGuidanceViews> masks;
    for (std::size_t k = 0; k < kGuidanceViews; ++k) {
        const ReferenceView& ref = nearest(request.cameras[k]);
        const int w = request.views[k].width();
        const int h = request.views[k].height();
        response.views[k] = (ref.image.width() == w && ref.image.height() == h) ? ref.image : ref.image.resized(w, h);
        if (ref.mask.empty()) {
            all_masks = false;
        } else {
            masks[k] = (ref.mask.width() == w && ref.mask.height() == h) ? ref.mask : ref.mask.resized(w, h);
        }
    }
    if (all_masks) response.masks = std::move(masks);
    return response;
}

std::optional<Camera> ReferenceGuidance::snap_camera(const Camera& requested) const {
    if (views_.empty()) return std::nullopt;
    Camera snapped = nearest(requested).camera;
    snapped.width = requested.width;
    snapped.height = requested.height;
    return snapped;
}

GuidanceResponse reference_guidance(const GuidanceRequest& request, std::span<const ReferenceView> views) {
    ReferenceGuidance provider(std::vector<ReferenceView>(views.begin(), views.end()));
    return provider.guide(request);
}

GuidanceResponse RemoteGuidance::guide(const GuidanceRequest& request) { return remote_guidance(request, endpoint_); }

GuidanceResponse remote_guidance(const GuidanceRequest& request, const HttpEndpoint& endpoint) {
    request.validate();
    const std::string reply = post_json(endpoint, encode_guidance_request(request));
    return decode_guidance_response(reply, request);
}

} // namespace gsgen
