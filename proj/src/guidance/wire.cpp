#include "gsgen/guidance/guidance.hpp"
#include "gsgen/io/codec.hpp"

#include <json.hpp>

namespace gsgen {

using nlohmann::json;

namespace {

std::string png_b64(const ImageBuffer& image) { return base64_encode(encode_png(image, 8)); }

ImageBuffer rgb_from_b64(const std::string& text) {
    ImageBuffer img = decode_png(base64_decode(text));
    if (img.channels() == 3) return img;
    ImageBuffer rgb(img.width(), img.height(), 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = img.at(x, y, img.channels() == 1 ? 0 : c);
        }
    }
    return rgb;
}

} // namespace

std::string encode_guidance_request(const GuidanceRequest& request) {
    json cameras = json::array();
    json views = json::array();
    for (std::size_t k = 0; k < kGuidanceViews; ++k) {
        const Camera& c = request.cameras[k];
        cameras.push_back({{"azimuth_deg", c.azimuth_deg()},
                           {"elevation_deg", c.elevation_deg()},
                           {"radius", c.radius()},
                           {"fov_deg", c.fov_y_deg}});
        views.push_back(png_b64(request.views[k]));
    }
    const json body = {{"prompt", request.prompt}, {"timestep", request.timestep}, {"cameras", cameras},
                       {"views", views},           {"seed", request.seed}};
    return body.dump();
}

GuidanceRequest decode_guidance_request(const std::string& body) {
    GuidanceRequest request;
    try {
        const json j = json::parse(body);
        request.prompt = j.at("prompt").get<std::string>();
        request.timestep = j.at("timestep").get<double>();
        request.seed = j.at("seed").get<std::uint64_t>();
        const auto& cameras = j.at("cameras");
        const auto& views = j.at("views");
        if (cameras.size() != kGuidanceViews || views.size() != kGuidanceViews) {
            throw std::invalid_argument("expected four cameras and four views");
        }
        for (std::size_t k = 0; k < kGuidanceViews; ++k) {
            request.views[k] = rgb_from_b64(views[k].get<std::string>());
            const auto& c = cameras[k];
            request.cameras[k] = orbit_camera(c.at("azimuth_deg").get<double>(), c.at("elevation_deg").get<double>(),
                                              c.at("radius").get<double>(), request.views[k].width(),
                                              request.views[k].height(), c.at("fov_deg").get<double>());
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad guidance request: ") + e.what());
    } catch (const std::runtime_error& e) {
        throw std::invalid_argument(std::string("bad guidance request: ") + e.what());
    }
    request.validate();
    return request;
}

std::string encode_guidance_response(const GuidanceResponse& response) {
    json views = json::array();
    for (const auto& v : response.views) views.push_back(png_b64(v));
    json body = {{"views", views}};
    if (response.confidence) body["confidence"] = *response.confidence;
    return body.dump();
}

GuidanceResponse decode_guidance_response(const std::string& body, const GuidanceRequest& request) {
    GuidanceResponse response;
    try {
        const json j = json::parse(body);
        const auto& views = j.at("views");
        if (!views.is_array() || views.size() != kGuidanceViews) {
            throw GuidanceError(ServiceErrorKind::MalformedResponse, "response must carry four views");
        }
        for (std::size_t k = 0; k < kGuidanceViews; ++k) response.views[k] = rgb_from_b64(views[k].get<std::string>());
        if (j.contains("confidence") && !j["confidence"].is_null()) {
            const auto& c = j["confidence"];
            if (!c.is_array() || c.size() != kGuidanceViews) {
                throw GuidanceError(ServiceErrorKind::MalformedResponse, "confidence must have four entries");
            }
            std::array<double, kGuidanceViews> conf{};
            for (std::size_t k = 0; k < kGuidanceViews; ++k) conf[k] = c[k].get<double>();
            response.confidence = conf;
        }
    } catch (const json::exception& e) {
        throw GuidanceError(ServiceErrorKind::MalformedResponse, std::string("bad response json: ") + e.what());
    } catch (const GuidanceError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw GuidanceError(ServiceErrorKind::MalformedResponse, std::string("bad response image: ") + e.what());
    }
    validate_response(request, response);
    return response;
}

} // namespace gsgen
