#include "gsgen/train/depth_prior.hpp"
#include "gsgen/io/codec.hpp"
#include "gsgen/render/splat_renderer.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gsgen {

using nlohmann::json;

ImageBuffer RenderedDepthPrior::estimate(const Camera& camera, const ImageBuffer&) {
    RenderOutput out = render(truth_, camera, Vec3::Zero());
    for (double& d : out.depth.data()) d *= scale_;
    return out.depth;
}

FileDepthPrior::FileDepthPrior(std::vector<DepthMapView> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw std::invalid_argument("FileDepthPrior needs at least one map");
    for (const auto& m : maps_) {
        if (m.depth.channels() != 1) throw std::invalid_argument("depth maps must be single channel");
    }
}

ImageBuffer FileDepthPrior::estimate(const Camera& camera, const ImageBuffer&) {
    const DepthMapView* best = nullptr;
    double best_az = 0.0, best_el = 0.0;
    for (const auto& m : maps_) {
        const double d_az = std::abs(wrap_degrees(m.camera.azimuth_deg() - camera.azimuth_deg()));
        const double d_el = std::abs(m.camera.elevation_deg() - camera.elevation_deg());
        if (!best || d_az < best_az - 1e-9 || (d_az <= best_az + 1e-9 && d_el < best_el - 1e-9)) {
            best = &m;
            best_az = d_az;
            best_el = d_el;
        }
    }
    if (best->depth.width() == camera.width && best->depth.height() == camera.height) return best->depth;
    return best->depth.resized(camera.width, camera.height);
}

namespace {

std::filesystem::path sidecar_of(const std::filesystem::path& png_path) {
    return std::filesystem::path(png_path.string() + ".json");
}

} // namespace

void write_depth_map(const std::filesystem::path& png_path, const ImageBuffer& depth) {
    if (depth.channels() != 1) throw std::invalid_argument("write_depth_map: single channel expected");
    double max_depth = 0.0;
    for (double d : depth.data()) {
        if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("write_depth_map: depth must be finite and >= 0");
        max_depth = std::max(max_depth, d);
    }
    const double scale = max_depth > 0.0 ? max_depth : 1.0;
    ImageBuffer normalized = depth;
    for (double& d : normalized.data()) d /= scale;
    write_png(png_path, normalized, 16);
    std::ofstream meta(sidecar_of(png_path));
    meta << json{{"scale", scale}, {"convention", "relative depth, arbitrary scale"}}.dump(2) << "\n";
    if (!meta) throw std::runtime_error("cannot write " + sidecar_of(png_path).string());
}

ImageBuffer read_depth_map(const std::filesystem::path& png_path) {
    ImageBuffer img = read_png(png_path);
    if (img.channels() != 1) throw std::runtime_error(png_path.string() + ": depth map must be grayscale");
    double scale = 1.0;
    if (std::ifstream meta(sidecar_of(png_path)); meta) {
        try {
            scale = json::parse(meta).at("scale").get<double>();
        } catch (const json::exception& e) {
            throw std::runtime_error(sidecar_of(png_path).string() + ": " + e.what());
        }
    }
    for (double& d : img.data()) d *= scale;
    return img;
}

ImageBuffer RemoteDepthPrior::estimate(const Camera& camera, const ImageBuffer& image) {
    const json body = {{"prompt", ""},
                       {"timestep", 1.0},
                       {"cameras", json::array({{{"azimuth_deg", camera.azimuth_deg()},
                                                 {"elevation_deg", camera.elevation_deg()},
                                                 {"radius", camera.radius()},
                                                 {"fov_deg", camera.fov_y_deg}}})},
                       {"views", json::array({base64_encode(encode_png(image, 8))})},
                       {"seed", 0}};
    const std::string reply = post_json(endpoint_, body.dump());
    ImageBuffer depth;
    try {
        const json j = json::parse(reply);
        const auto& views = j.at("views");
        if (!views.is_array() || views.size() != 1) {
            throw ServiceError(ServiceErrorKind::MalformedResponse, "depth reply must carry one view");
        }
        depth = decode_png(base64_decode(views[0].get<std::string>()));
        const double scale = j.value("scale", 1.0);
        for (double& d : depth.data()) d *= scale;
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad depth reply: ") + e.what());
    } catch (const ServiceError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad depth image: ") + e.what());
    }
    if (depth.channels() != 1 || depth.width() != camera.width || depth.height() != camera.height) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, "depth reply has the wrong shape");
    }
    return depth;
}

} // namespace gsgen
