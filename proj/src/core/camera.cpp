#include "gsgen/core/camera.hpp"

#include <stdexcept>

namespace gsgen {

void Camera::validate() const {
    if (!(near_plane > 0.0 && near_plane < far_plane)) {
        throw std::invalid_argument("camera: require 0 < near < far");
    }
    if (width < 1 || height < 1) {
        throw std::invalid_argument("camera: image dimensions must be positive");
    }
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) {
        throw std::invalid_argument("camera: fov must be in (0, 180) degrees");
    }
    if ((target - position).norm() <= 0.0) {
        throw std::invalid_argument("camera: position and target coincide");
    }
}

Mat3 Camera::world_to_view_rotation() const {
    const Vec3 f = forward();
    Vec3 right = f.cross(up);
    if (right.norm() < 1e-9) {
        // Looking along the up vector; pick any perpendicular.
        right = f.cross(std::abs(f.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX());
    }
    right.normalize();
    const Vec3 down = f.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = f.transpose();
    return r;
}

double Camera::focal_y() const { return 0.5 * height / std::tan(0.5 * deg_to_rad(fov_y_deg)); }

double Camera::azimuth_deg() const {
    const Vec3 d = position - target;
    if (std::hypot(d.x(), d.z()) < 1e-12) {
        return 0.0;
    }
    return rad_to_deg(std::atan2(d.x(), d.z()));
}

double Camera::elevation_deg() const {
    const Vec3 d = position - target;
    return rad_to_deg(std::atan2(d.y(), std::hypot(d.x(), d.z())));
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, int width, int height,
                    double fov_y_deg, const Vec3& target) {
    const double az = deg_to_rad(azimuth_deg);
    const double el = deg_to_rad(elevation_deg);
    Camera cam;
    cam.target = target;
    cam.position = target + radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    cam.up = Vec3::UnitY();
    if (std::abs(std::cos(el)) < 1e-6) {
        // Top or bottom view: keep the front (+z) at the bottom of the image.
        cam.up = Vec3(-std::sin(az), 0.0, -std::cos(az)) * (elevation_deg > 0 ? 1.0 : -1.0);
    }
    cam.width = width;
    cam.height = height;
    cam.fov_y_deg = fov_y_deg;
    cam.validate();
    return cam;
}

double wrap_degrees(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d <= -180.0) d += 360.0;
    if (d > 180.0) d -= 360.0;
    return d;
}

Camera CameraSampler::next(const TrainingPhase& phase) {
    if (phase.in_final_fixed_views()) {
        const double az = kCanonicalAzimuths[fixed_cursor_ % kCanonicalAzimuths.size()];
        ++fixed_cursor_;
        return orbit_camera(az, 0.0, phase.radius, phase.resolution, phase.resolution, phase.fov_y_deg);
    }
    std::uniform_real_distribution<double> az(phase.azimuth_min, phase.azimuth_max);
    std::uniform_real_distribution<double> el(phase.elevation_min, phase.elevation_max);
    const double a = az(rng_);
    const double e = el(rng_);
    return orbit_camera(a, e, phase.radius, phase.resolution, phase.resolution, phase.fov_y_deg);
}

std::array<Camera, 4> CameraSampler::next_orthogonal_set(const TrainingPhase& phase) {
    std::array<Camera, 4> set;
    if (phase.in_final_fixed_views()) {
        for (auto& cam : set) {
            cam = next(phase);
        }
        return set;
    }
    const Camera base = next(phase);
    const double az = base.azimuth_deg();
    const double el = base.elevation_deg();
    for (std::size_t i = 0; i < set.size(); ++i) {
        set[i] = orbit_camera(wrap_degrees(az + 90.0 * static_cast<double>(i)), el, phase.radius, phase.resolution,
                              phase.resolution, phase.fov_y_deg);
    }
    return set;
}

} // namespace gsgen
