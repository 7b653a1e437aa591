#pragma once

#include "gsgen/core/math.hpp"

#include <array>
#include <cstdint>
#include <random>

namespace gsgen {

inline constexpr double kDefaultFovDeg = 49.0;
inline constexpr double kDefaultOrbitRadius = 2.5;

/// Pinhole camera. View space is x right, y down, z forward; pixel (0,0)
/// is the top-left corner and the principal point is the image center.
struct Camera {
    Vec3 position = Vec3(0.0, 0.0, kDefaultOrbitRadius);
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3(0.0, 1.0, 0.0);
    double fov_y_deg = kDefaultFovDeg;
    int width = 64;
    int height = 64;
    double near_plane = 0.01;
    double far_plane = 100.0;

    /// Throws std::invalid_argument when the invariants do not hold.
    void validate() const;

    /// Rows are the right, down and forward axes in world coordinates.
    Mat3 world_to_view_rotation() const;
    Vec3 to_view(const Vec3& world) const { return world_to_view_rotation() * (world - position); }
    Vec3 forward() const { return (target - position).normalized(); }

    double focal_y() const;
    double focal_x() const { return focal_y(); }
    double cx() const { return 0.5 * width; }
    double cy() const { return 0.5 * height; }

    /// Spherical coordinates of the position around the target, degrees.
    double azimuth_deg() const;
    double elevation_deg() const;
    double radius() const { return (position - target).norm(); }

    Camera with_resolution(int w, int h) const {
        Camera c = *this;
        c.width = w;
        c.height = h;
        return c;
    }
};

/// Camera orbiting `target`; azimuth 0 looks from +z, azimuth 90 from +x,
/// positive elevation is above the target.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius = kDefaultOrbitRadius,
                    int width = 64, int height = 64, double fov_y_deg = kDefaultFovDeg,
                    const Vec3& target = Vec3::Zero());

/// Wraps an angle into (-180, 180].
double wrap_degrees(double deg);

inline constexpr std::array<double, 4> kCanonicalAzimuths = {0.0, 90.0, 180.0, -90.0};

/// Where in training a camera draw happens.
struct TrainingPhase {
    double step_fraction = 0.0;
    double final_fixed_fraction = 1.0 / 6.0;
    double azimuth_min = -180.0;
    double azimuth_max = 180.0;
    double elevation_min = -30.0;
    double elevation_max = 30.0;
    double radius = kDefaultOrbitRadius;
    double fov_y_deg = kDefaultFovDeg;
    int resolution = 128;

    bool in_final_fixed_views() const { return step_fraction >= 1.0 - final_fixed_fraction; }
};

/// Random orbit cameras before the final fixed-view phase; afterwards the
/// four canonical azimuths in order at elevation 0.
class CameraSampler {
public:
    explicit CameraSampler(std::uint64_t seed) : rng_(seed) {}

    Camera next(const TrainingPhase& phase);

    /// Four cameras at 90 degree azimuth increments sharing one elevation.
    /// During the fixed-view phase these are exactly the canonical azimuths.
    std::array<Camera, 4> next_orthogonal_set(const TrainingPhase& phase);

private:
    std::mt19937_64 rng_;
    std::size_t fixed_cursor_ = 0;
};

/// Free-function form of CameraSampler::next.
inline Camera sample_training_camera(CameraSampler& sampler, const TrainingPhase& phase) {
    return sampler.next(phase);
}

} // namespace gsgen
