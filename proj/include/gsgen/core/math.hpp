#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace gsgen {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z). Not necessarily unit length.
using Quat = Eigen::Vector4d;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 rotation_from_unit_quat(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Partial derivatives of rotation_from_unit_quat with respect to (w, x, y, z).
inline std::array<Mat3, 4> rotation_unit_quat_partials(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -2 * z, 2 * y,
        2 * z, 0, -2 * x,
        -2 * y, 2 * x, 0;
    d[1] << 0, 2 * y, 2 * z,
        2 * y, -4 * x, -2 * w,
        2 * z, 2 * w, -4 * x;
    d[2] << -4 * y, 2 * x, 2 * w,
        2 * x, 0, 2 * z,
        -2 * w, 2 * z, -4 * y;
    d[3] << -4 * z, -2 * w, 2 * x,
        2 * w, -4 * z, 2 * y,
        2 * x, 2 * y, 0;
    return d;
}

/// Quaternion for a rotation of `angle_rad` about `axis`.
inline Quat quat_from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle_rad;
    return Quat(std::cos(h), a.x() * std::sin(h), a.y() * std::sin(h), a.z() * std::sin(h));
}

/// Hamilton product a * b.
inline Quat quat_multiply(const Quat& a, const Quat& b) {
    return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

} // namespace gsgen
