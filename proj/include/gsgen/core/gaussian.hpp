#pragma once

#include "gsgen/core/math.hpp"

#include <cstdint>
#include <vector>

namespace gsgen {

/// One anisotropic 3D Gaussian. Scale and opacity are stored unconstrained
/// (log-scale, logit) and activated on read so that gradient steps cannot
/// leave the valid domain.
struct GaussianPrimitive {
    Vec3 center = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Quat rotation = identity_quat();
    double opacity_logit = 0.0;
    Vec3 color = Vec3::Zero();

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Quat unit_rotation() const { return rotation.normalized(); }
    Mat3 covariance() const;

    bool operator==(const GaussianPrimitive&) const = default;
};

struct GaussianCloud {
    std::vector<GaussianPrimitive> primitives;
    /// Bumped whenever densification or pruning changes the primitive set.
    std::uint64_t generation = 0;

    std::size_t size() const { return primitives.size(); }
    bool empty() const { return primitives.empty(); }

    bool operator==(const GaussianCloud&) const = default;
};

/// Sigma = R(q) diag(s)^2 R(q)^T. Throws on non-finite input.
Mat3 covariance_from(const Vec3& scale, const Quat& rotation);

/// Regularization added to the covariance diagonal before inversion.
inline constexpr double kCovarianceEpsilon = 1e-8;

/// exp(-0.5 (x - mu)^T Sigma^-1 (x - mu)).
double gaussian_eval(const GaussianPrimitive& primitive, const Vec3& x);

/// Squared Mahalanobis distance of x from the primitive's center.
double mahalanobis_sq(const GaussianPrimitive& primitive, const Vec3& x);

inline constexpr double kInitialOpacity = 0.1;

/// `count` primitives with centers uniform in the unit ball, identity
/// rotation, opacity 0.1 and isotropic scale equal to the mean
/// nearest-neighbour distance of the sampled centers. Deterministic per seed.
GaussianCloud init_cloud(std::size_t count, std::uint64_t seed);

} // namespace gsgen
