#include "gsgen/core/gaussian.hpp"

#include <Eigen/LU>

#include <limits>
#include <random>
#include <stdexcept>

namespace gsgen {

Mat3 covariance_from(const Vec3& scale, const Quat& rotation) {
    if (!scale.allFinite() || !rotation.allFinite()) {
        throw std::invalid_argument("covariance_from: non-finite scale or rotation");
    }
    const Mat3 r = rotation_from_unit_quat(rotation.normalized());
    const Mat3 s2 = scale.array().square().matrix().asDiagonal();
    return r * s2 * r.transpose();
}

Mat3 GaussianPrimitive::covariance() const { return covariance_from(scale(), rotation); }

double mahalanobis_sq(const GaussianPrimitive& primitive, const Vec3& x) {
    const Mat3 cov = primitive.covariance() + kCovarianceEpsilon * Mat3::Identity();
    Eigen::FullPivLU<Mat3> lu(cov);
    if (!lu.isInvertible()) {
        throw std::domain_error("gaussian_eval: singular covariance");
    }
    const Vec3 d = x - primitive.center;
    return d.dot(lu.solve(d));
}

double gaussian_eval(const GaussianPrimitive& primitive, const Vec3& x) {
    return std::exp(-0.5 * mahalanobis_sq(primitive, x));
}

GaussianCloud init_cloud(std::size_t count, std::uint64_t seed) {
    if (count == 0) {
        throw std::invalid_argument("init_cloud: count must be positive");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> color(0.0, 1.0);

    GaussianCloud cloud;
    cloud.primitives.resize(count);
    for (auto& p : cloud.primitives) {
        Vec3 c;
        do {
            c = Vec3(unit(rng), unit(rng), unit(rng));
        } while (c.squaredNorm() >= 1.0);
        p.center = c;
        p.color = Vec3(color(rng), color(rng), color(rng));
        p.opacity_logit = logit(kInitialOpacity);
        p.rotation = identity_quat();
    }

    double mean_nn = 0.1;
    if (count > 1) {
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < count; ++j) {
                if (i != j) {
                    best = std::min(best, (cloud.primitives[i].center - cloud.primitives[j].center).squaredNorm());
                }
            }
            total += std::sqrt(best);
        }
        mean_nn = total / static_cast<double>(count);
    }
    for (auto& p : cloud.primitives) {
        p.log_scale = Vec3::Constant(std::log(mean_nn));
    }
    return cloud;
}

} // namespace gsgen
