#include "gsgen/core/camera.hpp"
#include "gsgen/core/gaussian.hpp"
#include "gsgen/core/image.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace gsgen;

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
}

} // namespace

TEST(Covariance, IdentityAndAxisAligned) {
    EXPECT_TRUE(covariance_from(Vec3(1, 1, 1), identity_quat()).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 expected = Vec3(4, 1, 1).asDiagonal();
    EXPECT_TRUE(covariance_from(Vec3(2, 1, 1), identity_quat()).isApprox(expected, 1e-15));
}

TEST(Covariance, RotationAboutZSwapsAxes) {
    // Oracle: build R explicitly for 90 degrees about z and form R S^2 R^T.
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3 oracle = r * Vec3(4, 1, 1).asDiagonal() * r.transpose();
    const Mat3 got = covariance_from(Vec3(2, 1, 1), quat_from_axis_angle(Vec3::UnitZ(), M_PI / 2));
    EXPECT_TRUE(got.isApprox(oracle, 1e-12));
    EXPECT_NEAR(got(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(got(1, 1), 4.0, 1e-12);
    EXPECT_NEAR(got(2, 2), 1.0, 1e-12);
}

TEST(Covariance, RejectsNonFinite) {
    EXPECT_THROW(covariance_from(Vec3(NAN, 1, 1), identity_quat()), std::invalid_argument);
    EXPECT_THROW(covariance_from(Vec3(1, 1, 1), Quat(INFINITY, 0, 0, 0)), std::invalid_argument);
}

TEST(Covariance, DeterminantAndSymmetryProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> s(0.01, 3.0);
    for (int i = 0; i < 500; ++i) {
        const Vec3 scale(s(rng), s(rng), s(rng));
        const Mat3 cov = covariance_from(scale, random_unit_quat(rng));
        const double expected = std::pow(scale.prod(), 2);
        EXPECT_LT(std::abs(cov.determinant() - expected) / expected, 1e-9);
        EXPECT_TRUE(cov.isApprox(cov.transpose(), 1e-14));
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(QuaternionPartials, MatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    const Quat q = random_unit_quat(rng);
    const auto partials = rotation_unit_quat_partials(q);
    for (int c = 0; c < 4; ++c) {
        Quat qp = q, qm = q;
        qp[c] += 1e-6;
        qm[c] -= 1e-6;
        const Mat3 fd = (rotation_from_unit_quat(qp) - rotation_from_unit_quat(qm)) / 2e-6;
        EXPECT_TRUE(fd.isApprox(partials[static_cast<std::size_t>(c)], 1e-7)) << "component " << c;
    }
}

TEST(GaussianEval, AnalyticValues) {
    GaussianPrimitive p;
    p.center = Vec3(0.3, -0.2, 0.5);
    EXPECT_DOUBLE_EQ(gaussian_eval(p, p.center), 1.0);
    EXPECT_NEAR(gaussian_eval(p, p.center + Vec3(0, 1, 0)), std::exp(-0.5), 1e-7);

    GaussianPrimitive q;
    q.log_scale = Vec3(std::log(2.0), 0.0, 0.0);
    EXPECT_NEAR(gaussian_eval(q, Vec3(2, 0, 0)), std::exp(-0.5), 1e-7);
    EXPECT_NEAR(gaussian_eval(q, Vec3(2, 0, 0)), 0.60653, 1e-5);
}

TEST(GaussianEval, MonotoneInMahalanobisDistance) {
    GaussianPrimitive p;
    p.log_scale = Vec3(std::log(0.5), std::log(1.5), 0.0);
    double prev = 1.0;
    for (double t = 0.0; t < 5.0; t += 0.1) {
        const double v = gaussian_eval(p, Vec3(t, 0.5 * t, -0.2 * t));
        EXPECT_LE(v, prev);
        EXPECT_GT(v, 0.0);
        prev = v;
    }
}

TEST(GaussianEval, InvariantUnderJointRotation) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        GaussianPrimitive p;
        p.center = Vec3(u(rng), u(rng), u(rng));
        p.log_scale = Vec3(u(rng), u(rng), u(rng)) * 0.7;
        p.rotation = random_unit_quat(rng);
        const Vec3 offset(u(rng), u(rng), u(rng));
        const double before = gaussian_eval(p, p.center + offset);

        const Quat extra = random_unit_quat(rng);
        GaussianPrimitive rotated = p;
        rotated.rotation = quat_multiply(extra, p.rotation);
        const Vec3 rotated_offset = rotation_from_unit_quat(extra) * offset;
        const double after = gaussian_eval(rotated, rotated.center + rotated_offset);
        EXPECT_NEAR(before, after, 1e-9);
    }
}

TEST(InitCloud, CountBoundsAndDeterminism) {
    const GaussianCloud a = init_cloud(1000, 42);
    ASSERT_EQ(a.size(), 1000u);
    double max_norm = 0.0;
    for (const auto& p : a.primitives) {
        max_norm = std::max(max_norm, p.center.norm());
        EXPECT_EQ(p.rotation, identity_quat());
        EXPECT_NEAR(p.opacity(), kInitialOpacity, 1e-12);
        EXPECT_EQ(p.log_scale[0], p.log_scale[1]);
        EXPECT_EQ(p.log_scale[1], p.log_scale[2]);
    }
    EXPECT_LT(max_norm, 1.0);
    EXPECT_EQ(a, init_cloud(1000, 42));
    EXPECT_NE(a, init_cloud(1000, 43));
}

TEST(InitCloud, ScaleIsMeanNearestNeighbourDistance) {
    const GaussianCloud c = init_cloud(50, 5);
    double total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        double best = 1e9;
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (i != j) best = std::min(best, (c.primitives[i].center - c.primitives[j].center).norm());
        }
        total += best;
    }
    EXPECT_NEAR(c.primitives[0].scale()[0], total / 50.0, 1e-12);
}

TEST(InitCloud, SingletonAndZero) {
    const GaussianCloud c = init_cloud(1, 9);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_LT(c.primitives[0].center.norm(), 1.0);
    EXPECT_THROW(init_cloud(0, 1), std::invalid_argument);
}

TEST(CameraTest, ValidationRules) {
    Camera c;
    EXPECT_NO_THROW(c.validate());
    c.near_plane = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = Camera{};
    c.far_plane = c.near_plane;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = Camera{};
    c.width = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = Camera{};
    c.fov_y_deg = 180.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(CameraTest, OrbitAnglesRoundTrip) {
    for (double az : {-170.0, -90.0, 0.0, 45.0, 90.0, 180.0}) {
        for (double el : {-30.0, 0.0, 25.0}) {
            const Camera c = orbit_camera(az, el);
            EXPECT_NEAR(wrap_degrees(c.azimuth_deg() - az), 0.0, 1e-9);
            EXPECT_NEAR(c.elevation_deg(), el, 1e-9);
            EXPECT_NEAR(c.radius(), kDefaultOrbitRadius, 1e-12);
            const Mat3 r = c.world_to_view_rotation();
            EXPECT_TRUE((r * r.transpose()).isApprox(Mat3::Identity(), 1e-12));
            EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        }
    }
    const Camera top = orbit_camera(0.0, 90.0);
    EXPECT_NEAR(top.world_to_view_rotation().determinant(), 1.0, 1e-12);
}

TEST(CameraSamplerTest, FinalPhaseUsesCanonicalAzimuths) {
    CameraSampler sampler(1);
    TrainingPhase phase;
    phase.step_fraction = 0.9;
    std::multiset<double> seen;
    for (int i = 0; i < 4; ++i) {
        const Camera c = sample_training_camera(sampler, phase);
        seen.insert(std::round(c.azimuth_deg()));
        EXPECT_NEAR(c.elevation_deg(), 0.0, 1e-9);
    }
    EXPECT_EQ(seen, (std::multiset<double>{-90.0, 0.0, 90.0, 180.0}));
}

TEST(CameraSamplerTest, EarlyPhaseRanges) {
    CameraSampler sampler(2);
    TrainingPhase phase;
    phase.step_fraction = 0.2;
    double min_az = 1e9, max_az = -1e9;
    for (int i = 0; i < 10000; ++i) {
        const Camera c = sampler.next(phase);
        EXPECT_GE(c.elevation_deg(), -30.0 - 1e-9);
        EXPECT_LE(c.elevation_deg(), 30.0 + 1e-9);
        min_az = std::min(min_az, c.azimuth_deg());
        max_az = std::max(max_az, c.azimuth_deg());
    }
    EXPECT_LT(min_az, -170.0);
    EXPECT_GT(max_az, 170.0);
}

TEST(CameraSamplerTest, ReproducibleAndOrthogonalSets) {
    CameraSampler a(99), b(99);
    TrainingPhase phase;
    for (int i = 0; i < 20; ++i) {
        const auto sa = a.next_orthogonal_set(phase);
        const auto sb = b.next_orthogonal_set(phase);
        for (std::size_t k = 0; k < 4; ++k) {
            EXPECT_EQ(sa[k].position, sb[k].position);
            EXPECT_NEAR(wrap_degrees(sa[k].azimuth_deg() - sa[0].azimuth_deg() - 90.0 * k), 0.0, 1e-9);
        }
    }
}

TEST(ImageBufferTest, ShapeAndResize) {
    ImageBuffer img(4, 2, 3, 0.25);
    EXPECT_EQ(img.size(), 24u);
    EXPECT_THROW(ImageBuffer(0, 2, 3), std::invalid_argument);
    EXPECT_THROW(ImageBuffer(2, 2, 2), std::invalid_argument);
    const ImageBuffer small = img.resized(2, 1);
    EXPECT_DOUBLE_EQ(small.at(1, 0, 2), 0.25);
    ImageBuffer out_of_range(1, 1, 1, 3.0);
    EXPECT_DOUBLE_EQ(out_of_range.clamped().at(0, 0), 1.0);
}
