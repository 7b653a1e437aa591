#include "gsgen/io/codec.hpp"
#include "gsgen/render/splat_renderer.hpp"
#include "gsgen/train/depth_prior.hpp"
#include "gsgen/train/optimizer.hpp"
#include "gsgen/train/trainer.hpp"

#include "../support/recovery.hpp"
#include "../support/stub_server.hpp"

#include <json.hpp>
#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace gsgen;

namespace {

GaussianPrimitive blob(const Vec3& c, double scale, double opacity) {
    GaussianPrimitive p;
    p.center = c;
    p.log_scale = Vec3::Constant(std::log(scale));
    p.opacity_logit = logit(opacity);
    p.color = Vec3(0.5, 0.5, 0.5);
    return p;
}

GradientBuffers zero_grads(std::size_t n) {
    GradientBuffers g(n);
    g.zero();
    return g;
}

/// Records every request and answers with the request views shifted by 0.1.
class RecordingGuidance : public GuidanceProvider {
public:
    std::vector<GuidanceRequest> requests;
    int fail_every = 0;
    ServiceErrorKind fail_kind = ServiceErrorKind::Timeout;

    GuidanceResponse guide(const GuidanceRequest& request) override {
        requests.push_back(request);
        if (fail_every > 0 && requests.size() % static_cast<std::size_t>(fail_every) == 0) {
            throw GuidanceError(fail_kind, "injected");
        }
        GuidanceResponse r;
        for (std::size_t k = 0; k < 4; ++k) {
            r.views[k] = request.views[k];
            for (double& v : r.views[k].data()) v = std::min(1.0, v + 0.1);
        }
        return r;
    }
};

TrainConfig small_config(int steps) {
    TrainConfig c;
    c.stage1_steps = steps;
    c.run_stage2 = false;
    c.fixed_resolution = 16;
    c.seed = 5;
    return c;
}

} // namespace

TEST(ResolutionSchedule, PiecewiseLookup) {
    EXPECT_EQ(resolution_at(0.10), 128);
    EXPECT_EQ(resolution_at(0.45), 256);
    EXPECT_EQ(resolution_at(0.80), 512);
    EXPECT_EQ(resolution_at(0.0), 128);
    EXPECT_EQ(resolution_at(0.30), 256);
    EXPECT_EQ(resolution_at(0.60), 512);
    EXPECT_EQ(resolution_at(1.0), 512);
    EXPECT_THROW(resolution_at(1.5), std::invalid_argument);
    EXPECT_THROW(resolution_at(-0.1), std::invalid_argument);
}

TEST(TrainConfigTest, DefaultsAndValidation) {
    TrainConfig c;
    EXPECT_EQ(c.stage1_steps, 300);
    EXPECT_EQ(c.stage2_steps, 60);
    EXPECT_DOUBLE_EQ(c.cameras.final_fixed_fraction, 1.0 / 6.0);
    EXPECT_NO_THROW(c.validate());
    c.stage1_steps = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.ramp.fractions = {0.6, 0.3};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.densify.grad_threshold = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3(0.1, 0.2, 0.3), 0.2, 0.5));
    const GaussianCloud before = cloud;
    AdamState state;
    ASSERT_TRUE(adam_step(cloud, zero_grads(1), state));
    EXPECT_EQ(state.step, 1u);
    EXPECT_EQ(cloud, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.2, 0.5));
    AdamState state;
    state.lr.center = 0.01;
    GradientBuffers g = zero_grads(1);
    g.center[0] = Vec3(1.0, 0.0, 0.0);
    adam_step(cloud, g, state);
    EXPECT_NEAR(cloud.primitives[0].center.x(), -0.01, 1e-6);
    EXPECT_EQ(cloud.primitives[0].center.y(), 0.0);
}

TEST(Adam, QuaternionStaysUnitAndColorsClamped) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.2, 0.5));
    cloud.primitives[0].color = Vec3(0.999, 0.5, 0.001);
    AdamState state;
    state.lr.rotation = 0.3;
    state.lr.color = 0.1;
    GradientBuffers g = zero_grads(1);
    for (int i = 0; i < 20; ++i) {
        g.rotation[0] = Quat(0.3, -1.0, 0.5, 0.2);
        g.color[0] = Vec3(-1.0, 0.0, 1.0);
        adam_step(cloud, g, state);
        EXPECT_NEAR(cloud.primitives[0].rotation.norm(), 1.0, 1e-9);
    }
    EXPECT_LE(cloud.primitives[0].color.maxCoeff(), 1.0);
    EXPECT_GE(cloud.primitives[0].color.minCoeff(), 0.0);
}

TEST(Adam, NonFiniteGradientSkipsStep) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.2, 0.5));
    const GaussianCloud before = cloud;
    AdamState state;
    state.resize(1);
    GradientBuffers g = zero_grads(1);
    g.color[0][1] = NAN;
    EXPECT_FALSE(adam_step(cloud, g, state));
    EXPECT_EQ(state.step, 0u);
    EXPECT_EQ(cloud, before);
}

TEST(Adam, DecayedRates) {
    LearningRates lr;
    EXPECT_DOUBLE_EQ(lr.center_at(0.0), 1.6e-4);
    EXPECT_NEAR(lr.center_at(1.0), 1.6e-5, 1e-18);
    EXPECT_DOUBLE_EQ(lr.at(0.7).color, lr.color);
    lr.others_final_factor = 0.1;
    EXPECT_NEAR(lr.at(1.0).opacity, 5e-3, 1e-15);
}

TEST(Densify, QuietCloudUnchanged) {
    GaussianCloud cloud;
    for (int i = 0; i < 3; ++i) cloud.primitives.push_back(blob(Vec3(i, 0, 0), 0.1, 0.5));
    const GaussianCloud before = cloud;
    DensifyStats stats(3);
    stats.grad_norm_sum = {1e-5, 0.0, 1e-4};
    stats.count = {1, 0, 1};
    const DensifyResult r = densify_and_prune(cloud, stats, DensifyConfig{}, 10.0);
    EXPECT_EQ(cloud, before);
    EXPECT_EQ(r.cloned + r.split + r.pruned, 0u);
}

TEST(Densify, ClonesSmallHighGradientPrimitive) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.01, 0.5));
    cloud.primitives.push_back(blob(Vec3(1, 0, 0), 0.01, 0.5));
    DensifyStats stats(2);
    stats.grad_norm_sum[0] = 1e-2;
    stats.count[0] = 2;
    stats.center_grad_sum[0] = Vec3(0, 2, 0);
    AdamState adam;
    adam.resize(2);
    adam.m[0] = 7.0;
    adam.m[kParamsPerPrimitive] = 9.0;
    const DensifyResult r = densify_and_prune(cloud, stats, DensifyConfig{}, 10.0, &adam);
    EXPECT_EQ(r.cloned, 1u);
    ASSERT_EQ(cloud.size(), 3u);
    EXPECT_EQ(cloud.generation, 1u);
    EXPECT_LT(cloud.primitives[1].center.y(), 0.0);
    EXPECT_EQ(adam.primitives(), 3u);
    EXPECT_EQ(adam.m[kParamsPerPrimitive], 7.0);
    EXPECT_EQ(adam.m[2 * kParamsPerPrimitive], 9.0);
    EXPECT_EQ(stats.count.size(), 3u);
    EXPECT_EQ(stats.count[0], 0u);
}

TEST(Densify, SplitsLargeHighGradientPrimitive) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.5, 0.5));
    DensifyStats stats(1);
    stats.grad_norm_sum[0] = 1.0;
    stats.count[0] = 1;
    const DensifyResult r = densify_and_prune(cloud, stats, DensifyConfig{}, 2.0);
    EXPECT_EQ(r.split, 1u);
    ASSERT_EQ(cloud.size(), 2u);
    for (const auto& p : cloud.primitives) EXPECT_NEAR(p.scale().x(), 0.5 / 1.6, 1e-12);
    EXPECT_NEAR((cloud.primitives[0].center + cloud.primitives[1].center).norm(), 0.0, 1e-12);
}

TEST(Densify, PrunesTransparentButKeepsOne) {
    GaussianCloud cloud;
    cloud.primitives.push_back(blob(Vec3::Zero(), 0.1, 0.001));
    cloud.primitives.push_back(blob(Vec3(1, 0, 0), 0.1, 0.5));
    DensifyStats stats(2);
    const DensifyResult r = densify_and_prune(cloud, stats, DensifyConfig{}, 1.0);
    EXPECT_EQ(r.pruned, 1u);
    ASSERT_EQ(cloud.size(), 1u);
    EXPECT_NEAR(cloud.primitives[0].opacity(), 0.5, 1e-12);

    GaussianCloud faint;
    faint.primitives.push_back(blob(Vec3::Zero(), 0.1, 0.001));
    faint.primitives.push_back(blob(Vec3(1, 0, 0), 0.1, 0.002));
    DensifyStats s2(2);
    densify_and_prune(faint, s2, DensifyConfig{}, 1.0);
    ASSERT_EQ(faint.size(), 1u);
    EXPECT_NEAR(faint.primitives[0].opacity(), 0.002, 1e-12);
}

TEST(Densify, EventSchedule) {
    const DensifyConfig c;
    std::vector<int> events;
    for (int s = 0; s < 300; ++s) {
        if (c.is_event(s, 300)) events.push_back(s);
    }
    EXPECT_EQ(events, (std::vector<int>{50, 100, 150, 200}));
}

TEST(DepthPrior, RenderedMatchesRenderer) {
    GaussianCloud truth;
    truth.primitives.push_back(blob(Vec3::Zero(), 0.3, 0.9));
    RenderedDepthPrior prior(truth, 2.0);
    const Camera cam = orbit_camera(10, 5, 2.5, 16, 16);
    const ImageBuffer d = prior.estimate(cam, ImageBuffer(16, 16, 3));
    const RenderOutput r = render(truth, cam, Vec3::Zero());
    EXPECT_NEAR(d.at(8, 8), 2.0 * r.depth.at(8, 8), 1e-12);
}

TEST(DepthPrior, MapFilesRoundTripAndNearestLookup) {
    const auto dir = std::filesystem::temp_directory_path() / "gsgen_depth_test";
    std::filesystem::create_directories(dir);
    ImageBuffer depth(8, 6, 1);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 8; ++x) depth.at(x, y) = 1.0 + 0.1 * x + 0.01 * y;
    }
    write_depth_map(dir / "d.png", depth);
    const ImageBuffer back = read_depth_map(dir / "d.png");
    for (std::size_t i = 0; i < depth.size(); ++i) EXPECT_NEAR(back.data()[i], depth.data()[i], 2.0 / 65535.0);

    FileDepthPrior files({{orbit_camera(0, 0, 2.5, 8, 6), ImageBuffer(8, 6, 1, 1.0)},
                          {orbit_camera(90, 0, 2.5, 8, 6), ImageBuffer(8, 6, 1, 2.0)}});
    EXPECT_EQ(files.estimate(orbit_camera(80, 10, 2.5, 8, 6), {}).at(0, 0), 2.0);
    EXPECT_EQ(files.estimate(orbit_camera(10, 10, 2.5, 4, 3), {}).width(), 4);
    std::filesystem::remove_all(dir);
}

TEST(DepthPrior, RemoteServiceRoundTrip) {
    gsgen::testing::StubServer server([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const ImageBuffer view = decode_png(base64_decode(body["views"][0].get<std::string>()));
        ImageBuffer depth(view.width(), view.height(), 1, 0.5);
        res.set_content(nlohmann::json{{"views", {base64_encode(encode_png(depth, 16))}}, {"scale", 4.0}}.dump(),
                        "application/json");
    });
    RemoteDepthPrior remote({server.url("/depth"), std::chrono::milliseconds(5000)});
    const ImageBuffer d = remote.estimate(orbit_camera(0, 0, 2.5, 8, 8), ImageBuffer(8, 8, 3, 0.2));
    EXPECT_NEAR(d.at(3, 3), 2.0, 1e-4);
}

TEST(Train, ScheduleConformanceAndFinalViews) {
    GaussianCloud init = init_cloud(30, 2);
    RecordingGuidance guidance;
    TrainProviders providers;
    providers.guidance = &guidance;
    TrainConfig config = small_config(120);
    config.densify.interval = 20;
    config.densify.start_step = 20;
    const TrainResult r = train(init, config, providers);
    ASSERT_FALSE(r.aborted);
    EXPECT_EQ(r.densify_steps, (std::vector<int>{20, 40, 60, 80}));
    ASSERT_EQ(guidance.requests.size(), 120u);
    for (int step = 100; step < 120; ++step) {
        std::multiset<long> azimuths;
        for (const auto& c : guidance.requests[static_cast<std::size_t>(step)].cameras) {
            azimuths.insert(std::lround(c.azimuth_deg()));
            EXPECT_NEAR(c.elevation_deg(), 0.0, 1e-9);
        }
        EXPECT_EQ(azimuths, (std::multiset<long>{-90, 0, 90, 180}));
    }
    for (const auto& entry : r.log) EXPECT_TRUE(entry.report.all_finite());
    EXPECT_NEAR(guidance.requests.front().timestep, 0.98, 1e-12);
    EXPECT_LT(guidance.requests.back().timestep, 0.03);
}

TEST(Train, ResolutionRampDrivesRenderSize) {
    RecordingGuidance guidance;
    TrainProviders providers;
    providers.guidance = &guidance;
    TrainConfig config = small_config(10);
    config.fixed_resolution.reset();
    config.ramp.resolutions = {8, 12, 16};
    train(init_cloud(5, 1), config, providers);
    EXPECT_EQ(guidance.requests[0].views[0].width(), 8);
    EXPECT_EQ(guidance.requests[3].views[0].width(), 12);
    EXPECT_EQ(guidance.requests[6].views[0].width(), 16);
}

TEST(Train, DeterministicAcrossRuns) {
    const auto scene = gsgen::testing::make_recovery_scene(3, 24);
    TrainConfig config = gsgen::testing::recovery_config(3, 60, 24);
    const auto a = gsgen::testing::run_recovery(scene, config, 40);
    const auto b = gsgen::testing::run_recovery(scene, config, 40);
    EXPECT_EQ(a.result.cloud, b.result.cloud);
    ASSERT_EQ(a.result.log.size(), b.result.log.size());
    for (std::size_t i = 0; i < a.result.log.size(); ++i) {
        EXPECT_EQ(a.result.log[i].report.total, b.result.log[i].report.total);
    }
}

TEST(Train, GuidanceFailuresSkipTheTerm) {
    RecordingGuidance guidance;
    guidance.fail_every = 3;
    TrainProviders providers;
    providers.guidance = &guidance;
    const TrainResult r = train(init_cloud(10, 4), small_config(9), providers);
    ASSERT_FALSE(r.aborted);
    ASSERT_EQ(r.log.size(), 9u);
    EXPECT_TRUE(r.log[2].guidance_skipped);
    EXPECT_EQ(r.log[2].report.guidance, 0.0);
    EXPECT_FALSE(r.log[3].guidance_skipped);
}

TEST(Train, UnrecoverableProviderAbortsWithPartialLog) {
    RecordingGuidance guidance;
    guidance.fail_every = 4;
    guidance.fail_kind = ServiceErrorKind::NoReferences;
    TrainProviders providers;
    providers.guidance = &guidance;
    const TrainResult r = train(init_cloud(10, 4), small_config(9), providers);
    EXPECT_TRUE(r.aborted);
    EXPECT_EQ(r.log.size(), 3u);
}

TEST(Train, PruningOnlyRemovesTransparentPrimitives) {
    const auto scene = gsgen::testing::make_recovery_scene(8, 24);
    TrainConfig config = gsgen::testing::recovery_config(8, 150, 24);
    config.densify.interval = 25;
    config.densify.start_step = 25;
    config.densify.stop_fraction = 0.9;
    const auto out = gsgen::testing::run_recovery(scene, config, 60);
    ASSERT_FALSE(out.result.aborted);
    ASSERT_FALSE(out.result.densify_events.empty());
    std::size_t previous = 60;
    for (const auto& d : out.result.densify_events) {
        EXPECT_EQ(d.before, previous);
        EXPECT_EQ(d.after, d.before + d.cloned + d.split - d.pruned);
        EXPECT_GE(d.before + d.cloned + d.split, d.before);
        for (double o : d.pruned_opacities) EXPECT_LT(o, config.densify.prune_opacity);
        previous = d.after;
    }
    EXPECT_EQ(previous, out.result.cloud.size());
    for (const auto& e : out.result.log) EXPECT_TRUE(e.report.all_finite());
}
