#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/core/gaussian.hpp"
#include "gsgen/guidance/guidance.hpp"
#include "gsgen/loss/features.hpp"
#include "gsgen/loss/losses.hpp"
#include "gsgen/train/depth_prior.hpp"
#include "gsgen/train/optimizer.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gsgen {

struct ResolutionRamp {
    std::array<double, 2> fractions = {0.30, 0.60};
    std::array<int, 3> resolutions = {128, 256, 512};

    void validate() const;
};

/// Piecewise-constant resolution; a boundary belongs to the later segment.
int resolution_at(double fraction, const ResolutionRamp& ramp = {});

struct CameraRanges {
    double azimuth_min = -180.0;
    double azimuth_max = 180.0;
    double elevation_min = -30.0;
    double elevation_max = 30.0;
    double radius = kDefaultOrbitRadius;
    double fov_y_deg = kDefaultFovDeg;
    double final_fixed_fraction = 1.0 / 6.0;
};

struct TextureStageConfig {
    int grid_resolution = 64;
    double iso_level = 0.2;
    int texture_size = 256;
    int bake_resolution = 128;
    int render_resolution = 128;
    /// Noise level of the re-denoise step, in (0,1].
    double noise_strength = 0.5;
    double learning_rate = 1e-2;
};

struct TrainConfig {
    int stage1_steps = 300;
    int stage2_steps = 60;
    bool run_stage2 = true;
    ResolutionRamp ramp;
    /// Overrides the ramp when set.
    std::optional<int> fixed_resolution;
    CameraRanges cameras;
    LearningRates lr;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    DensifyConfig densify;
    LossConfig loss;
    double timestep_start = 0.98;
    double timestep_end = 0.02;
    /// Guidance weight w(t), constant.
    double guidance_w = 1.0;
    std::string prompt;
    Vec3 background = Vec3::Zero();
    TextureStageConfig texture;
    std::uint64_t seed = 0;

    void validate() const;
};

class Denoiser;
struct TexturedMesh;

struct TrainProviders {
    GuidanceProvider* guidance = nullptr;          ///< required
    DepthPriorProvider* depth = nullptr;           ///< optional
    const FeatureExtractor* features = nullptr;    ///< optional
    Denoiser* denoiser = nullptr;                  ///< optional, identity when absent
};

struct StepLog {
    int step = 0;
    int stage = 1;
    LossReport report;
    bool guidance_skipped = false;
    std::size_t primitives = 0;
    int resolution = 0;
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<StepLog> log;
    std::vector<int> densify_steps;
    std::vector<DensifyResult> densify_events;
    std::shared_ptr<TexturedMesh> mesh; ///< set when stage 2 ran
    bool aborted = false;
    std::string abort_reason;
};

/// Stage 1 optimizes the cloud against guidance, mask, depth and feature
/// terms; stage 2 extracts a mesh and refines its texture.
TrainResult train(const GaussianCloud& initial, const TrainConfig& config, TrainProviders& providers);

/// Stage-1 phase at a given step, for the camera sampler.
TrainingPhase stage1_phase(const TrainConfig& config, int step);

} // namespace gsgen
