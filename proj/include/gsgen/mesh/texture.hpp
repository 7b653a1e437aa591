#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/guidance/guidance.hpp"
#include "gsgen/io/http.hpp"
#include "gsgen/mesh/mesh.hpp"
#include "gsgen/train/trainer.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace gsgen {

struct BakeView {
    Camera camera;
    ImageBuffer image;
};

struct BakeConfig {
    /// Views whose camera-space normal z (facing amount) is below this do
    /// not paint a texel.
    double normal_threshold = 0.1;
    bool dilate = true;
};

struct BakeReport {
    std::size_t chart_texels = 0;
    std::size_t written_texels = 0;
    std::vector<std::size_t> writes_per_view;
    /// Per texel, index of the painting view or -1.
    std::vector<int> texel_view;

    double coverage() const {
        return chart_texels == 0 ? 0.0 : static_cast<double>(written_texels) / static_cast<double>(chart_texels);
    }
};

/// Facing amount of a world normal in a camera: minus the view-space z.
double camera_normal_z(const Camera& camera, const Vec3& world_normal);

/// Paints every chart texel from the visible view that faces it most; exact
/// ties go to the camera with the lexicographically smallest position, so the
/// result does not depend on view order. Unpainted texels are then filled
/// from the nearest painted texel.
BakeReport bake_texture(TexturedMesh& mesh, std::span<const BakeView> views, const BakeConfig& config = {});

/// Canonical azimuths at elevations 0 and +-30 plus top and bottom.
std::vector<Camera> default_bake_cameras(int resolution, double radius = kDefaultOrbitRadius,
                                         double fov_y_deg = kDefaultFovDeg);

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual ImageBuffer denoise(const ImageBuffer& noisy, const Camera& camera, double t, std::uint64_t seed) = 0;
};

class IdentityDenoiser final : public Denoiser {
public:
    ImageBuffer denoise(const ImageBuffer& noisy, const Camera&, double, std::uint64_t) override { return noisy; }
};

/// (1 - strength) * input + strength * nearest reference view.
class ReferenceBlendDenoiser final : public Denoiser {
public:
    ReferenceBlendDenoiser(std::vector<ReferenceView> references, double strength = 1.0);
    ImageBuffer denoise(const ImageBuffer& noisy, const Camera& camera, double t, std::uint64_t seed) override;

private:
    ReferenceGuidance references_;
    double strength_;
};

/// Single-view form of the guidance wire format.
class RemoteDenoiser final : public Denoiser {
public:
    explicit RemoteDenoiser(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    ImageBuffer denoise(const ImageBuffer& noisy, const Camera& camera, double t, std::uint64_t seed) override;

private:
    HttpEndpoint endpoint_;
};

/// image + t * N(0,1) per value, deterministic per seed.
ImageBuffer add_noise(const ImageBuffer& image, double t, std::uint64_t seed);

struct RefineConfig {
    double t_start = 0.5;
    double learning_rate = 1e-2;
    double refine_weight = 1.0;
    double color_weight = 1.0;
    double color_ssim_mix = 0.2;
    Vec3 background = Vec3::Zero();
    std::uint64_t seed = 0;

    void validate() const;
};

struct RefineStep {
    double refine = 0.0;
    double color = 0.0;
    double total = 0.0;
    bool skipped = false;
};

/// One texture update per camera set: the refine term pulls each render
/// towards its re-denoised copy, the color term towards the reference views
/// when `references` is given. Only chart texels change.
std::vector<RefineStep> refine_texture(TexturedMesh& mesh, std::span<const std::array<Camera, 4>> camera_sets,
                                       Denoiser& denoiser, GuidanceProvider* references, const RefineConfig& config);

class EmptyIsosurface : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mesh from the cloud's density at iso_level * max density. Throws
/// EmptyIsosurface when nothing crosses the level.
TexturedMesh extract_textured_mesh(const GaussianCloud& cloud, const TextureStageConfig& config,
                                   const Vec3& background);

/// Stage 2 of train(): extraction, baking, refinement. Appends to the log.
void run_texture_stage(TrainResult& result, const TrainConfig& config, TrainProviders& providers);

} // namespace gsgen
