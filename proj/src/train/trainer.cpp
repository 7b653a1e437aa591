#include "gsgen/train/trainer.hpp"
#include "gsgen/mesh/texture.hpp"
#include "gsgen/render/splat_renderer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>

namespace gsgen {

void ResolutionRamp::validate() const {
    if (!(fractions[0] > 0.0 && fractions[0] < fractions[1] && fractions[1] < 1.0)) {
        throw std::invalid_argument("resolution ramp fractions must be increasing inside (0,1)");
    }
    for (int r : resolutions) {
        if (r < 1) throw std::invalid_argument("resolutions must be >= 1");
    }
}

int resolution_at(double fraction, const ResolutionRamp& ramp) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("resolution_at: fraction outside [0,1]");
    if (fraction < ramp.fractions[0]) return ramp.resolutions[0];
    if (fraction < ramp.fractions[1]) return ramp.resolutions[1];
    return ramp.resolutions[2];
}

void TrainConfig::validate() const {
    if (stage1_steps < 1) throw std::invalid_argument("stage1_steps must be >= 1");
    if (run_stage2 && stage2_steps < 1) throw std::invalid_argument("stage2_steps must be >= 1");
    ramp.validate();
    if (fixed_resolution && *fixed_resolution < 1) throw std::invalid_argument("fixed_resolution must be >= 1");
    if (!(cameras.final_fixed_fraction > 0.0 && cameras.final_fixed_fraction < 1.0)) {
        throw std::invalid_argument("final fixed-view fraction must lie in (0,1)");
    }
    if (cameras.azimuth_min > cameras.azimuth_max || cameras.elevation_min > cameras.elevation_max) {
        throw std::invalid_argument("camera ranges are inverted");
    }
    if (!(cameras.radius > 0.0)) throw std::invalid_argument("camera radius must be > 0");
    lr.validate();
    densify.validate();
    loss.validate();
    if (!(timestep_start > 0.0 && timestep_start <= 1.0 && timestep_end > 0.0 && timestep_end <= 1.0)) {
        throw std::invalid_argument("timesteps must lie in (0,1]");
    }
    if (!(guidance_w >= 0.0)) throw std::invalid_argument("guidance weight must be >= 0");
}

TrainingPhase stage1_phase(const TrainConfig& config, int step) {
    TrainingPhase phase;
    phase.step_fraction = static_cast<double>(step) / config.stage1_steps;
    phase.final_fixed_fraction = config.cameras.final_fixed_fraction;
    phase.azimuth_min = config.cameras.azimuth_min;
    phase.azimuth_max = config.cameras.azimuth_max;
    phase.elevation_min = config.cameras.elevation_min;
    phase.elevation_max = config.cameras.elevation_max;
    phase.radius = config.cameras.radius;
    phase.fov_y_deg = config.cameras.fov_y_deg;
    phase.resolution = config.fixed_resolution ? *config.fixed_resolution : resolution_at(phase.step_fraction, config.ramp);
    return phase;
}

namespace {

void add_scaled(ImageBuffer& dst, const ImageBuffer& src, double s) {
    auto d = dst.data();
    const auto v = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * v[i];
}

struct Stage1Step {
    LossReport report;
    GradientBuffers grads;
    bool guidance_skipped = false;
};

Stage1Step stage1_step(const GaussianCloud& cloud, const TrainConfig& config, TrainProviders& providers,
                       const std::array<Camera, 4>& cameras, int step) {
    const double fraction = static_cast<double>(step) / config.stage1_steps;
    const LossConfig& lc = config.loss;
    std::array<RenderOutput, 4> renders;
    GuidanceRequest request;
    for (std::size_t k = 0; k < 4; ++k) {
        renders[k] = render(cloud, cameras[k], config.background);
        request.views[k] = renders[k].color;
        request.cameras[k] = cameras[k];
    }
    request.prompt = config.prompt;
    request.timestep = annealed_timestep(fraction, config.timestep_start, config.timestep_end);
    request.weight = config.guidance_w;
    request.seed = config.seed + static_cast<std::uint64_t>(step);

    Stage1Step out;
    std::array<RenderUpstream, 4> up;
    for (std::size_t k = 0; k < 4; ++k) {
        const int w = cameras[k].width, h = cameras[k].height;
        up[k] = {ImageBuffer(w, h, 3), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};
    }

    std::optional<GuidanceResponse> response;
    try {
        response = providers.guidance->guide(request);
        validate_response(request, *response);
    } catch (const GuidanceError& e) {
        if (e.kind() == ServiceErrorKind::NoReferences) throw;
        spdlog::warn("step {}: guidance skipped ({}: {})", step, to_string(e.kind()), e.what());
        response.reset();
        out.guidance_skipped = true;
    }

    LossReport& r = out.report;
    if (response) {
        const ViewsLoss g = mv_sds_loss(request.views, response->views, request.weight);
        r.guidance = g.value;
        for (std::size_t k = 0; k < 4; ++k) add_scaled(up[k].color, g.grads[k], lc.guidance_weight);

        if (response->masks) {
            std::array<ImageBuffer, 4> alphas;
            for (std::size_t k = 0; k < 4; ++k) alphas[k] = renders[k].alpha;
            const ViewsLoss m = mask_loss(alphas, *response->masks);
            r.mask = m.value;
            for (std::size_t k = 0; k < 4; ++k) add_scaled(up[k].alpha, m.grads[k], lc.mask_weight);
        }

        if (providers.features) {
            for (std::size_t k = 0; k < 4; ++k) {
                const auto fr = providers.features->extract(renders[k].color);
                const auto ft = providers.features->extract(response->views[k]);
                const FeatureLoss f = feature_loss(fr, ft);
                r.feature += f.value / 4.0;
                add_scaled(up[k].color, providers.features->backward(renders[k].color, f.grad), lc.feature_weight / 4.0);
            }
        }

        if (providers.depth) {
            for (std::size_t k = 0; k < 4; ++k) {
                const ImageBuffer prior = providers.depth->estimate(cameras[k], response->views[k]);
                require_same_shape(prior, renders[k].depth, "depth prior");
                const ImageBuffer valid = depth_valid_mask(renders[k].alpha, prior, lc.valid_alpha_threshold);
                const DepthLoss d = depth_loss(renders[k].depth, prior, valid, lc);
                r.scale += d.scale / 4.0;
                r.multiscale += d.multiscale / 4.0;
                r.huber += d.huber / 4.0;
                r.depth += d.total.value / 4.0;
                add_scaled(up[k].depth, d.total.grad, lc.depth_weight / 4.0);
            }
        }
    }
    r.total = lc.guidance_weight * r.guidance + lc.mask_weight * r.mask + lc.feature_weight * r.feature +
              lc.depth_weight * r.depth;

    out.grads = GradientBuffers(cloud.size());
    for (std::size_t k = 0; k < 4; ++k) out.grads += render_backward(cloud, cameras[k], config.background, up[k]);
    return out;
}

} // namespace

TrainResult train(const GaussianCloud& initial, const TrainConfig& config, TrainProviders& providers) {
    config.validate();
    if (!providers.guidance) throw std::invalid_argument("train: a guidance provider is required");
    if (initial.empty()) throw std::invalid_argument("train: initial cloud is empty");

    TrainResult result;
    result.cloud = initial;
    GaussianCloud& cloud = result.cloud;

    AdamState adam;
    adam.lr = config.lr;
    adam.beta1 = config.adam_beta1;
    adam.beta2 = config.adam_beta2;
    adam.resize(cloud.size());
    DensifyStats stats(cloud.size());
    CameraSampler sampler(config.seed);
    const double extent = std::max(scene_extent(initial), 1e-3);

    for (int step = 0; step < config.stage1_steps; ++step) {
        const TrainingPhase phase = stage1_phase(config, step);
        std::array<Camera, 4> cameras = sampler.next_orthogonal_set(phase);
        for (auto& c : cameras) {
            if (auto snapped = providers.guidance->snap_camera(c)) c = *snapped;
        }

        Stage1Step s;
        try {
            s = stage1_step(cloud, config, providers, cameras, step);
        } catch (const std::exception& e) {
            spdlog::error("step {}: aborting ({})", step, e.what());
            result.aborted = true;
            result.abort_reason = e.what();
            return result;
        }
        if (!s.report.all_finite()) {
            result.aborted = true;
            result.abort_reason = "non-finite loss at step " + std::to_string(step);
            return result;
        }

        stats.accumulate(s.grads);
        adam.lr = config.lr.at(phase.step_fraction);
        adam_step(cloud, s.grads, adam);
        if (config.densify.is_event(step, config.stage1_steps)) {
            const DensifyResult d = densify_and_prune(cloud, stats, config.densify, extent, &adam);
            result.densify_steps.push_back(step);
            result.densify_events.push_back(d);
            spdlog::debug("step {}: cloned {} split {} pruned {} -> {}", step, d.cloned, d.split, d.pruned,
                          cloud.size());
        }
        result.log.push_back({step, 1, s.report, s.guidance_skipped, cloud.size(), phase.resolution});
    }

    if (config.run_stage2) {
        try {
            run_texture_stage(result, config, providers);
        } catch (const EmptyIsosurface& e) {
            result.aborted = true;
            result.abort_reason = std::string("empty isosurface: ") + e.what();
        }
    }
    return result;
}

} // namespace gsgen
