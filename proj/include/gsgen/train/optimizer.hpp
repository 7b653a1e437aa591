#pragma once

#include "gsgen/core/gaussian.hpp"
#include "gsgen/render/splat_renderer.hpp"

#include <cstdint>
#include <vector>

namespace gsgen {

/// Stored parameters per primitive: center 3, log-scale 3, rotation 4,
/// opacity logit 1, color 3.
inline constexpr std::size_t kParamsPerPrimitive = 14;

struct LearningRates {
    double center = 1.6e-4;
    /// Center rate at the end of stage 1 relative to its start.
    double center_final_factor = 0.1;
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double color = 2.5e-3;
    /// Final/initial ratio for the non-center classes; 1 keeps them constant.
    double others_final_factor = 1.0;

    /// Exponentially decayed center rate at a stage-1 fraction.
    double center_at(double fraction) const;
    /// Every class at a stage-1 fraction.
    LearningRates at(double fraction) const;
    void validate() const;
};

struct AdamState {
    LearningRates lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    std::uint64_t step = 0;
    std::vector<double> m; ///< kParamsPerPrimitive per primitive
    std::vector<double> v;

    std::size_t primitives() const { return m.size() / kParamsPerPrimitive; }
    void resize(std::size_t primitives);
    /// Rebuilds rows so that new row i is old row source[i].
    void remap(const std::vector<std::size_t>& source);
    bool finite() const;
};

/// One bias-corrected Adam update of every primitive, then quaternions are
/// renormalized and colors clamped to [0,1]. Rates come from `state.lr`.
/// Returns false and leaves everything untouched when a gradient is
/// non-finite.
bool adam_step(GaussianCloud& cloud, const GradientBuffers& grads, AdamState& state);

struct DensifyStats {
    std::vector<double> grad_norm_sum; ///< screen-space mean gradient norms
    std::vector<std::size_t> count;    ///< views in which the primitive was visible
    std::vector<Vec3> center_grad_sum;

    explicit DensifyStats(std::size_t n = 0) { reset(n); }
    void reset(std::size_t n);
    void accumulate(const GradientBuffers& grads);
    double mean(std::size_t i) const { return count[i] == 0 ? 0.0 : grad_norm_sum[i] / static_cast<double>(count[i]); }
};

struct DensifyConfig {
    int interval = 50;
    int start_step = 50;
    /// Last densify event happens before this fraction of stage 1.
    double stop_fraction = 0.8;
    double grad_threshold = 2e-4;
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// extent are split instead of cloned.
    double split_extent_fraction = 0.01;
    double split_divisor = 1.6;
    double prune_opacity = 0.005;
    std::size_t max_primitives = 50000;

    bool is_event(int step, int stage1_steps) const;
    void validate() const;
};

struct DensifyResult {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    std::size_t before = 0;
    std::size_t after = 0;
    /// Activated opacity of each removed primitive at removal time.
    std::vector<double> pruned_opacities;
};

/// Clones small and splits large high-gradient primitives, then removes those
/// with opacity below the prune threshold (keeping at least one). Optimizer
/// rows follow their primitives. Stats are reset to the new size.
DensifyResult densify_and_prune(GaussianCloud& cloud, DensifyStats& stats, const DensifyConfig& config,
                                double scene_extent, AdamState* optimizer = nullptr);

/// Radius of the bounding sphere of the centers around their mean.
double scene_extent(const GaussianCloud& cloud);

} // namespace gsgen
