#pragma once

#include "gsgen/core/image.hpp"

#include <span>
#include <vector>

namespace gsgen {

/// A scalar loss over one buffer together with its gradient with respect to
/// the first (rendered) argument.
struct BufferLoss {
    double value = 0.0;
    ImageBuffer grad;
    std::size_t valid_count = 0;
};

/// Same, for losses that span several views.
struct ViewsLoss {
    double value = 0.0;
    std::vector<ImageBuffer> grads;
};

struct DepthScale {
    double factor = 1.0; ///< resampling factor in (0, 1]
    double weight = 0.0;
};

struct LossConfig {
    // Depth term weights.
    double depth_scale_weight = 1.0;      // alpha
    double depth_multiscale_weight = 0.5; // beta
    double depth_huber_weight = 0.5;      // gamma
    std::vector<DepthScale> depth_scales = {{1.0, 0.1}, {0.5, 0.05}, {0.25, 0.025}};
    double huber_delta = 0.5;
    /// Mix between L1 and D-SSIM in the color loss.
    double color_ssim_mix = 0.2;

    // Weights in the total objective.
    double guidance_weight = 1.0;
    double mask_weight = 1.0;
    double feature_weight = 0.1;
    double depth_weight = 1.0;
    double color_weight = 1.0;
    double refine_weight = 1.0;

    /// Rendered alpha above which a pixel takes part in depth losses.
    double valid_alpha_threshold = 0.5;

    void validate() const;
};

struct LossReport {
    double guidance = 0.0;
    double scale = 0.0;
    double multiscale = 0.0;
    double huber = 0.0;
    double depth = 0.0;
    double mask = 0.0;
    double feature = 0.0;
    double color = 0.0;
    double refine = 0.0;
    double total = 0.0;

    bool all_finite() const;
};

/// Valid-pixel mask for depth losses: rendered alpha above `threshold` and
/// prior depth present (> 0).
ImageBuffer depth_valid_mask(const ImageBuffer& rendered_alpha, const ImageBuffer& prior_depth, double threshold);

inline constexpr double kMinDepth = 1e-6;

/// Log-domain mean squared error with the mean log-ratio removed, so any
/// global scaling of either map leaves the loss unchanged.
BufferLoss scale_invariant_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid);

/// Sum over scales of weight * mean |D_s - prior_s|, where *_s is the valid-
/// pixel area average over blocks of round(1/factor) pixels.
BufferLoss multiscale_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                                 std::span<const DepthScale> scales);

BufferLoss huber_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                            double delta);

struct DepthLoss {
    BufferLoss total;
    double scale = 0.0;
    double multiscale = 0.0;
    double huber = 0.0;
};

DepthLoss depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                     const LossConfig& config);

/// Mean squared difference between rendered alpha and reference masks over
/// all pixels of all views.
ViewsLoss mask_loss(std::span<const ImageBuffer> rendered_alpha, std::span<const ImageBuffer> reference_masks);

struct FeatureLoss {
    double value = 0.0;
    std::vector<double> grad; ///< with respect to the render features
};

/// 1 - cosine similarity. Throws std::domain_error on a zero-norm vector.
FeatureLoss feature_loss(std::span<const double> render_features, std::span<const double> reference_features);

/// (1 - mix) * L1 + mix * (1 - SSIM) / 2, averaged over views.
ViewsLoss color_loss(std::span<const ImageBuffer> rendered, std::span<const ImageBuffer> reference, double mix);

/// Mean squared error between the refined image and the render; gradient is
/// with respect to the render.
BufferLoss refine_loss(const ImageBuffer& refined, const ImageBuffer& render);

/// Plain mean squared error, gradient with respect to `a`.
BufferLoss mse_loss(const ImageBuffer& a, const ImageBuffer& b);

/// Mean absolute error, gradient with respect to `a`.
BufferLoss l1_loss(const ImageBuffer& a, const ImageBuffer& b);

} // namespace gsgen
