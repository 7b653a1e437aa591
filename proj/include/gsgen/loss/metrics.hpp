#pragma once

#include "gsgen/core/image.hpp"

namespace gsgen {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for images in [0, 1]; capped at 99 dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Mean SSIM over pixels and channels with an 11x11 Gaussian window
/// (sigma 1.5, zero padded).
double ssim(const ImageBuffer& a, const ImageBuffer& b);

struct SsimWithGrad {
    double value = 0.0;
    ImageBuffer grad; ///< dSSIM/da
};

SsimWithGrad ssim_with_grad(const ImageBuffer& a, const ImageBuffer& b);

} // namespace gsgen
