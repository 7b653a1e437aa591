#include "gsgen/loss/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gsgen {

namespace {

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_taps() {
    static const std::array<double, kWindow> taps = [] {
        std::array<double, kWindow> t{};
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double x = i - kRadius;
            t[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSigma * kSigma));
            sum += t[static_cast<std::size_t>(i)];
        }
        for (double& v : t) v /= sum;
        return t;
    }();
    return taps;
}

using Plane = std::vector<double>;

// Separable Gaussian filter with zero padding. Symmetric, so it is its own adjoint.
Plane blur(const Plane& in, int w, int h) {
    const auto& taps = gaussian_taps();
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int xx = x + k;
                if (xx < 0 || xx >= w) continue;
                acc += taps[static_cast<std::size_t>(k + kRadius)] * in[static_cast<std::size_t>(y * w + xx)];
            }
            tmp[static_cast<std::size_t>(y * w + x)] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int yy = y + k;
                if (yy < 0 || yy >= h) continue;
                acc += taps[static_cast<std::size_t>(k + kRadius)] * tmp[static_cast<std::size_t>(yy * w + x)];
            }
            out[static_cast<std::size_t>(y * w + x)] = acc;
        }
    }
    return out;
}

Plane channel_plane(const ImageBuffer& img, int c) {
    Plane p(img.pixel_count());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            p[static_cast<std::size_t>(y * img.width() + x)] = img.at(x, y, c);
        }
    }
    return p;
}

SsimWithGrad ssim_impl(const ImageBuffer& a, const ImageBuffer& b, bool want_grad) {
    require_same_shape(a, b, "ssim");
    const int w = a.width(), h = a.height();
    const std::size_t n = a.pixel_count();
    const double total = static_cast<double>(n * static_cast<std::size_t>(a.channels()));
    SsimWithGrad out;
    if (want_grad) out.grad = ImageBuffer(w, h, a.channels());

    for (int c = 0; c < a.channels(); ++c) {
        const Plane pa = channel_plane(a, c);
        const Plane pb = channel_plane(b, c);
        Plane aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const Plane mu_a = blur(pa, w, h), mu_b = blur(pb, w, h);
        const Plane f_aa = blur(aa, w, h), f_bb = blur(bb, w, h), f_ab = blur(ab, w, h);

        Plane g_mu(n), g_fab(n), g_faa(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double var_a = f_aa[i] - ma * ma;
            const double var_b = f_bb[i] - mb * mb;
            const double cov = f_ab[i] - ma * mb;
            const double a1 = 2.0 * ma * mb + kC1;
            const double a2 = 2.0 * cov + kC2;
            const double b1 = ma * ma + mb * mb + kC1;
            const double b2 = var_a + var_b + kC2;
            const double s = (a1 * a2) / (b1 * b2);
            out.value += s;
            if (want_grad) {
                g_mu[i] = s * (2.0 * mb / a1 - 2.0 * ma / b1 - 2.0 * mb / a2 + 2.0 * ma / b2) / total;
                g_fab[i] = s * 2.0 / a2 / total;
                g_faa[i] = -s / b2 / total;
            }
        }
        if (want_grad) {
            const Plane bg_mu = blur(g_mu, w, h), bg_fab = blur(g_fab, w, h), bg_faa = blur(g_faa, w, h);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y * w + x);
                    out.grad.at(x, y, c) = bg_mu[i] + pb[i] * bg_fab[i] + 2.0 * pa[i] * bg_faa[i];
                }
            }
        }
    }
    out.value /= total;
    return out;
}

} // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "psnr");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a.data()[i] - b.data()[i];
        sum += e * e;
    }
    const double mse = sum / static_cast<double>(a.size());
    if (mse < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) { return ssim_impl(a, b, false).value; }

SsimWithGrad ssim_with_grad(const ImageBuffer& a, const ImageBuffer& b) { return ssim_impl(a, b, true); }

} // namespace gsgen
