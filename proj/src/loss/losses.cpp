#include "gsgen/loss/losses.hpp"

#include "gsgen/loss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsgen {

namespace {

void require_depth_inputs(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                          const char* what) {
    require_same_shape(depth, prior, what);
    require_same_shape(depth, valid, what);
    if (depth.channels() != 1) {
        throw std::invalid_argument(std::string(what) + ": depth buffers must have one channel");
    }
}

bool is_valid(const ImageBuffer& valid, std::size_t i) { return valid.data()[i] > 0.5; }

} // namespace

void LossConfig::validate() const {
    const double weights[] = {depth_scale_weight, depth_multiscale_weight, depth_huber_weight, guidance_weight,
                              mask_weight,        feature_weight,          depth_weight,       color_weight,
                              refine_weight};
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
    }
    for (const auto& s : depth_scales) {
        if (!(s.factor > 0.0 && s.factor <= 1.0)) throw std::invalid_argument("depth scale factor must be in (0, 1]");
        if (!(s.weight >= 0.0)) throw std::invalid_argument("depth scale weight must be non-negative");
    }
    if (!(huber_delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
    if (!(color_ssim_mix >= 0.0 && color_ssim_mix <= 1.0)) {
        throw std::invalid_argument("color mix must be in [0, 1]");
    }
}

bool LossReport::all_finite() const {
    for (double v : {guidance, scale, multiscale, huber, depth, mask, feature, color, refine, total}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

ImageBuffer depth_valid_mask(const ImageBuffer& rendered_alpha, const ImageBuffer& prior_depth, double threshold) {
    require_same_shape(rendered_alpha, prior_depth, "depth_valid_mask");
    ImageBuffer mask(rendered_alpha.width(), rendered_alpha.height(), 1);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask.data()[i] = (rendered_alpha.data()[i] > threshold && prior_depth.data()[i] > 0.0) ? 1.0 : 0.0;
    }
    return mask;
}

BufferLoss scale_invariant_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid) {
    require_depth_inputs(depth, prior, valid, "scale_invariant_depth_loss");
    BufferLoss out{0.0, ImageBuffer(depth.width(), depth.height(), 1), 0};
    const auto d = depth.data();
    const auto p = prior.data();

    std::vector<double> residual(d.size(), 0.0);
    double mean = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        residual[i] = std::log(std::max(d[i], kMinDepth)) - std::log(std::max(p[i], kMinDepth));
        mean += residual[i];
        ++out.valid_count;
    }
    if (out.valid_count == 0) {
        return out;
    }
    const double n = static_cast<double>(out.valid_count);
    mean /= n;
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        const double e = residual[i] - mean;
        sum += e * e;
        // The centering term contributes sum_j e_j = 0 to every partial.
        out.grad.data()[i] = d[i] > kMinDepth ? e / (n * d[i]) : 0.0;
    }
    out.value = sum / (2.0 * n);
    return out;
}

BufferLoss multiscale_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                                 std::span<const DepthScale> scales) {
    require_depth_inputs(depth, prior, valid, "multiscale_depth_loss");
    const int w = depth.width(), h = depth.height();
    BufferLoss out{0.0, ImageBuffer(w, h, 1), 0};
    for (const auto& scale : scales) {
        if (!(scale.factor > 0.0 && scale.factor <= 1.0)) {
            throw std::invalid_argument("multiscale_depth_loss: scale factor must be in (0, 1]");
        }
        const int block = std::max(1, static_cast<int>(std::lround(1.0 / scale.factor)));
        const int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
        std::vector<double> sum_d(static_cast<std::size_t>(bw * bh), 0.0);
        std::vector<double> sum_p(sum_d.size(), 0.0);
        std::vector<int> count(sum_d.size(), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (valid.at(x, y) <= 0.5) continue;
                const std::size_t b = static_cast<std::size_t>((y / block) * bw + x / block);
                sum_d[b] += depth.at(x, y);
                sum_p[b] += prior.at(x, y);
                ++count[b];
            }
        }
        std::size_t cells = 0;
        double total = 0.0;
        std::vector<double> sign(sum_d.size(), 0.0);
        for (std::size_t b = 0; b < sum_d.size(); ++b) {
            if (count[b] == 0) continue;
            const double diff = (sum_d[b] - sum_p[b]) / count[b];
            total += std::abs(diff);
            sign[b] = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
            ++cells;
        }
        if (cells == 0) continue;
        out.valid_count = std::max(out.valid_count, cells);
        out.value += scale.weight * total / static_cast<double>(cells);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (valid.at(x, y) <= 0.5) continue;
                const std::size_t b = static_cast<std::size_t>((y / block) * bw + x / block);
                out.grad.at(x, y) += scale.weight * sign[b] / (static_cast<double>(cells) * count[b]);
            }
        }
    }
    return out;
}

BufferLoss huber_depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                            double delta) {
    require_depth_inputs(depth, prior, valid, "huber_depth_loss");
    if (!(delta > 0.0)) {
        throw std::invalid_argument("huber_depth_loss: delta must be positive");
    }
    BufferLoss out{0.0, ImageBuffer(depth.width(), depth.height(), 1), 0};
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (is_valid(valid, i)) ++out.valid_count;
    }
    if (out.valid_count == 0) return out;
    const double n = static_cast<double>(out.valid_count);
    double sum = 0.0;
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!is_valid(valid, i)) continue;
        const double e = depth.data()[i] - prior.data()[i];
        if (std::abs(e) <= delta) {
            sum += 0.5 * e * e;
            out.grad.data()[i] = e / n;
        } else {
            sum += delta * (std::abs(e) - 0.5 * delta);
            out.grad.data()[i] = delta * (e > 0 ? 1.0 : -1.0) / n;
        }
    }
    out.value = sum / n;
    return out;
}

DepthLoss depth_loss(const ImageBuffer& depth, const ImageBuffer& prior, const ImageBuffer& valid,
                     const LossConfig& config) {
    DepthLoss out;
    out.total = BufferLoss{0.0, ImageBuffer(depth.width(), depth.height(), 1), 0};
    const auto add = [&](const BufferLoss& term, double weight) {
        out.total.value += weight * term.value;
        out.total.valid_count = std::max(out.total.valid_count, term.valid_count);
        if (weight == 0.0) return;
        for (std::size_t i = 0; i < out.total.grad.size(); ++i) {
            out.total.grad.data()[i] += weight * term.grad.data()[i];
        }
    };
    const BufferLoss scale = scale_invariant_depth_loss(depth, prior, valid);
    const BufferLoss multi = multiscale_depth_loss(depth, prior, valid, config.depth_scales);
    const BufferLoss huber = huber_depth_loss(depth, prior, valid, config.huber_delta);
    out.scale = scale.value;
    out.multiscale = multi.value;
    out.huber = huber.value;
    add(scale, config.depth_scale_weight);
    add(multi, config.depth_multiscale_weight);
    add(huber, config.depth_huber_weight);
    return out;
}

BufferLoss mse_loss(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "mse_loss");
    BufferLoss out{0.0, ImageBuffer(a.width(), a.height(), a.channels()), a.size()};
    const double n = static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a.data()[i] - b.data()[i];
        sum += e * e;
        out.grad.data()[i] = 2.0 * e / n;
    }
    out.value = sum / n;
    return out;
}

BufferLoss l1_loss(const ImageBuffer& a, const ImageBuffer& b) {
    require_same_shape(a, b, "l1_loss");
    BufferLoss out{0.0, ImageBuffer(a.width(), a.height(), a.channels()), a.size()};
    const double n = static_cast<double>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a.data()[i] - b.data()[i];
        sum += std::abs(e);
        out.grad.data()[i] = (e > 0 ? 1.0 : (e < 0 ? -1.0 : 0.0)) / n;
    }
    out.value = sum / n;
    return out;
}

ViewsLoss mask_loss(std::span<const ImageBuffer> rendered_alpha, std::span<const ImageBuffer> reference_masks) {
    if (rendered_alpha.size() != reference_masks.size()) {
        throw std::invalid_argument("mask_loss: view count mismatch");
    }
    ViewsLoss out;
    std::size_t total = 0;
    for (std::size_t v = 0; v < rendered_alpha.size(); ++v) {
        require_same_shape(rendered_alpha[v], reference_masks[v], "mask_loss");
        total += rendered_alpha[v].size();
    }
    if (total == 0) return out;
    const double n = static_cast<double>(total);
    for (std::size_t v = 0; v < rendered_alpha.size(); ++v) {
        const auto& a = rendered_alpha[v];
        ImageBuffer grad(a.width(), a.height(), a.channels());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double e = a.data()[i] - reference_masks[v].data()[i];
            out.value += e * e;
            grad.data()[i] = 2.0 * e / n;
        }
        out.grads.push_back(std::move(grad));
    }
    out.value /= n;
    return out;
}

FeatureLoss feature_loss(std::span<const double> f, std::span<const double> g) {
    if (f.size() != g.size() || f.empty()) {
        throw std::invalid_argument("feature_loss: feature vectors must be non-empty and equal length");
    }
    double dot = 0.0, nf2 = 0.0, ng2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        dot += f[i] * g[i];
        nf2 += f[i] * f[i];
        ng2 += g[i] * g[i];
    }
    if (nf2 == 0.0 || ng2 == 0.0) {
        throw std::domain_error("feature_loss: zero-norm feature vector");
    }
    const double nf = std::sqrt(nf2), ng = std::sqrt(ng2);
    const double cosine = std::clamp(dot / std::sqrt(nf2 * ng2), -1.0, 1.0);
    FeatureLoss out;
    out.value = 1.0 - cosine;
    out.grad.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        out.grad[i] = -(g[i] / (nf * ng) - cosine * f[i] / nf2);
    }
    return out;
}

ViewsLoss color_loss(std::span<const ImageBuffer> rendered, std::span<const ImageBuffer> reference, double mix) {
    if (rendered.size() != reference.size() || rendered.empty()) {
        throw std::invalid_argument("color_loss: view count mismatch");
    }
    if (!(mix >= 0.0 && mix <= 1.0)) {
        throw std::invalid_argument("color_loss: mix must be in [0, 1]");
    }
    ViewsLoss out;
    const double views = static_cast<double>(rendered.size());
    for (std::size_t v = 0; v < rendered.size(); ++v) {
        require_same_shape(rendered[v], reference[v], "color_loss");
        BufferLoss l1 = l1_loss(rendered[v], reference[v]);
        ImageBuffer grad = std::move(l1.grad);
        double value = (1.0 - mix) * l1.value;
        for (double& g : grad.data()) g *= (1.0 - mix);
        if (mix > 0.0) {
            const SsimWithGrad s = ssim_with_grad(rendered[v], reference[v]);
            value += mix * 0.5 * (1.0 - s.value);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                grad.data()[i] -= mix * 0.5 * s.grad.data()[i];
            }
        }
        out.value += value / views;
        for (double& g : grad.data()) g /= views;
        out.grads.push_back(std::move(grad));
    }
    return out;
}

BufferLoss refine_loss(const ImageBuffer& refined, const ImageBuffer& render) {
    require_same_shape(refined, render, "refine_loss");
    return mse_loss(render, refined);
}

} // namespace gsgen
