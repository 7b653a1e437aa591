#include "gsgen/train/optimizer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gsgen {

double LearningRates::center_at(double fraction) const {
    return center * std::pow(center_final_factor, std::clamp(fraction, 0.0, 1.0));
}

LearningRates LearningRates::at(double fraction) const {
    LearningRates r = *this;
    const double f = std::clamp(fraction, 0.0, 1.0);
    const double other = std::pow(others_final_factor, f);
    r.center = center_at(f);
    r.log_scale *= other;
    r.rotation *= other;
    r.opacity *= other;
    r.color *= other;
    return r;
}

void LearningRates::validate() const {
    for (double r : {center, log_scale, rotation, opacity, color}) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("learning rates must be finite and >= 0");
    }
    if (!(center_final_factor > 0.0) || !(others_final_factor > 0.0)) {
        throw std::invalid_argument("learning-rate decay factors must be > 0");
    }
}

void AdamState::resize(std::size_t primitives) {
    m.assign(primitives * kParamsPerPrimitive, 0.0);
    v.assign(primitives * kParamsPerPrimitive, 0.0);
}

void AdamState::remap(const std::vector<std::size_t>& source) {
    std::vector<double> nm(source.size() * kParamsPerPrimitive), nv(nm.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        std::copy_n(m.begin() + static_cast<std::ptrdiff_t>(source[i] * kParamsPerPrimitive), kParamsPerPrimitive,
                    nm.begin() + static_cast<std::ptrdiff_t>(i * kParamsPerPrimitive));
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(source[i] * kParamsPerPrimitive), kParamsPerPrimitive,
                    nv.begin() + static_cast<std::ptrdiff_t>(i * kParamsPerPrimitive));
    }
    m = std::move(nm);
    v = std::move(nv);
}

bool AdamState::finite() const {
    return std::all_of(m.begin(), m.end(), [](double x) { return std::isfinite(x); }) &&
           std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool adam_step(GaussianCloud& cloud, const GradientBuffers& grads, AdamState& state) {
    const std::size_t n = cloud.size();
    if (grads.size() != n) throw std::invalid_argument("adam_step: gradient count does not match the cloud");
    if (state.primitives() != n) {
        if (state.step != 0 || !state.m.empty()) throw std::invalid_argument("adam_step: optimizer rows out of sync");
        state.resize(n);
    }
    if (!grads.all_finite()) {
        spdlog::warn("adam_step: non-finite gradient, step {} skipped", state.step);
        return false;
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t i = 0; i < n; ++i) {
        auto& p = cloud.primitives[i];
        double* params[kParamsPerPrimitive] = {
            &p.center[0],   &p.center[1],    &p.center[2],   &p.log_scale[0], &p.log_scale[1],
            &p.log_scale[2], &p.rotation[0], &p.rotation[1], &p.rotation[2],  &p.rotation[3],
            &p.opacity_logit, &p.color[0],   &p.color[1],    &p.color[2]};
        const double g[kParamsPerPrimitive] = {
            grads.center[i][0],    grads.center[i][1],    grads.center[i][2],    grads.log_scale[i][0],
            grads.log_scale[i][1], grads.log_scale[i][2], grads.rotation[i][0],  grads.rotation[i][1],
            grads.rotation[i][2],  grads.rotation[i][3],  grads.opacity_logit[i], grads.color[i][0],
            grads.color[i][1],     grads.color[i][2]};
        for (std::size_t k = 0; k < kParamsPerPrimitive; ++k) {
            const double lr = k < 3    ? state.lr.center
                              : k < 6  ? state.lr.log_scale
                              : k < 10 ? state.lr.rotation
                              : k < 11 ? state.lr.opacity
                                       : state.lr.color;
            double& m = state.m[i * kParamsPerPrimitive + k];
            double& v = state.v[i * kParamsPerPrimitive + k];
            m = state.beta1 * m + (1.0 - state.beta1) * g[k];
            v = state.beta2 * v + (1.0 - state.beta2) * g[k] * g[k];
            *params[k] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
        }
        const double qn = p.rotation.norm();
        p.rotation = qn > 0.0 ? Quat(p.rotation / qn) : identity_quat();
        p.color = p.color.cwiseMax(0.0).cwiseMin(1.0);
    }
    return true;
}

void DensifyStats::reset(std::size_t n) {
    grad_norm_sum.assign(n, 0.0);
    count.assign(n, 0);
    center_grad_sum.assign(n, Vec3::Zero());
}

void DensifyStats::accumulate(const GradientBuffers& grads) {
    if (grads.size() != count.size()) throw std::invalid_argument("DensifyStats: size mismatch");
    for (std::size_t i = 0; i < count.size(); ++i) {
        if (!grads.visible[i]) continue;
        grad_norm_sum[i] += grads.screen_grad_norm[i];
        center_grad_sum[i] += grads.center[i];
        ++count[i];
    }
}

bool DensifyConfig::is_event(int step, int stage1_steps) const {
    if (step < start_step || step <= 0) return false;
    if (static_cast<double>(step) >= stop_fraction * stage1_steps) return false;
    return (step - start_step) % interval == 0;
}

void DensifyConfig::validate() const {
    if (interval < 1 || start_step < 0) throw std::invalid_argument("densify interval must be >= 1");
    if (!(stop_fraction > 0.0 && stop_fraction <= 1.0)) throw std::invalid_argument("densify stop fraction in (0,1]");
    if (!(grad_threshold > 0.0) || !(prune_opacity > 0.0) || !(split_extent_fraction > 0.0)) {
        throw std::invalid_argument("densify thresholds must be > 0");
    }
    if (!(split_divisor > 1.0)) throw std::invalid_argument("split divisor must be > 1");
}

double scene_extent(const GaussianCloud& cloud) {
    if (cloud.empty()) return 0.0;
    Vec3 mean = Vec3::Zero();
    for (const auto& p : cloud.primitives) mean += p.center;
    mean /= static_cast<double>(cloud.size());
    double r = 0.0;
    for (const auto& p : cloud.primitives) r = std::max(r, (p.center - mean).norm());
    return r;
}

DensifyResult densify_and_prune(GaussianCloud& cloud, DensifyStats& stats, const DensifyConfig& config,
                                double extent, AdamState* optimizer) {
    const std::size_t n = cloud.size();
    if (stats.count.size() != n) throw std::invalid_argument("densify_and_prune: stats do not cover the cloud");
    if (optimizer && optimizer->primitives() != n) optimizer->resize(n);

    DensifyResult result;
    result.before = n;
    std::vector<GaussianPrimitive> next;
    std::vector<std::size_t> source;
    next.reserve(n);
    const double split_cutoff = config.split_extent_fraction * extent;
    std::size_t budget = config.max_primitives > n ? config.max_primitives - n : 0;

    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPrimitive& p = cloud.primitives[i];
        const bool hot = stats.mean(i) > config.grad_threshold && budget > 0;
        if (!hot) {
            next.push_back(p);
            source.push_back(i);
            continue;
        }
        const Vec3 scale = p.scale();
        Eigen::Index axis = 0;
        const double largest = scale.maxCoeff(&axis);
        if (largest > split_cutoff) {
            const Vec3 offset = rotation_from_unit_quat(p.unit_rotation()).col(axis) * largest;
            for (double sign : {1.0, -1.0}) {
                GaussianPrimitive child = p;
                child.center = p.center + sign * offset;
                child.log_scale = p.log_scale.array() - std::log(config.split_divisor);
                next.push_back(child);
                source.push_back(i);
            }
            ++result.split;
        } else {
            next.push_back(p);
            source.push_back(i);
            GaussianPrimitive clone = p;
            const Vec3 g = stats.center_grad_sum[i];
            if (g.norm() > 0.0) clone.center -= g.normalized() * largest;
            next.push_back(clone);
            source.push_back(i);
            ++result.cloned;
        }
        --budget;
    }

    std::vector<GaussianPrimitive> kept;
    std::vector<std::size_t> kept_source;
    std::size_t best = 0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i].opacity_logit > next[best].opacity_logit) best = i;
    }
    for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i].opacity() < config.prune_opacity && i != best) {
            ++result.pruned;
            result.pruned_opacities.push_back(next[i].opacity());
            continue;
        }
        kept.push_back(next[i]);
        kept_source.push_back(source[i]);
    }

    const bool changed = result.cloned + result.split + result.pruned > 0;
    if (optimizer) optimizer->remap(kept_source);
    cloud.primitives = std::move(kept);
    if (changed) ++cloud.generation;
    stats.reset(cloud.size());
    result.after = cloud.size();
    return result;
}

} // namespace gsgen
