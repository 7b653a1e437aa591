#include "gsgen/render/splat_renderer.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gsgen {

namespace {

struct ViewGeometry {
    Mat3 world_to_view;
    Vec3 position;
    double fx, fy, cx, cy;
};

ViewGeometry view_geometry(const Camera& camera) {
    return {camera.world_to_view_rotation(), camera.position, camera.focal_x(), camera.focal_y(), camera.cx(),
            camera.cy()};
}

// Perspective Jacobian of the pixel mapping at view-space point p.
Eigen::Matrix<double, 2, 3> projection_jacobian(const ViewGeometry& view, const Vec3& p) {
    const double z = p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << view.fx / z, 0.0, -view.fx * p.x() / (z * z),
        0.0, view.fy / z, -view.fy * p.y() / (z * z);
    return j;
}

double max_eigenvalue(const Mat2& m) {
    const double mid = 0.5 * (m(0, 0) + m(1, 1));
    const double det = m.determinant();
    return mid + std::sqrt(std::max(0.1, mid * mid - det));
}

struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists; // indices into the projected list, depth order

    int count() const { return tiles_x * tiles_y; }
};

TileGrid bin_tiles(const std::vector<ProjectedGaussian>& projected, int width, int height) {
    TileGrid grid;
    grid.tiles_x = (width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (height + kTileSize - 1) / kTileSize;
    grid.lists.resize(static_cast<std::size_t>(grid.count()));
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const auto& g = projected[i];
        const int x0 = std::max(0, static_cast<int>(std::floor((g.mean.x() - g.radius) / kTileSize)));
        const int y0 = std::max(0, static_cast<int>(std::floor((g.mean.y() - g.radius) / kTileSize)));
        const int x1 = std::min(grid.tiles_x - 1, static_cast<int>(std::floor((g.mean.x() + g.radius) / kTileSize)));
        const int y1 = std::min(grid.tiles_y - 1, static_cast<int>(std::floor((g.mean.y() + g.radius) / kTileSize)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                grid.lists[static_cast<std::size_t>(ty * grid.tiles_x + tx)].push_back(static_cast<std::uint32_t>(i));
            }
        }
    }
    return grid;
}

void validate_render_inputs(const Camera& camera) {
    if (camera.width < 1 || camera.height < 1) {
        throw std::invalid_argument("render: image dimensions must be positive");
    }
    camera.validate();
}

} // namespace

double splat_alpha(const ProjectedGaussian& g, const Vec2& pixel) {
    const Vec2 d = pixel - g.mean;
    const double q = d.dot(g.conic * d);
    if (q > kFootprintCutoffSq) {
        return 0.0;
    }
    const double a = g.opacity * std::exp(-0.5 * q);
    return a < kMinPixelAlpha ? 0.0 : a;
}

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& camera) {
    validate_render_inputs(camera);
    const ViewGeometry view = view_geometry(camera);
    std::vector<ProjectedGaussian> out;
    out.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& prim = cloud.primitives[i];
        const Vec3 p = view.world_to_view * (prim.center - view.position);
        if (p.z() <= camera.near_plane || p.z() > camera.far_plane) {
            continue;
        }
        const double opacity = prim.opacity();
        if (opacity < kMinPixelAlpha) {
            continue;
        }
        const auto j = projection_jacobian(view, p);
        const Mat3 cov_view = view.world_to_view * prim.covariance() * view.world_to_view.transpose();
        Mat2 cov = j * cov_view * j.transpose();
        cov(0, 0) += kScreenLowPass;
        cov(1, 1) += kScreenLowPass;
        const double det = cov.determinant();
        if (!(det > 0.0)) {
            continue;
        }
        ProjectedGaussian g;
        g.source = i;
        g.mean = Vec2(view.fx * p.x() / p.z() + view.cx, view.fy * p.y() / p.z() + view.cy);
        g.cov = cov;
        g.conic = cov.inverse();
        g.depth = p.z();
        g.opacity = opacity;
        g.color = prim.color;
        g.radius = 3.0 * std::sqrt(max_eigenvalue(cov));
        if (g.mean.x() + g.radius < 0.0 || g.mean.x() - g.radius > camera.width || g.mean.y() + g.radius < 0.0 ||
            g.mean.y() - g.radius > camera.height) {
            continue;
        }
        out.push_back(g);
    }
    std::stable_sort(out.begin(), out.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.source < b.source;
    });
    return out;
}

CompositeResult composite_pixel(std::span<const PixelContribution> ordered, const Vec3& background) {
    CompositeResult r;
    double transmittance = 1.0;
    for (const auto& c : ordered) {
        const double w = c.alpha * transmittance;
        r.color += w * c.color;
        r.depth += w * c.depth;
        transmittance *= 1.0 - c.alpha;
    }
    r.color += transmittance * background;
    r.alpha = 1.0 - transmittance;
    return r;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const Vec3& background) {
    validate_render_inputs(camera);
    const int w = camera.width, h = camera.height;
    RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};
    const auto projected = project(cloud, camera);
    const TileGrid grid = bin_tiles(projected, w, h);

    tbb::parallel_for(tbb::blocked_range<int>(0, grid.count()), [&](const tbb::blocked_range<int>& range) {
        for (int t = range.begin(); t != range.end(); ++t) {
            const auto& list = grid.lists[static_cast<std::size_t>(t)];
            const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
            for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
                for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
                    const Vec2 pixel(x + 0.5, y + 0.5);
                    Vec3 color = Vec3::Zero();
                    double depth = 0.0;
                    double transmittance = 1.0;
                    for (const std::uint32_t idx : list) {
                        const auto& g = projected[idx];
                        const double a = splat_alpha(g, pixel);
                        if (a == 0.0) continue;
                        const double wgt = a * transmittance;
                        color += wgt * g.color;
                        depth += wgt * g.depth;
                        transmittance *= 1.0 - a;
                    }
                    out.color.set_rgb(x, y, color + transmittance * background);
                    out.depth.at(x, y) = depth;
                    out.alpha.at(x, y) = 1.0 - transmittance;
                }
            }
        }
    });
    return out;
}

void GradientBuffers::resize(std::size_t n) {
    center.assign(n, Vec3::Zero());
    log_scale.assign(n, Vec3::Zero());
    rotation.assign(n, Quat::Zero());
    opacity_logit.assign(n, 0.0);
    color.assign(n, Vec3::Zero());
    screen_grad_norm.assign(n, 0.0);
    visible.assign(n, 0);
}

void GradientBuffers::zero() { resize(size()); }

bool GradientBuffers::all_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!center[i].allFinite() || !log_scale[i].allFinite() || !rotation[i].allFinite() ||
            !std::isfinite(opacity_logit[i]) || !color[i].allFinite()) {
            return false;
        }
    }
    return true;
}

GradientBuffers& GradientBuffers::operator+=(const GradientBuffers& other) {
    if (other.size() != size()) {
        throw std::invalid_argument("GradientBuffers: size mismatch");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        center[i] += other.center[i];
        log_scale[i] += other.log_scale[i];
        rotation[i] += other.rotation[i];
        opacity_logit[i] += other.opacity_logit[i];
        color[i] += other.color[i];
        screen_grad_norm[i] += other.screen_grad_norm[i];
        visible[i] = static_cast<char>(visible[i] || other.visible[i]);
    }
    return *this;
}

namespace {

// Gradient with respect to the quantities of one projected Gaussian.
struct ScreenGrad {
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    bool touched = false;

    ScreenGrad& operator+=(const ScreenGrad& o) {
        mean += o.mean;
        conic += o.conic;
        opacity += o.opacity;
        color += o.color;
        depth += o.depth;
        touched = touched || o.touched;
        return *this;
    }
};

void check_upstream(const ImageBuffer& buf, int w, int h, int channels, const char* name) {
    if (buf.empty()) return;
    if (buf.width() != w || buf.height() != h || buf.channels() != channels) {
        throw std::invalid_argument(std::string("render_backward: upstream ") + name + " has wrong shape");
    }
    for (double v : buf.data()) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string("render_backward: non-finite upstream ") + name);
        }
    }
}

} // namespace

GradientBuffers render_backward(const GaussianCloud& cloud, const Camera& camera, const Vec3& background,
                                const RenderUpstream& upstream) {
    validate_render_inputs(camera);
    const int w = camera.width, h = camera.height;
    check_upstream(upstream.color, w, h, 3, "color");
    check_upstream(upstream.depth, w, h, 1, "depth");
    check_upstream(upstream.alpha, w, h, 1, "alpha");

    GradientBuffers grads(cloud.size());
    const auto projected = project(cloud, camera);
    if (projected.empty()) {
        return grads;
    }
    const TileGrid grid = bin_tiles(projected, w, h);
    const bool has_color = !upstream.color.empty();
    const bool has_depth = !upstream.depth.empty();
    const bool has_alpha = !upstream.alpha.empty();

    // Per-tile partial sums, merged afterwards in tile order for determinism.
    std::vector<std::vector<ScreenGrad>> tile_grads(static_cast<std::size_t>(grid.count()));

    tbb::parallel_for(tbb::blocked_range<int>(0, grid.count()), [&](const tbb::blocked_range<int>& range) {
        struct Hit {
            std::uint32_t slot;
            double alpha;
            double falloff;
            double transmittance;
            Vec2 offset;
        };
        std::vector<Hit> hits;
        for (int t = range.begin(); t != range.end(); ++t) {
            const auto& list = grid.lists[static_cast<std::size_t>(t)];
            auto& local = tile_grads[static_cast<std::size_t>(t)];
            local.assign(list.size(), ScreenGrad{});
            if (list.empty()) continue;
            const int tx = t % grid.tiles_x, ty = t / grid.tiles_x;
            for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
                for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
                    const Vec3 up_c = has_color ? upstream.color.rgb(x, y) : Vec3::Zero();
                    const double up_d = has_depth ? upstream.depth.at(x, y) : 0.0;
                    const double up_a = has_alpha ? upstream.alpha.at(x, y) : 0.0;
                    if (up_c.isZero() && up_d == 0.0 && up_a == 0.0) continue;

                    const Vec2 pixel(x + 0.5, y + 0.5);
                    hits.clear();
                    double transmittance = 1.0;
                    for (std::uint32_t slot = 0; slot < list.size(); ++slot) {
                        const auto& g = projected[list[slot]];
                        const double a = splat_alpha(g, pixel);
                        if (a == 0.0) continue;
                        hits.push_back({slot, a, a / g.opacity, transmittance, pixel - g.mean});
                        transmittance *= 1.0 - a;
                    }
                    // Back-to-front: "rest" is the normalized composite behind the current hit.
                    Vec3 rest_color = background;
                    double rest_depth = 0.0;
                    double rest_alpha = 0.0;
                    for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                        const auto& g = projected[list[it->slot]];
                        auto& sg = local[it->slot];
                        const double a = it->alpha;
                        const double tr = it->transmittance;

                        double g_alpha = tr * (up_c.dot(g.color - rest_color) + up_d * (g.depth - rest_depth) +
                                               up_a * (1.0 - rest_alpha));
                        sg.color += up_c * (a * tr);
                        sg.depth += up_d * a * tr;
                        sg.touched = true;

                        sg.opacity += g_alpha * it->falloff;
                        const double g_q = -0.5 * a * g_alpha;
                        const Vec2& d = it->offset;
                        sg.mean += g_q * (-2.0 * (g.conic * d));
                        sg.conic += g_q * (d * d.transpose());

                        rest_color = a * g.color + (1.0 - a) * rest_color;
                        rest_depth = a * g.depth + (1.0 - a) * rest_depth;
                        rest_alpha = a + (1.0 - a) * rest_alpha;
                    }
                }
            }
        }
    });

    std::vector<ScreenGrad> merged(projected.size());
    for (int t = 0; t < grid.count(); ++t) {
        const auto& list = grid.lists[static_cast<std::size_t>(t)];
        const auto& local = tile_grads[static_cast<std::size_t>(t)];
        for (std::size_t slot = 0; slot < list.size(); ++slot) {
            merged[list[slot]] += local[slot];
        }
    }

    const ViewGeometry view = view_geometry(camera);
    const Mat3& wv = view.world_to_view;
    for (std::size_t k = 0; k < projected.size(); ++k) {
        const ScreenGrad& sg = merged[k];
        if (!sg.touched) continue;
        const auto& g = projected[k];
        const auto& prim = cloud.primitives[g.source];
        const std::size_t i = g.source;

        grads.color[i] += sg.color;
        const double o = g.opacity;
        grads.opacity_logit[i] += sg.opacity * o * (1.0 - o);
        grads.visible[i] = 1;
        grads.screen_grad_norm[i] += sg.mean.norm();

        // conic = cov^-1  =>  dL/dcov = -conic dL/dconic conic
        const Mat2 g_cov = -g.conic * sg.conic * g.conic;

        const Vec3 p = wv * (prim.center - view.position);
        const auto j = projection_jacobian(view, p);
        const Vec3 scale = prim.scale();
        const double qnorm = prim.rotation.norm();
        const Quat qhat = prim.rotation / qnorm;
        const Mat3 r = rotation_from_unit_quat(qhat);
        const Mat3 s2 = scale.array().square().matrix().asDiagonal();
        const Mat3 cov3 = r * s2 * r.transpose();
        const Mat3 m = wv * cov3 * wv.transpose();

        // cov = J M J^T + lowpass
        const Mat3 g_m = j.transpose() * g_cov * j;
        const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_cov * j * m;
        const Mat3 g_cov3 = wv.transpose() * g_m * wv;

        // cov3 = R S^2 R^T
        const Mat3 g_r = 2.0 * g_cov3 * r * s2;
        const Mat3 g_s2 = r.transpose() * g_cov3 * r;
        for (int a = 0; a < 3; ++a) {
            grads.log_scale[i][a] += 2.0 * scale[a] * scale[a] * g_s2(a, a);
        }
        const auto dr = rotation_unit_quat_partials(qhat);
        Quat g_qhat;
        for (int c = 0; c < 4; ++c) {
            g_qhat[c] = (g_r.array() * dr[static_cast<std::size_t>(c)].array()).sum();
        }
        grads.rotation[i] += (g_qhat - qhat * qhat.dot(g_qhat)) / qnorm;

        // mean = pi(p), depth = p.z, J = J(p)
        const double z = p.z();
        Vec3 g_p = j.transpose() * sg.mean;
        g_p.x() += g_j(0, 2) * (-view.fx / (z * z));
        g_p.y() += g_j(1, 2) * (-view.fy / (z * z));
        g_p.z() += g_j(0, 0) * (-view.fx / (z * z)) + g_j(0, 2) * (2.0 * view.fx * p.x() / (z * z * z)) +
                   g_j(1, 1) * (-view.fy / (z * z)) + g_j(1, 2) * (2.0 * view.fy * p.y() / (z * z * z));
        g_p.z() += sg.depth;
        grads.center[i] += wv.transpose() * g_p;
    }
    return grads;
}

} // namespace gsgen
