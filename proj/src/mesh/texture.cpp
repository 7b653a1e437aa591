#include "gsgen/mesh/texture.hpp"
#include "gsgen/io/codec.hpp"
#include "gsgen/loss/losses.hpp"
#include "gsgen/mesh/raster.hpp"
#include "gsgen/render/splat_renderer.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

namespace gsgen {

double camera_normal_z(const Camera& camera, const Vec3& world_normal) {
    return -(camera.world_to_view_rotation() * world_normal).z();
}

namespace {

bool camera_before(const Camera& a, const Camera& b) {
    return std::lexicographical_compare(a.position.data(), a.position.data() + 3, b.position.data(),
                                        b.position.data() + 3);
}

void dilate(TexturedMesh& mesh) {
    const int size = mesh.texture.width();
    std::vector<char> filled(static_cast<std::size_t>(size) * size, 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            if (mesh.written.at(x, y) > 0.0) {
                filled[static_cast<std::size_t>(y) * size + x] = 1;
                queue.emplace_back(x, y);
            }
        }
    }
    constexpr std::array<std::pair<int, int>, 4> steps = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (const auto& [dx, dy] : steps) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= size || ny >= size) continue;
            char& f = filled[static_cast<std::size_t>(ny) * size + nx];
            if (f) continue;
            f = 1;
            mesh.texture.set_rgb(nx, ny, mesh.texture.rgb(x, y));
            queue.emplace_back(nx, ny);
        }
    }
}

} // namespace

BakeReport bake_texture(TexturedMesh& mesh, std::span<const BakeView> views, const BakeConfig& config) {
    if (views.empty()) throw std::invalid_argument("bake_texture: no views");
    if (mesh.texel_face.size() != mesh.texture.size() / 3) build_texel_map(mesh);
    const int size = mesh.texture.width();
    const std::vector<Vec3> normals = face_normals(mesh.geometry());

    std::vector<MeshRaster> rasters;
    for (const auto& v : views) {
        if (v.image.width() != v.camera.width || v.image.height() != v.camera.height || v.image.channels() != 3) {
            throw std::invalid_argument("bake_texture: view image does not match its camera");
        }
        rasters.push_back(rasterize(mesh.vertices, mesh.faces, v.camera));
    }

    BakeReport report;
    report.writes_per_view.assign(views.size(), 0);
    report.texel_view.assign(static_cast<std::size_t>(size) * size, -1);
    mesh.written = ImageBuffer(size, size, 1);

    tbb::parallel_for(0, size, [&](int y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t t = static_cast<std::size_t>(y) * size + x;
            const int face = mesh.texel_face[t];
            if (face < 0) continue;
            const Vec3 p = surface_point(mesh, face, mesh.texel_bary[t]);
            const Vec3& n = normals[static_cast<std::size_t>(face)];
            int best = -1;
            double best_nz = -INFINITY;
            for (std::size_t v = 0; v < views.size(); ++v) {
                const Camera& cam = views[v].camera;
                const double nz = camera_normal_z(cam, n);
                if (nz < config.normal_threshold) continue;
                const Vec3 s = project_to_screen(cam, p);
                if (s.z() < cam.near_plane) continue;
                const int px = static_cast<int>(std::floor(s.x())), py = static_cast<int>(std::floor(s.y()));
                if (px < 0 || py < 0 || px >= cam.width || py >= cam.height) continue;
                const MeshRaster& r = rasters[v];
                const std::size_t i = r.index(px, py);
                if (r.face[i] < 0) continue;
                const double pixel_world = s.z() / cam.focal_y();
                const double tol = 2.0 * pixel_world / std::max(nz, 0.1);
                if (r.face[i] != face && s.z() > r.depth[i] + tol) continue;
                if (nz > best_nz || (nz == best_nz && camera_before(cam, views[static_cast<std::size_t>(best)].camera))) {
                    best = static_cast<int>(v);
                    best_nz = nz;
                }
            }
            if (best < 0) continue;
            const BakeView& view = views[static_cast<std::size_t>(best)];
            const Vec3 s = project_to_screen(view.camera, p);
            mesh.texture.set_rgb(x, y, sample_image(view.image, Vec2(s.x(), s.y())));
            mesh.written.at(x, y) = 1.0;
            report.texel_view[t] = best;
        }
    });

    for (std::size_t t = 0; t < report.texel_view.size(); ++t) {
        if (mesh.texel_face[t] >= 0) ++report.chart_texels;
        if (report.texel_view[t] >= 0) {
            ++report.written_texels;
            ++report.writes_per_view[static_cast<std::size_t>(report.texel_view[t])];
        }
    }
    if (config.dilate && report.written_texels > 0) dilate(mesh);
    return report;
}

std::vector<Camera> default_bake_cameras(int resolution, double radius, double fov_y_deg) {
    std::vector<Camera> cams;
    for (double el : {0.0, 30.0, -30.0}) {
        for (double az : kCanonicalAzimuths) cams.push_back(orbit_camera(az, el, radius, resolution, resolution, fov_y_deg));
    }
    cams.push_back(orbit_camera(0.0, 90.0, radius, resolution, resolution, fov_y_deg));
    cams.push_back(orbit_camera(0.0, -90.0, radius, resolution, resolution, fov_y_deg));
    return cams;
}

ReferenceBlendDenoiser::ReferenceBlendDenoiser(std::vector<ReferenceView> references, double strength)
    : references_(std::move(references)), strength_(strength) {
    if (!(strength >= 0.0 && strength <= 1.0)) throw std::invalid_argument("blend strength must lie in [0,1]");
}

ImageBuffer ReferenceBlendDenoiser::denoise(const ImageBuffer& noisy, const Camera& camera, double, std::uint64_t) {
    const ReferenceView& ref = references_.nearest(camera);
    const ImageBuffer target = (ref.image.width() == noisy.width() && ref.image.height() == noisy.height())
                                   ? ref.image
                                   : ref.image.resized(noisy.width(), noisy.height());
    ImageBuffer out = noisy;
    auto o = out.data();
    const auto r = target.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - strength_) * o[i] + strength_ * r[i];
    return out;
}

ImageBuffer RemoteDenoiser::denoise(const ImageBuffer& noisy, const Camera& camera, double t, std::uint64_t seed) {
    using nlohmann::json;
    const json body = {{"prompt", ""},
                       {"timestep", t},
                       {"cameras", json::array({{{"azimuth_deg", camera.azimuth_deg()},
                                                 {"elevation_deg", camera.elevation_deg()},
                                                 {"radius", camera.radius()},
                                                 {"fov_deg", camera.fov_y_deg}}})},
                       {"views", json::array({base64_encode(encode_png(noisy.clamped(), 8))})},
                       {"seed", seed}};
    const std::string reply = post_json(endpoint_, body.dump());
    ImageBuffer out;
    try {
        const json j = json::parse(reply);
        const auto& views = j.at("views");
        if (!views.is_array() || views.size() != 1) {
            throw ServiceError(ServiceErrorKind::MalformedResponse, "denoiser reply must carry one view");
        }
        out = decode_png(base64_decode(views[0].get<std::string>()));
    } catch (const json::exception& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad denoiser reply: ") + e.what());
    } catch (const ServiceError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw ServiceError(ServiceErrorKind::MalformedResponse, std::string("bad denoiser image: ") + e.what());
    }
    if (!out.same_shape(noisy)) throw ServiceError(ServiceErrorKind::MalformedResponse, "denoiser reply has the wrong shape");
    return out;
}

ImageBuffer add_noise(const ImageBuffer& image, double t, std::uint64_t seed) {
    ImageBuffer out = image;
    if (t == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (double& v : out.data()) v += t * normal(rng);
    return out;
}

void RefineConfig::validate() const {
    if (!(t_start >= 0.0 && t_start <= 1.0)) throw std::invalid_argument("t_start must lie in [0,1]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("texture learning rate must be > 0");
    if (!(refine_weight >= 0.0 && color_weight >= 0.0)) throw std::invalid_argument("refine weights must be >= 0");
}

std::vector<RefineStep> refine_texture(TexturedMesh& mesh, std::span<const std::array<Camera, 4>> camera_sets,
                                       Denoiser& denoiser, GuidanceProvider* references, const RefineConfig& config) {
    config.validate();
    if (mesh.texture.empty()) throw std::invalid_argument("refine_texture: mesh has no texture");
    if (mesh.texel_face.size() != mesh.texture.size() / 3) build_texel_map(mesh);

    const std::size_t n = mesh.texture.size();
    std::vector<double> m(n, 0.0), v(n, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t adam_steps = 0;
    std::vector<RefineStep> log;

    for (std::size_t step = 0; step < camera_sets.size(); ++step) {
        const auto& cams = camera_sets[step];
        RefineStep rec;
        std::array<TexturedRender, 4> renders;
        std::array<ImageBuffer, 4> upstream;
        try {
            for (std::size_t k = 0; k < 4; ++k) {
                renders[k] = render_textured(mesh, cams[k], config.background);
                upstream[k] = ImageBuffer(cams[k].width, cams[k].height, 3);
                const std::uint64_t seed = config.seed + 4 * step + k;
                const ImageBuffer noisy = add_noise(renders[k].color, config.t_start, seed);
                const ImageBuffer refined = denoiser.denoise(noisy, cams[k], config.t_start, seed);
                const BufferLoss r = refine_loss(refined, renders[k].color);
                rec.refine += r.value / 4.0;
                auto u = upstream[k].data();
                for (std::size_t i = 0; i < u.size(); ++i) u[i] += config.refine_weight * r.grad.data()[i] / 4.0;
            }
            if (references) {
                GuidanceRequest req;
                for (std::size_t k = 0; k < 4; ++k) {
                    req.views[k] = renders[k].color;
                    req.cameras[k] = cams[k];
                }
                req.timestep = std::max(config.t_start, 1e-3);
                req.seed = config.seed + step;
                const GuidanceResponse res = references->guide(req);
                validate_response(req, res);
                std::array<ImageBuffer, 4> rendered;
                for (std::size_t k = 0; k < 4; ++k) rendered[k] = renders[k].color;
                const ViewsLoss c = color_loss(rendered, res.views, config.color_ssim_mix);
                rec.color = c.value;
                for (std::size_t k = 0; k < 4; ++k) {
                    auto u = upstream[k].data();
                    for (std::size_t i = 0; i < u.size(); ++i) u[i] += config.color_weight * c.grads[k].data()[i];
                }
            }
        } catch (const ServiceError& e) {
            spdlog::warn("refine step {} skipped ({})", step, e.what());
            rec.skipped = true;
            log.push_back(rec);
            continue;
        }
        rec.total = config.refine_weight * rec.refine + config.color_weight * rec.color;

        ImageBuffer grad(mesh.texture.width(), mesh.texture.height(), 3);
        for (std::size_t k = 0; k < 4; ++k) {
            const ImageBuffer g = texture_backward(mesh, renders[k].raster, upstream[k]);
            for (std::size_t i = 0; i < n; ++i) grad.data()[i] += g.data()[i];
        }
        ++adam_steps;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps));
        auto tex = mesh.texture.data();
        const auto g = grad.data();
        for (std::size_t i = 0; i < n; ++i) {
            if (mesh.texel_face[i / 3] < 0) continue;
            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
            tex[i] = std::clamp(tex[i] - config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps), 0.0, 1.0);
        }
        log.push_back(rec);
    }
    return log;
}

TexturedMesh extract_textured_mesh(const GaussianCloud& cloud, const TextureStageConfig& config,
                                   const Vec3& background) {
    const DensityGrid grid = sample_density(cloud, {config.grid_resolution, std::nullopt});
    const double peak = grid.max_value();
    if (!(peak > 0.0)) throw EmptyIsosurface("density is zero everywhere");
    const TriangleMesh surface = marching_cubes(grid, config.iso_level * peak);
    if (surface.empty()) throw EmptyIsosurface("no isosurface at the configured level");
    UnwrapReport report;
    TexturedMesh mesh = uv_unwrap(surface, config.texture_size, &report);
    if (mesh.faces.empty()) throw EmptyIsosurface("isosurface has only degenerate faces");
    if (report.skipped_degenerate > 0) spdlog::info("uv_unwrap skipped {} degenerate faces", report.skipped_degenerate);

    std::vector<BakeView> views;
    for (const Camera& cam : default_bake_cameras(config.bake_resolution)) {
        views.push_back({cam, render(cloud, cam, background).color});
    }
    bake_texture(mesh, views);
    return mesh;
}

void run_texture_stage(TrainResult& result, const TrainConfig& config, TrainProviders& providers) {
    const TextureStageConfig& tc = config.texture;
    auto mesh = std::make_shared<TexturedMesh>(extract_textured_mesh(result.cloud, tc, config.background));

    CameraSampler sampler(config.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainingPhase phase = stage1_phase(config, 0);
    phase.resolution = tc.render_resolution;
    std::vector<std::array<Camera, 4>> sets;
    for (int s = 0; s < config.stage2_steps; ++s) {
        auto cams = sampler.next_orthogonal_set(phase);
        for (auto& c : cams) {
            if (auto snapped = providers.guidance->snap_camera(c)) c = *snapped;
        }
        sets.push_back(cams);
    }

    IdentityDenoiser identity;
    Denoiser& denoiser = providers.denoiser ? *providers.denoiser : identity;
    RefineConfig rc;
    rc.t_start = tc.noise_strength;
    rc.learning_rate = tc.learning_rate;
    rc.refine_weight = config.loss.refine_weight;
    rc.color_weight = config.loss.color_weight;
    rc.color_ssim_mix = config.loss.color_ssim_mix;
    rc.background = config.background;
    rc.seed = config.seed;
    const auto steps = refine_texture(*mesh, sets, denoiser, providers.guidance, rc);

    for (std::size_t s = 0; s < steps.size(); ++s) {
        StepLog entry;
        entry.step = config.stage1_steps + static_cast<int>(s);
        entry.stage = 2;
        entry.report.refine = steps[s].refine;
        entry.report.color = steps[s].color;
        entry.report.total = steps[s].total;
        entry.guidance_skipped = steps[s].skipped;
        entry.primitives = result.cloud.size();
        entry.resolution = tc.render_resolution;
        result.log.push_back(entry);
    }
    result.mesh = std::move(mesh);
}

} // namespace gsgen
