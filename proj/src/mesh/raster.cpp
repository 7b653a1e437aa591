#include "gsgen/mesh/raster.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <stdexcept>

namespace gsgen {

Vec3 project_to_screen(const Camera& camera, const Vec3& world) {
    const Vec3 v = camera.to_view(world);
    return Vec3(camera.focal_x() * v.x() / v.z() + camera.cx(), camera.focal_y() * v.y() / v.z() + camera.cy(), v.z());
}

MeshRaster rasterize(const std::vector<Vec3>& vertices, const std::vector<Face>& faces, const Camera& camera) {
    camera.validate();
    MeshRaster r;
    r.width = camera.width;
    r.height = camera.height;
    const std::size_t n = static_cast<std::size_t>(r.width) * r.height;
    r.face.assign(n, -1);
    r.bary.assign(n, Vec3::Zero());
    r.depth.assign(n, INFINITY);

    std::vector<Vec3> screen(vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) screen[i] = project_to_screen(camera, vertices[i]);

    for (std::size_t f = 0; f < faces.size(); ++f) {
        const Vec3& a = screen[static_cast<std::size_t>(faces[f][0])];
        const Vec3& b = screen[static_cast<std::size_t>(faces[f][1])];
        const Vec3& c = screen[static_cast<std::size_t>(faces[f][2])];
        if (a.z() < camera.near_plane || b.z() < camera.near_plane || c.z() < camera.near_plane) continue;
        const double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (std::abs(det) < 1e-14) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
        const int x1 = std::min(r.width - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
        const int y1 = std::min(r.height - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double l1 = ((px - a.x()) * (c.y() - a.y()) - (py - a.y()) * (c.x() - a.x())) / det;
                const double l2 = ((b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x())) / det;
                const double l0 = 1.0 - l1 - l2;
                if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
                const double w0 = l0 / a.z(), w1 = l1 / b.z(), w2 = l2 / c.z();
                const double inv_z = w0 + w1 + w2;
                const double z = 1.0 / inv_z;
                const std::size_t i = r.index(x, y);
                if (z < r.depth[i]) {
                    r.depth[i] = z;
                    r.face[i] = static_cast<int>(f);
                    r.bary[i] = Vec3(w0, w1, w2) * z;
                }
            }
        }
    }
    return r;
}

namespace {

struct Bilinear {
    int x0, y0, x1, y1;
    double fx, fy;
};

Bilinear bilinear_at(const Vec2& pixel, int width, int height) {
    const double x = std::clamp(pixel.x() - 0.5, 0.0, static_cast<double>(width - 1));
    const double y = std::clamp(pixel.y() - 0.5, 0.0, static_cast<double>(height - 1));
    Bilinear b;
    b.x0 = static_cast<int>(std::floor(x));
    b.y0 = static_cast<int>(std::floor(y));
    b.x1 = std::min(b.x0 + 1, width - 1);
    b.y1 = std::min(b.y0 + 1, height - 1);
    b.fx = x - b.x0;
    b.fy = y - b.y0;
    return b;
}

} // namespace

Vec3 sample_image(const ImageBuffer& image, const Vec2& pixel) {
    const Bilinear b = bilinear_at(pixel, image.width(), image.height());
    return (1 - b.fx) * (1 - b.fy) * image.rgb(b.x0, b.y0) + b.fx * (1 - b.fy) * image.rgb(b.x1, b.y0) +
           (1 - b.fx) * b.fy * image.rgb(b.x0, b.y1) + b.fx * b.fy * image.rgb(b.x1, b.y1);
}

Vec3 sample_texture(const ImageBuffer& texture, const Vec2& uv) {
    return sample_image(texture, Vec2(uv.x() * texture.width(), uv.y() * texture.height()));
}

namespace {

Vec2 pixel_uv(const TexturedMesh& mesh, const MeshRaster& raster, std::size_t i) {
    const auto& f = mesh.faces[static_cast<std::size_t>(raster.face[i])];
    const Vec3& w = raster.bary[i];
    return w[0] * mesh.uvs[static_cast<std::size_t>(f[0])] + w[1] * mesh.uvs[static_cast<std::size_t>(f[1])] +
           w[2] * mesh.uvs[static_cast<std::size_t>(f[2])];
}

} // namespace

TexturedRender render_textured(const TexturedMesh& mesh, const Camera& camera, const Vec3& background) {
    TexturedRender out;
    out.raster = rasterize(mesh.vertices, mesh.faces, camera);
    out.color = ImageBuffer(camera.width, camera.height, 3);
    out.alpha = ImageBuffer(camera.width, camera.height, 1);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t i = out.raster.index(x, y);
            if (out.raster.face[i] < 0) {
                out.color.set_rgb(x, y, background);
                continue;
            }
            out.color.set_rgb(x, y, sample_texture(mesh.texture, pixel_uv(mesh, out.raster, i)));
            out.alpha.at(x, y) = 1.0;
        }
    }
    return out;
}

ImageBuffer texture_backward(const TexturedMesh& mesh, const MeshRaster& raster, const ImageBuffer& color_grad) {
    if (color_grad.width() != raster.width || color_grad.height() != raster.height || color_grad.channels() != 3) {
        throw std::invalid_argument("texture_backward: gradient shape mismatch");
    }
    const int size = mesh.texture.width();
    ImageBuffer grad(size, mesh.texture.height(), 3);
    for (int y = 0; y < raster.height; ++y) {
        for (int x = 0; x < raster.width; ++x) {
            const std::size_t i = raster.index(x, y);
            if (raster.face[i] < 0) continue;
            const Vec2 uv = pixel_uv(mesh, raster, i);
            const Bilinear b = bilinear_at(Vec2(uv.x() * size, uv.y() * mesh.texture.height()), size,
                                           mesh.texture.height());
            const Vec3 g = color_grad.rgb(x, y);
            const std::array<std::tuple<int, int, double>, 4> taps = {
                std::tuple{b.x0, b.y0, (1 - b.fx) * (1 - b.fy)}, std::tuple{b.x1, b.y0, b.fx * (1 - b.fy)},
                std::tuple{b.x0, b.y1, (1 - b.fx) * b.fy}, std::tuple{b.x1, b.y1, b.fx * b.fy}};
            for (const auto& [tx, ty, w] : taps) {
                for (int c = 0; c < 3; ++c) grad.at(tx, ty, c) += w * g[c];
            }
        }
    }
    return grad;
}

} // namespace gsgen
