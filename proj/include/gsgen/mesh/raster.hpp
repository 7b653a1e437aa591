#pragma once

#include "gsgen/core/camera.hpp"
#include "gsgen/mesh/mesh.hpp"

#include <vector>

namespace gsgen {

/// Per-pixel visible face, perspective-correct barycentrics and view depth.
struct MeshRaster {
    int width = 0;
    int height = 0;
    std::vector<int> face; ///< -1 where nothing is visible
    std::vector<Vec3> bary;
    std::vector<double> depth;

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Z-buffered rasterization with pixel centers at (x+0.5, y+0.5), matching
/// the splat renderer's projection. Triangles crossing the near plane are
/// skipped.
MeshRaster rasterize(const std::vector<Vec3>& vertices, const std::vector<Face>& faces, const Camera& camera);

/// Screen position (pixels) and view depth of a world point.
Vec3 project_to_screen(const Camera& camera, const Vec3& world);

/// Bilinear lookup with texel centers at (i+0.5)/size and clamped edges.
Vec3 sample_texture(const ImageBuffer& texture, const Vec2& uv);

/// Bilinear lookup at continuous pixel coordinates (centers at i+0.5).
Vec3 sample_image(const ImageBuffer& image, const Vec2& pixel);

struct TexturedRender {
    ImageBuffer color;
    ImageBuffer alpha;
    MeshRaster raster;
};

TexturedRender render_textured(const TexturedMesh& mesh, const Camera& camera, const Vec3& background);

/// d(loss)/d(texture) from d(loss)/d(color) through the bilinear lookups.
ImageBuffer texture_backward(const TexturedMesh& mesh, const MeshRaster& raster, const ImageBuffer& color_grad);

} // namespace gsgen
