#include "fixtures.hpp"

#include <cmath>

namespace gsgen::testing {

DensityGrid sphere_field(int resolution) {
    DensityGrid grid({resolution, resolution, resolution}, Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)});
    for (int k = 0; k < resolution; ++k) {
        for (int j = 0; j < resolution; ++j) {
            for (int i = 0; i < resolution; ++i) grid.at(i, j, k) = std::max(0.0, 1.0 - grid.position(i, j, k).norm());
        }
    }
    return grid;
}

TexturedMesh sphere_fixture(int grid_resolution, int texture_size) {
    return uv_unwrap(marching_cubes(sphere_field(grid_resolution), 0.5), texture_size);
}

Vec3 surface_pattern(const Vec3& p) {
    return Vec3(0.5 + 0.4 * std::sin(6.0 * p.x()), 0.5 + 0.4 * std::cos(5.0 * p.y()), 0.5 + 0.4 * std::sin(7.0 * p.z()));
}

TexturedMesh painted(const TexturedMesh& mesh) {
    TexturedMesh out = mesh;
    const int size = out.texture.width();
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t t = static_cast<std::size_t>(y) * size + x;
            if (out.texel_face[t] < 0) continue;
            out.texture.set_rgb(x, y, surface_pattern(surface_point(out, out.texel_face[t], out.texel_bary[t])));
        }
    }
    return out;
}

std::vector<Camera> ten_view_orbit(int resolution) {
    std::vector<Camera> cams;
    for (int i = 0; i < 8; ++i) cams.push_back(orbit_camera(45.0 * i - 180.0, 0.0, 2.5, resolution, resolution));
    cams.push_back(orbit_camera(0.0, 90.0, 2.5, resolution, resolution));
    cams.push_back(orbit_camera(0.0, -90.0, 2.5, resolution, resolution));
    return cams;
}

} // namespace gsgen::testing
