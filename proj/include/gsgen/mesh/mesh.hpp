#pragma once

#include "gsgen/core/gaussian.hpp"
#include "gsgen/core/image.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <vector>

namespace gsgen {

using Face = Eigen::Vector3i;

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    bool empty() const { return faces.empty(); }
};

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();
};

struct DensityGrid {
    std::array<int, 3> resolution = {2, 2, 2};
    Aabb bounds;
    std::vector<double> values; ///< x fastest, then y, then z

    DensityGrid() = default;
    DensityGrid(std::array<int, 3> res, const Aabb& box);

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * resolution[1] + j) * resolution[0] + i;
    }
    double& at(int i, int j, int k) { return values[index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[index(i, j, k)]; }
    Vec3 position(int i, int j, int k) const;
    Vec3 spacing() const;
    double max_value() const;
};

struct GridSpec {
    int resolution = 64;
    /// Defaults to the cloud's 3 sigma bounding box grown by 5% per side.
    std::optional<Aabb> bounds;
};

/// Bounding box of every primitive's 3 sigma ellipsoid, grown by `margin`
/// of its size on each side.
Aabb cloud_bounds(const GaussianCloud& cloud, double margin = 0.05);

/// Samples sum_i opacity_i * G_i(x) on the grid, each Gaussian truncated at
/// 3 sigma.
DensityGrid sample_density(const GaussianCloud& cloud, const GridSpec& spec);

/// Isosurface of the samples at `iso`. Corners strictly above `iso` are
/// inside; triangles wind counter-clockwise seen from the lower-density side.
/// Vertices on shared cell edges are shared.
TriangleMesh marching_cubes(const DensityGrid& grid, double iso);

/// Volume enclosed by a closed mesh; positive when faces wind outward.
double signed_volume(const TriangleMesh& mesh);

/// Every undirected edge is used by exactly two faces, once in each direction.
bool is_closed_and_consistent(const TriangleMesh& mesh);

std::vector<Vec3> face_normals(const TriangleMesh& mesh);

/// Mesh whose vertices carry UVs and normals; seams duplicate vertices.
struct TexturedMesh {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;
    std::vector<Face> faces;
    std::vector<Vec2> uvs; ///< one per vertex, in [0,1]; v grows downward
    std::vector<int> chart_of_face;
    ImageBuffer texture; ///< RGB
    ImageBuffer written; ///< 1 where baking painted the texel directly
    ImageBuffer chart_mask; ///< 1 where the texel center lies in a UV triangle
    /// Per texel: face whose UV triangle contains the center, or -1.
    std::vector<int> texel_face;
    std::vector<Vec3> texel_bary;

    int texture_size() const { return texture.width(); }
    TriangleMesh geometry() const { return {vertices, faces}; }
};

struct UnwrapReport {
    std::size_t charts = 0;
    std::size_t skipped_degenerate = 0;
    double texels_per_unit = 0.0;
};

inline constexpr int kChartGutter = 2;

/// Planar charts from faces grouped by dominant normal axis and split into
/// edge-connected components, packed with a skyline packer into a square
/// atlas of `texture_size` texels with at least kChartGutter texels of
/// padding around every chart. Degenerate faces are dropped.
TexturedMesh uv_unwrap(const TriangleMesh& mesh, int texture_size, UnwrapReport* report = nullptr);

/// Recomputes texel_face, texel_bary and chart_mask from the UVs.
void build_texel_map(TexturedMesh& mesh);

/// Position and geometric normal of a point given by face and barycentrics.
Vec3 surface_point(const TexturedMesh& mesh, int face, const Vec3& bary);

} // namespace gsgen
