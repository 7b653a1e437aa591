#pragma once

#include "gsgen/mesh/mesh.hpp"
#include "gsgen/mesh/texture.hpp"

#include <vector>

namespace gsgen::testing {

/// max(0, 1 - |x|) sampled on [-1,1]^3; its 0.5 level set is the sphere of
/// radius 0.5.
DensityGrid sphere_field(int resolution);

/// Unwrapped sphere of radius 0.5 from sphere_field, blank texture.
TexturedMesh sphere_fixture(int grid_resolution = 32, int texture_size = 256);

/// Smooth color pattern over the surface.
Vec3 surface_pattern(const Vec3& p);

/// Copy of `mesh` whose chart texels carry surface_pattern.
TexturedMesh painted(const TexturedMesh& mesh);

/// Eight orbit azimuths at elevation 0 plus top and bottom.
std::vector<Camera> ten_view_orbit(int resolution);

} // namespace gsgen::testing
