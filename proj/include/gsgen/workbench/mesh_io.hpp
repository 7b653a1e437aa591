#pragma once

#include "gsgen/mesh/mesh.hpp"

#include <filesystem>

namespace gsgen {

struct MeshFiles {
    std::filesystem::path obj, mtl, texture;
};

/// Writes <stem>.obj (positions, normals, UVs, triangles), <stem>.mtl and
/// <stem>.png into `dir`. UV v is flipped to the OBJ bottom-up convention.
MeshFiles write_textured_obj(const std::filesystem::path& dir, const std::string& stem, const TexturedMesh& mesh);

/// Reads what write_textured_obj wrote, or any triangulated OBJ whose
/// material names a diffuse texture. Throws std::runtime_error with the
/// offending line number.
TexturedMesh read_textured_obj(const std::filesystem::path& obj_path);

} // namespace gsgen
