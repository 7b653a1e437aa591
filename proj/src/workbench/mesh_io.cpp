#include "gsgen/workbench/mesh_io.hpp"

#include "gsgen/io/codec.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

namespace gsgen {

MeshFiles write_textured_obj(const std::filesystem::path& dir, const std::string& stem, const TexturedMesh& mesh) {
    std::filesystem::create_directories(dir);
    MeshFiles files{dir / (stem + ".obj"), dir / (stem + ".mtl"), dir / (stem + ".png")};

    std::ofstream mtl(files.mtl);
    mtl << "newmtl surface\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nmap_Kd " << files.texture.filename().string() << "\n";
    if (!mtl) throw std::runtime_error("cannot write " + files.mtl.string());

    std::ofstream obj(files.obj);
    obj << std::setprecision(9);
    obj << "mtllib " << files.mtl.filename().string() << "\nusemtl surface\n";
    for (const auto& v : mesh.vertices) obj << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& n : mesh.normals) obj << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    for (const auto& uv : mesh.uvs) obj << "vt " << uv.x() << ' ' << 1.0 - uv.y() << '\n';
    for (const auto& f : mesh.faces) {
        obj << 'f';
        for (int k = 0; k < 3; ++k) {
            const int i = f[k] + 1;
            obj << ' ' << i << '/' << i << '/' << i;
        }
        obj << '\n';
    }
    if (!obj) throw std::runtime_error("cannot write " + files.obj.string());
    write_png(files.texture, mesh.texture);
    return files;
}

namespace {

std::string material_texture(const std::filesystem::path& mtl_path) {
    std::ifstream in(mtl_path);
    if (!in) throw std::runtime_error("cannot open material file " + mtl_path.string());
    for (std::string line; std::getline(in, line);) {
        std::istringstream s(line);
        std::string key, value;
        if (s >> key >> value && key == "map_Kd") return value;
    }
    throw std::runtime_error(mtl_path.string() + ": no map_Kd texture");
}

} // namespace

TexturedMesh read_textured_obj(const std::filesystem::path& obj_path) {
    std::ifstream in(obj_path);
    if (!in) throw std::runtime_error("cannot open " + obj_path.string());
    std::vector<Vec3> positions, normals;
    std::vector<Vec2> uvs;
    std::map<std::tuple<int, int, int>, int> corner_index;
    TexturedMesh mesh;
    std::string texture_name;

    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        std::istringstream s(line);
        std::string key;
        if (!(s >> key) || key[0] == '#') continue;
        const auto fail = [&](const std::string& msg) {
            return std::runtime_error(obj_path.string() + ":" + std::to_string(line_no) + ": " + msg);
        };
        if (key == "v" || key == "vn") {
            Vec3 v;
            if (!(s >> v.x() >> v.y() >> v.z())) throw fail("expected three numbers");
            (key == "v" ? positions : normals).push_back(v);
        } else if (key == "vt") {
            Vec2 t;
            if (!(s >> t.x() >> t.y())) throw fail("expected two numbers");
            uvs.emplace_back(t.x(), 1.0 - t.y());
        } else if (key == "mtllib") {
            std::string name;
            s >> name;
            texture_name = material_texture(obj_path.parent_path() / name);
        } else if (key == "f") {
            Face face;
            std::string corner;
            int k = 0;
            for (; s >> corner; ++k) {
                if (k == 3) throw fail("only triangles are supported");
                int vi = 0, ti = 0, ni = 0;
                if (std::sscanf(corner.c_str(), "%d/%d/%d", &vi, &ti, &ni) < 2) throw fail("faces need v/vt indices");
                if (vi < 1 || vi > static_cast<int>(positions.size()) || ti < 1 || ti > static_cast<int>(uvs.size()) ||
                    ni > static_cast<int>(normals.size())) {
                    throw fail("face index out of range");
                }
                const auto key3 = std::make_tuple(vi, ti, ni);
                auto it = corner_index.find(key3);
                if (it == corner_index.end()) {
                    it = corner_index.emplace(key3, static_cast<int>(mesh.vertices.size())).first;
                    mesh.vertices.push_back(positions[static_cast<std::size_t>(vi - 1)]);
                    mesh.uvs.push_back(uvs[static_cast<std::size_t>(ti - 1)]);
                    mesh.normals.push_back(ni > 0 ? normals[static_cast<std::size_t>(ni - 1)] : Vec3::Zero());
                }
                face[k] = it->second;
            }
            if (k != 3) throw fail("only triangles are supported");
            mesh.faces.push_back(face);
        }
    }
    if (texture_name.empty()) throw std::runtime_error(obj_path.string() + ": no material texture");
    mesh.texture = read_png(obj_path.parent_path() / texture_name);
    if (mesh.texture.channels() != 3) throw std::runtime_error(texture_name + ": texture must be RGB");
    mesh.chart_of_face.assign(mesh.faces.size(), 0);
    build_texel_map(mesh);
    return mesh;
}

} // namespace gsgen
