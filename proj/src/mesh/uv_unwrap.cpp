#include "gsgen/mesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace gsgen {

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

struct Chart {
    int group = 0;
    std::vector<std::size_t> faces;
    Vec2 min = Vec2::Constant(INFINITY);
    Vec2 max = Vec2::Constant(-INFINITY);
    // Placement in texels.
    int x = 0, y = 0, w = 0, h = 0;
};

Vec2 project(const Vec3& p, int group) {
    const int axis = group / 2;
    const double flip = group % 2 == 0 ? 1.0 : -1.0;
    return Vec2(flip * p[(axis + 1) % 3], p[(axis + 2) % 3]);
}

/// Bottom-left skyline packing. Returns false when a rectangle does not fit.
bool skyline_pack(std::vector<Chart>& charts, const std::vector<std::size_t>& order, int size) {
    struct Segment {
        int x, y, w;
    };
    std::vector<Segment> sky = {{0, 0, size}};
    for (std::size_t idx : order) {
        Chart& c = charts[idx];
        if (c.w > size || c.h > size) return false;
        int best_y = INT32_MAX, best_x = 0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < sky.size(); ++i) {
            const int x = sky[i].x;
            if (x + c.w > size) break;
            int y = 0, covered = 0;
            for (std::size_t j = i; j < sky.size() && covered < c.w; ++j) {
                y = std::max(y, sky[j].y);
                covered += sky[j].w;
            }
            if (y + c.h <= size && y < best_y) {
                best_y = y;
                best_x = x;
                best_i = i;
            }
        }
        if (best_y == INT32_MAX) return false;
        c.x = best_x;
        c.y = best_y;
        // Replace the covered span with the new top.
        const int right = best_x + c.w;
        std::vector<Segment> next(sky.begin(), sky.begin() + static_cast<std::ptrdiff_t>(best_i));
        next.push_back({best_x, best_y + c.h, c.w});
        for (std::size_t j = best_i; j < sky.size(); ++j) {
            const int end = sky[j].x + sky[j].w;
            if (end <= right) continue;
            const int start = std::max(sky[j].x, right);
            next.push_back({start, sky[j].y, end - start});
        }
        // Merge equal neighbours.
        sky.clear();
        for (const auto& s : next) {
            if (!sky.empty() && sky.back().y == s.y) sky.back().w += s.w;
            else sky.push_back(s);
        }
    }
    return true;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

} // namespace

TexturedMesh uv_unwrap(const TriangleMesh& mesh, int texture_size, UnwrapReport* report) {
    if (texture_size < 8) throw std::invalid_argument("uv_unwrap: texture size must be >= 8");
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || static_cast<std::size_t>(f[k]) >= mesh.vertices.size()) {
                throw std::invalid_argument("uv_unwrap: face index out of range");
            }
        }
    }
    const auto vert = [&](int i) -> const Vec3& { return mesh.vertices[static_cast<std::size_t>(i)]; };

    UnwrapReport rep;
    const std::vector<Vec3> normals = face_normals(mesh);
    double scale_ref = 0.0;
    for (const auto& v : mesh.vertices) scale_ref = std::max(scale_ref, v.cwiseAbs().maxCoeff());
    const double min_area = 1e-14 * std::max(scale_ref * scale_ref, 1e-30);

    std::vector<std::size_t> kept;
    std::vector<int> group(mesh.faces.size(), -1);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2] ||
            triangle_area(vert(face[0]), vert(face[1]), vert(face[2])) <= min_area) {
            ++rep.skipped_degenerate;
            continue;
        }
        Eigen::Index axis = 0;
        normals[f].cwiseAbs().maxCoeff(&axis);
        group[f] = 2 * static_cast<int>(axis) + (normals[f][axis] < 0.0 ? 1 : 0);
        kept.push_back(f);
    }

    UnionFind uf(mesh.faces.size());
    std::map<std::pair<int, int>, std::vector<std::size_t>> edge_faces;
    for (std::size_t f : kept) {
        const auto& face = mesh.faces[f];
        for (int e = 0; e < 3; ++e) {
            const int a = face[e], b = face[(e + 1) % 3];
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
        }
    }
    for (const auto& [edge, faces] : edge_faces) {
        for (std::size_t i = 1; i < faces.size(); ++i) {
            if (group[faces[0]] == group[faces[i]]) uf.unite(faces[0], faces[i]);
        }
    }

    std::vector<Chart> charts;
    std::map<std::size_t, std::size_t> chart_of_root;
    std::vector<int> chart_of_face(mesh.faces.size(), -1);
    for (std::size_t f : kept) {
        const std::size_t root = uf.find(f);
        auto [it, inserted] = chart_of_root.emplace(root, charts.size());
        if (inserted) charts.push_back(Chart{group[f], {}, Vec2::Constant(INFINITY), Vec2::Constant(-INFINITY)});
        Chart& c = charts[it->second];
        c.faces.push_back(f);
        chart_of_face[f] = static_cast<int>(it->second);
        for (int k = 0; k < 3; ++k) {
            const Vec2 p = project(vert(mesh.faces[f][k]), c.group);
            c.min = c.min.cwiseMin(p);
            c.max = c.max.cwiseMax(p);
        }
    }
    rep.charts = charts.size();

    TexturedMesh out;
    const int size = texture_size;
    out.texture = ImageBuffer(size, size, 3);
    out.written = ImageBuffer(size, size, 1);
    if (charts.empty()) {
        build_texel_map(out);
        if (report) *report = rep;
        return out;
    }

    double area = 0.0;
    for (const auto& c : charts) area += std::max((c.max - c.min).prod(), 1e-12);
    double s = std::sqrt(0.5 * size * size / area);
    std::vector<std::size_t> order(charts.size());
    bool packed = false;
    for (int attempt = 0; attempt < 200 && !packed; ++attempt, s *= 0.92) {
        for (auto& c : charts) {
            c.w = static_cast<int>(std::ceil((c.max.x() - c.min.x()) * s)) + 1 + 2 * kChartGutter;
            c.h = static_cast<int>(std::ceil((c.max.y() - c.min.y()) * s)) + 1 + 2 * kChartGutter;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return charts[a].h != charts[b].h ? charts[a].h > charts[b].h : charts[a].w > charts[b].w;
        });
        packed = skyline_pack(charts, order, size);
        if (packed) rep.texels_per_unit = s;
    }
    if (!packed) throw std::runtime_error("uv_unwrap: charts do not fit the atlas");
    s = rep.texels_per_unit;

    // Vertex normals from area-weighted face normals of the input mesh.
    std::vector<Vec3> vnormals(mesh.vertices.size(), Vec3::Zero());
    for (std::size_t f : kept) {
        const auto& face = mesh.faces[f];
        const Vec3 n = (vert(face[1]) - vert(face[0])).cross(vert(face[2]) - vert(face[0]));
        for (int k = 0; k < 3; ++k) vnormals[static_cast<std::size_t>(face[k])] += n;
    }

    std::map<std::pair<std::size_t, int>, int> new_index;
    for (std::size_t f : kept) {
        const Chart& c = charts[static_cast<std::size_t>(chart_of_face[f])];
        Face nf;
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.faces[f][k];
            auto [it, inserted] = new_index.emplace(std::make_pair(static_cast<std::size_t>(chart_of_face[f]), v),
                                                    static_cast<int>(out.vertices.size()));
            if (inserted) {
                out.vertices.push_back(vert(v));
                const Vec3 vn = vnormals[static_cast<std::size_t>(v)];
                out.normals.push_back(vn.norm() > 0.0 ? Vec3(vn.normalized()) : normals[f]);
                const Vec2 p = (project(vert(v), c.group) - c.min) * s;
                const Vec2 texel(c.x + kChartGutter + 0.5 + p.x(), c.y + kChartGutter + 0.5 + p.y());
                out.uvs.push_back((texel / size).cwiseMax(0.0).cwiseMin(1.0));
            }
            nf[k] = it->second;
        }
        out.faces.push_back(nf);
        out.chart_of_face.push_back(chart_of_face[f]);
    }
    build_texel_map(out);
    if (report) *report = rep;
    return out;
}

void build_texel_map(TexturedMesh& mesh) {
    const int size = mesh.texture.width();
    mesh.chart_mask = ImageBuffer(size, size, 1);
    mesh.texel_face.assign(static_cast<std::size_t>(size) * size, -1);
    mesh.texel_bary.assign(static_cast<std::size_t>(size) * size, Vec3::Zero());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        const Vec2 a = mesh.uvs[static_cast<std::size_t>(face[0])] * size;
        const Vec2 b = mesh.uvs[static_cast<std::size_t>(face[1])] * size;
        const Vec2 c = mesh.uvs[static_cast<std::size_t>(face[2])] * size;
        const double det = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
        if (std::abs(det) < 1e-12) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const Vec2 p(x + 0.5, y + 0.5);
                const double w1 = ((p - a).x() * (c - a).y() - (p - a).y() * (c - a).x()) / det;
                const double w2 = ((b - a).x() * (p - a).y() - (b - a).y() * (p - a).x()) / det;
                const double w0 = 1.0 - w1 - w2;
                if (w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9) continue;
                const std::size_t t = static_cast<std::size_t>(y) * size + x;
                if (mesh.texel_face[t] >= 0) continue;
                mesh.texel_face[t] = static_cast<int>(f);
                mesh.texel_bary[t] = Vec3(w0, w1, w2);
                mesh.chart_mask.at(x, y) = 1.0;
            }
        }
    }
}

Vec3 surface_point(const TexturedMesh& mesh, int face, const Vec3& bary) {
    const auto& f = mesh.faces[static_cast<std::size_t>(face)];
    return bary[0] * mesh.vertices[static_cast<std::size_t>(f[0])] +
           bary[1] * mesh.vertices[static_cast<std::size_t>(f[1])] +
           bary[2] * mesh.vertices[static_cast<std::size_t>(f[2])];
}

} // namespace gsgen
