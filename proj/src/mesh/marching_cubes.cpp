#include "gsgen/mesh/mesh.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace gsgen {

DensityGrid::DensityGrid(std::array<int, 3> res, const Aabb& box) : resolution(res), bounds(box) {
    for (int r : res) {
        if (r < 2) throw std::invalid_argument("DensityGrid: resolution must be >= 2 per axis");
    }
    if (!((box.max - box.min).array() > 0.0).all()) throw std::invalid_argument("DensityGrid: empty bounds");
    values.assign(static_cast<std::size_t>(res[0]) * res[1] * res[2], 0.0);
}

Vec3 DensityGrid::spacing() const {
    const Vec3 size = bounds.max - bounds.min;
    return Vec3(size.x() / (resolution[0] - 1), size.y() / (resolution[1] - 1), size.z() / (resolution[2] - 1));
}

Vec3 DensityGrid::position(int i, int j, int k) const {
    return bounds.min + spacing().cwiseProduct(Vec3(i, j, k));
}

double DensityGrid::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

Aabb cloud_bounds(const GaussianCloud& cloud, double margin) {
    if (cloud.empty()) throw std::invalid_argument("cloud_bounds: empty cloud");
    Aabb box{Vec3::Constant(INFINITY), Vec3::Constant(-INFINITY)};
    for (const auto& p : cloud.primitives) {
        const Vec3 half = 3.0 * p.covariance().diagonal().cwiseSqrt();
        box.min = box.min.cwiseMin(p.center - half);
        box.max = box.max.cwiseMax(p.center + half);
    }
    const Vec3 pad = margin * (box.max - box.min);
    box.min -= pad;
    box.max += pad;
    return box;
}

DensityGrid sample_density(const GaussianCloud& cloud, const GridSpec& spec) {
    const Aabb box = spec.bounds ? *spec.bounds : cloud_bounds(cloud);
    const int n = spec.resolution;
    DensityGrid grid({n, n, n}, box);
    const Vec3 h = grid.spacing();

    struct Prepared {
        Vec3 center;
        Mat3 inv_cov;
        Vec3 half;
        double opacity;
    };
    std::vector<Prepared> prepared;
    prepared.reserve(cloud.size());
    for (const auto& p : cloud.primitives) {
        const Mat3 cov = p.covariance() + kCovarianceEpsilon * Mat3::Identity();
        prepared.push_back({p.center, cov.inverse(), 3.0 * cov.diagonal().cwiseSqrt(), p.opacity()});
    }

    // Slabs along z are independent; inside a slab primitives are added in
    // index order so the sums do not depend on scheduling.
    tbb::parallel_for(0, n, [&](int k) {
        const double z = box.min.z() + h.z() * k;
        for (const auto& g : prepared) {
            if (std::abs(z - g.center.z()) > g.half.z()) continue;
            const int i0 = std::max(0, static_cast<int>(std::ceil((g.center.x() - g.half.x() - box.min.x()) / h.x())));
            const int i1 = std::min(n - 1, static_cast<int>(std::floor((g.center.x() + g.half.x() - box.min.x()) / h.x())));
            const int j0 = std::max(0, static_cast<int>(std::ceil((g.center.y() - g.half.y() - box.min.y()) / h.y())));
            const int j1 = std::min(n - 1, static_cast<int>(std::floor((g.center.y() + g.half.y() - box.min.y()) / h.y())));
            for (int j = j0; j <= j1; ++j) {
                for (int i = i0; i <= i1; ++i) {
                    const Vec3 d = grid.position(i, j, k) - g.center;
                    const double q = d.dot(g.inv_cov * d);
                    if (q <= 9.0) grid.at(i, j, k) += g.opacity * std::exp(-0.5 * q);
                }
            }
        }
    });
    return grid;
}

namespace {

constexpr int corner_bit(int corner, int axis) { return (corner >> axis) & 1; }

struct CubeEdge {
    int a, b, axis;
};

std::array<CubeEdge, 12> make_edges() {
    std::array<CubeEdge, 12> edges{};
    int e = 0;
    for (int axis = 0; axis < 3; ++axis) {
        for (int c = 0; c < 8; ++c) {
            if (corner_bit(c, axis) == 0) edges[static_cast<std::size_t>(e++)] = {c, c | (1 << axis), axis};
        }
    }
    return edges;
}

const std::array<CubeEdge, 12> kEdges = make_edges();

int edge_between(int a, int b) {
    for (int e = 0; e < 12; ++e) {
        const auto& ed = kEdges[static_cast<std::size_t>(e)];
        if ((ed.a == a && ed.b == b) || (ed.a == b && ed.b == a)) return e;
    }
    throw std::logic_error("corners are not adjacent");
}

/// Corners of each cube face, counter-clockwise seen from outside.
std::array<std::array<int, 4>, 6> make_faces() {
    std::array<std::array<int, 4>, 6> faces{};
    int f = 0;
    for (int axis = 0; axis < 3; ++axis) {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        for (int side = 0; side < 2; ++side) {
            const int base = side << axis;
            std::array<int, 4> ring = {base, base | (1 << u), base | (1 << u) | (1 << v), base | (1 << v)};
            if (side == 0) std::swap(ring[1], ring[3]);
            faces[static_cast<std::size_t>(f++)] = ring;
        }
    }
    return faces;
}

/// Loop of crossed edges and its triangles; index kCentroid stands for the
/// loop's centroid.
struct Polygon {
    std::vector<int> edges;
    std::vector<std::array<int, 3>> tris;
};

constexpr int kCentroid = -1;

using CaseTable = std::array<std::vector<Polygon>, 256>;

bool share_face(int e0, int e1, const std::array<std::array<int, 4>, 6>& faces) {
    const auto on = [](const std::array<int, 4>& ring, int e) {
        const auto& ed = kEdges[static_cast<std::size_t>(e)];
        return std::count(ring.begin(), ring.end(), ed.a) && std::count(ring.begin(), ring.end(), ed.b);
    };
    for (const auto& ring : faces) {
        if (on(ring, e0) && on(ring, e1)) return true;
    }
    return false;
}

// A fan diagonal lying on a cube face would be shared with the neighbouring
// cell's triangulation, so pick an apex without one or fan around the centroid.
std::vector<std::array<int, 3>> triangulate_loop(const std::vector<int>& loop,
                                                 const std::array<std::array<int, 4>, 6>& faces) {
    const std::size_t n = loop.size();
    std::vector<std::array<int, 3>> tris;
    for (std::size_t s = 0; s < n; ++s) {
        bool ok = true;
        for (std::size_t i = 2; i + 1 < n && ok; ++i) ok = !share_face(loop[s], loop[(s + i) % n], faces);
        if (!ok) continue;
        for (std::size_t i = 1; i + 1 < n; ++i) tris.push_back({loop[s], loop[(s + i) % n], loop[(s + i + 1) % n]});
        return tris;
    }
    for (std::size_t i = 0; i < n; ++i) tris.push_back({kCentroid, loop[i], loop[(i + 1) % n]});
    return tris;
}

std::vector<Polygon> triangulate_case(int mask, const std::array<std::array<int, 4>, 6>& faces) {
    const auto inside = [mask](int c) { return ((mask >> c) & 1) != 0; };
    std::map<int, int> next_edge; // segment start edge -> end edge
    for (const auto& ring : faces) {
        std::vector<std::pair<int, bool>> crossings; // edge, entering
        for (int i = 0; i < 4; ++i) {
            const int a = ring[static_cast<std::size_t>(i)], b = ring[static_cast<std::size_t>((i + 1) % 4)];
            if (inside(a) != inside(b)) crossings.emplace_back(edge_between(a, b), inside(b));
        }
        const std::size_t m = crossings.size();
        for (std::size_t i = 0; i < m; ++i) {
            if (!crossings[i].second) continue;
            // Pair with the next leaving crossing, which cuts off the inside
            // corners between them so inside corners never connect across a face.
            for (std::size_t s = 1; s < m; ++s) {
                const auto& c = crossings[(i + s) % m];
                if (!c.second) {
                    next_edge[crossings[i].first] = c.first;
                    break;
                }
            }
        }
    }
    std::vector<Polygon> polys;
    while (!next_edge.empty()) {
        Polygon poly;
        int e = next_edge.begin()->first;
        while (next_edge.count(e)) {
            poly.edges.push_back(e);
            const int n = next_edge[e];
            next_edge.erase(e);
            e = n;
        }
        poly.tris = triangulate_loop(poly.edges, faces);
        polys.push_back(std::move(poly));
    }
    return polys;
}

Vec3 corner_pos(int c) { return Vec3(corner_bit(c, 0), corner_bit(c, 1), corner_bit(c, 2)); }

Vec3 edge_mid(int e) {
    const auto& ed = kEdges[static_cast<std::size_t>(e)];
    return 0.5 * (corner_pos(ed.a) + corner_pos(ed.b));
}

CaseTable make_case_table() {
    const auto faces = make_faces();
    CaseTable table;
    for (int mask = 0; mask < 256; ++mask) table[static_cast<std::size_t>(mask)] = triangulate_case(mask, faces);
    // Fix the winding once so that normals point away from inside corners.
    const auto& probe = table[1].front().tris.front();
    const Vec3 n = (edge_mid(probe[1]) - edge_mid(probe[0])).cross(edge_mid(probe[2]) - edge_mid(probe[0]));
    const Vec3 centroid = (edge_mid(probe[0]) + edge_mid(probe[1]) + edge_mid(probe[2])) / 3.0;
    if (n.dot(corner_pos(0) - centroid) > 0.0) {
        for (auto& polys : table) {
            for (auto& poly : polys) {
                for (auto& t : poly.tris) std::swap(t[1], t[2]);
            }
        }
    }
    return table;
}

const CaseTable& case_table() {
    static const CaseTable table = make_case_table();
    return table;
}

} // namespace

TriangleMesh marching_cubes(const DensityGrid& grid, double iso) {
    TriangleMesh mesh;
    if (!std::isfinite(iso)) throw std::invalid_argument("marching_cubes: iso must be finite");
    const auto& table = case_table();
    const auto [nx, ny, nz] = grid.resolution;
    std::unordered_map<std::size_t, int> vertex_of_edge;

    const auto vertex_for = [&](int i, int j, int k, int local_edge) {
        const CubeEdge& e = kEdges[static_cast<std::size_t>(local_edge)];
        const int ai = i + corner_bit(e.a, 0), aj = j + corner_bit(e.a, 1), ak = k + corner_bit(e.a, 2);
        const std::size_t key = grid.index(ai, aj, ak) * 3 + static_cast<std::size_t>(e.axis);
        if (auto it = vertex_of_edge.find(key); it != vertex_of_edge.end()) return it->second;
        const int bi = i + corner_bit(e.b, 0), bj = j + corner_bit(e.b, 1), bk = k + corner_bit(e.b, 2);
        const double va = grid.at(ai, aj, ak), vb = grid.at(bi, bj, bk);
        const double t = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
        const Vec3 pa = grid.position(ai, aj, ak), pb = grid.position(bi, bj, bk);
        const int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pa + t * (pb - pa));
        vertex_of_edge.emplace(key, id);
        return id;
    };

    for (int k = 0; k + 1 < nz; ++k) {
        for (int j = 0; j + 1 < ny; ++j) {
            for (int i = 0; i + 1 < nx; ++i) {
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    if (grid.at(i + corner_bit(c, 0), j + corner_bit(c, 1), k + corner_bit(c, 2)) > iso) mask |= 1 << c;
                }
                for (const auto& poly : table[static_cast<std::size_t>(mask)]) {
                    int center = -1;
                    const auto vertex = [&](int e) {
                        if (e != kCentroid) return vertex_for(i, j, k, e);
                        if (center < 0) {
                            Vec3 sum = Vec3::Zero();
                            for (int pe : poly.edges) sum += mesh.vertices[static_cast<std::size_t>(vertex_for(i, j, k, pe))];
                            center = static_cast<int>(mesh.vertices.size());
                            mesh.vertices.push_back(sum / static_cast<double>(poly.edges.size()));
                        }
                        return center;
                    };
                    for (const auto& t : poly.tris) mesh.faces.emplace_back(vertex(t[0]), vertex(t[1]), vertex(t[2]));
                }
            }
        }
    }
    return mesh;
}

double signed_volume(const TriangleMesh& mesh) {
    double v = 0.0;
    for (const auto& f : mesh.faces) {
        v += mesh.vertices[static_cast<std::size_t>(f[0])].dot(
            mesh.vertices[static_cast<std::size_t>(f[1])].cross(mesh.vertices[static_cast<std::size_t>(f[2])]));
    }
    return v / 6.0;
}

bool is_closed_and_consistent(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> directed;
    for (const auto& f : mesh.faces) {
        for (int e = 0; e < 3; ++e) ++directed[{f[e], f[(e + 1) % 3]}];
    }
    for (const auto& [edge, count] : directed) {
        if (count != 1) return false;
        const auto it = directed.find({edge.second, edge.first});
        if (it == directed.end() || it->second != 1) return false;
    }
    return true;
}

std::vector<Vec3> face_normals(const TriangleMesh& mesh) {
    std::vector<Vec3> normals;
    normals.reserve(mesh.faces.size());
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
        const Vec3 n = (mesh.vertices[static_cast<std::size_t>(f[1])] - a).cross(mesh.vertices[static_cast<std::size_t>(f[2])] - a);
        const double len = n.norm();
        normals.push_back(len > 0.0 ? Vec3(n / len) : Vec3::Zero());
    }
    return normals;
}

} // namespace gsgen
