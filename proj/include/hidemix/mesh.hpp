#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "hidemix/geometry.hpp"

namespace hidemix {

// Triangulation of a rectangle with oriented edges.
//
// Conventions:
//  - triangles store vertex indices in counterclockwise order (positive area);
//  - an edge is the vertex pair (a, b) with a < b; its tangent runs a -> b and
//    its global unit normal is the 90-degree CCW rotation of the tangent;
//  - local edge i of a triangle is the one opposite local vertex i;
//  - tri_edge_signs[t][i] is +1 when the triangle's outward normal on that edge
//    coincides with the global edge normal, -1 otherwise.
struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<int, 2>> edges;
    std::vector<std::array<int, 3>> tri_edges;
    std::vector<std::array<int, 3>> tri_edge_signs;
    double h_max = 0.0;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    int num_edges() const { return static_cast<int>(edges.size()); }

    Vec2 vertex(int v) const { return vertices[static_cast<size_t>(v)]; }

    double tri_area(int t) const {
        const auto& tri = triangles[static_cast<size_t>(t)];
        return triangle_area(vertex(tri[0]), vertex(tri[1]), vertex(tri[2]));
    }

    Vec2 tri_centroid(int t) const {
        const auto& tri = triangles[static_cast<size_t>(t)];
        return (vertex(tri[0]) + vertex(tri[1]) + vertex(tri[2])) * (1.0 / 3.0);
    }

    double edge_length(int e) const {
        const auto& ed = edges[static_cast<size_t>(e)];
        return (vertex(ed[1]) - vertex(ed[0])).norm();
    }

    Vec2 edge_midpoint(int e) const {
        const auto& ed = edges[static_cast<size_t>(e)];
        return (vertex(ed[0]) + vertex(ed[1])) * 0.5;
    }

    // Global unit normal (CCW rotation of the a->b tangent, a < b).
    Vec2 edge_normal(int e) const {
        const auto& ed = edges[static_cast<size_t>(e)];
        Vec2 t = vertex(ed[1]) - vertex(ed[0]);
        return t.perp_ccw() * (1.0 / t.norm());
    }

    double tri_diameter(int t) const {
        const auto& tri = triangles[static_cast<size_t>(t)];
        double d = 0.0;
        for (int i = 0; i < 3; ++i) {
            Vec2 a = vertex(tri[i]);
            Vec2 b = vertex(tri[(i + 1) % 3]);
            d = std::max(d, (b - a).norm());
        }
        return d;
    }

    // Map a barycentric point (l0, l1, l2) on triangle t to physical coordinates.
    Vec2 from_barycentric(int t, double l0, double l1, double l2) const {
        const auto& tri = triangles[static_cast<size_t>(t)];
        return vertex(tri[0]) * l0 + vertex(tri[1]) * l1 + vertex(tri[2]) * l2;
    }
};

namespace detail {

// Edge table built in first-seen order over the triangle list; deterministic.
inline void build_edges(Mesh& m) {
    m.edges.clear();
    m.tri_edges.assign(m.triangles.size(), {-1, -1, -1});
    m.tri_edge_signs.assign(m.triangles.size(), {0, 0, 0});
    std::map<std::pair<int, int>, int> index;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tri = m.triangles[t];
        for (int i = 0; i < 3; ++i) {
            const int p = tri[(i + 1) % 3];
            const int q = tri[(i + 2) % 3];
            const std::pair<int, int> key{std::min(p, q), std::max(p, q)};
            auto it = index.find(key);
            int e;
            if (it == index.end()) {
                e = static_cast<int>(m.edges.size());
                m.edges.push_back({key.first, key.second});
                index.emplace(key, e);
            } else {
                e = it->second;
            }
            m.tri_edges[t][i] = e;
            // Outward normal of the directed boundary segment p->q (CCW triangle)
            // is the clockwise rotation of q - p.
            Vec2 dir = m.vertex(q) - m.vertex(p);
            Vec2 n_out{dir.y, -dir.x};
            Vec2 n_glob = m.vertex(key.second) - m.vertex(key.first);
            n_glob = n_glob.perp_ccw();
            m.tri_edge_signs[t][i] = (n_out.dot(n_glob) > 0.0) ? 1 : -1;
        }
    }
}

inline void finalize(Mesh& m) {
    build_edges(m);
    double h = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        if (m.tri_area(t) <= 0.0)
            throw std::logic_error("mesh: non-positive triangle area");
        h = std::max(h, m.tri_diameter(t));
    }
    m.h_max = h;
}

}  // namespace detail

// Structured triangulation of a rectangle: nx-by-ny cells, each split along its
// SW-NE diagonal. The resulting family is quasi-uniform under refinement.
inline Mesh build_structured_mesh(int nx, int ny, Rect rect = {}) {
    if (nx < 1 || ny < 1)
        throw std::invalid_argument("build_structured_mesh: cell counts must be >= 1");
    if (!(rect.width() > 0.0) || !(rect.height() > 0.0))
        throw std::invalid_argument("build_structured_mesh: degenerate rectangle");

    Mesh m;
    const int npx = nx + 1, npy = ny + 1;
    m.vertices.reserve(static_cast<size_t>(npx) * npy);
    for (int j = 0; j < npy; ++j)
        for (int i = 0; i < npx; ++i)
            m.vertices.push_back({rect.x0 + rect.width() * i / nx,
                                  rect.y0 + rect.height() * j / ny});

    auto vid = [npx](int i, int j) { return j * npx + i; };
    m.triangles.reserve(static_cast<size_t>(2) * nx * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int a = vid(i, j), b = vid(i + 1, j);
            const int c = vid(i + 1, j + 1), d = vid(i, j + 1);
            m.triangles.push_back({a, b, c});
            m.triangles.push_back({a, c, d});
        }
    }
    detail::finalize(m);
    return m;
}

// Split every triangle into 4 congruent children by edge midpoints.
inline Mesh refine_uniform(const Mesh& m) {
    Mesh r;
    r.vertices = m.vertices;
    const int v0 = m.num_vertices();
    r.vertices.reserve(static_cast<size_t>(v0) + m.edges.size());
    for (int e = 0; e < m.num_edges(); ++e)
        r.vertices.push_back(m.edge_midpoint(e));

    r.triangles.reserve(static_cast<size_t>(4) * m.triangles.size());
    for (int t = 0; t < m.num_triangles(); ++t) {
        const auto& tri = m.triangles[static_cast<size_t>(t)];
        // midpoint of the edge opposite local vertex i
        const int m0 = v0 + m.tri_edges[static_cast<size_t>(t)][0];
        const int m1 = v0 + m.tri_edges[static_cast<size_t>(t)][1];
        const int m2 = v0 + m.tri_edges[static_cast<size_t>(t)][2];
        r.triangles.push_back({tri[0], m2, m1});
        r.triangles.push_back({m2, tri[1], m0});
        r.triangles.push_back({m1, m0, tri[2]});
        r.triangles.push_back({m2, m0, m1});
    }
    detail::finalize(r);
    return r;
}

inline double mesh_size(const Mesh& m) { return m.h_max; }

// Plain-text dump for debugging; one entity per line.
inline void dump_mesh(const Mesh& m, std::ostream& os) {
    for (int v = 0; v < m.num_vertices(); ++v)
        os << "v " << v << ' ' << m.vertex(v).x << ' ' << m.vertex(v).y << '\n';
    for (int e = 0; e < m.num_edges(); ++e)
        os << "e " << e << ' ' << m.edges[static_cast<size_t>(e)][0] << ' '
           << m.edges[static_cast<size_t>(e)][1] << '\n';
    for (int t = 0; t < m.num_triangles(); ++t) {
        const auto& tri = m.triangles[static_cast<size_t>(t)];
        os << "t " << t << ' ' << tri[0] << ' ' << tri[1] << ' ' << tri[2];
        for (int i = 0; i < 3; ++i)
            os << ' ' << m.tri_edges[static_cast<size_t>(t)][i] << ' '
               << m.tri_edge_signs[static_cast<size_t>(t)][i];
        os << '\n';
    }
}

}  // namespace hidemix
