#include "doctest.h"

#include <cmath>
#include <sstream>

#include "hidemix/mesh.hpp"

using namespace hidemix;

namespace {

double min_angle(const Mesh& m) {
    double worst = 1e300;
    for (int t = 0; t < m.num_triangles(); ++t) {
        const auto& tri = m.triangles[static_cast<size_t>(t)];
        for (int i = 0; i < 3; ++i) {
            const Vec2 a = m.vertex(tri[i]);
            const Vec2 b = m.vertex(tri[(i + 1) % 3]) - a;
            const Vec2 c = m.vertex(tri[(i + 2) % 3]) - a;
            worst = std::min(worst, std::acos(b.dot(c) / (b.norm() * c.norm())));
        }
    }
    return worst;
}

void check_invariants(const Mesh& m) {
    for (int t = 0; t < m.num_triangles(); ++t) CHECK(m.tri_area(t) > 0.0);
    CHECK(m.num_vertices() - m.num_edges() + m.num_triangles() == 1);

    // incidence: interior edges referenced twice with opposite signs, boundary once
    std::vector<int> count(static_cast<size_t>(m.num_edges()), 0);
    std::vector<int> sign_sum(static_cast<size_t>(m.num_edges()), 0);
    for (int t = 0; t < m.num_triangles(); ++t)
        for (int i = 0; i < 3; ++i) {
            ++count[static_cast<size_t>(m.tri_edges[static_cast<size_t>(t)][i])];
            sign_sum[static_cast<size_t>(m.tri_edges[static_cast<size_t>(t)][i])] +=
                m.tri_edge_signs[static_cast<size_t>(t)][i];
        }
    for (int e = 0; e < m.num_edges(); ++e) {
        CHECK((count[static_cast<size_t>(e)] == 1 || count[static_cast<size_t>(e)] == 2));
        if (count[static_cast<size_t>(e)] == 2) CHECK(sign_sum[static_cast<size_t>(e)] == 0);
    }

    double longest = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) longest = std::max(longest, m.tri_diameter(t));
    CHECK(m.h_max == doctest::Approx(longest).epsilon(1e-14));
}

}  // namespace

TEST_CASE("structured mesh counts") {
    Mesh m1 = build_structured_mesh(1, 1);
    CHECK(m1.num_vertices() == 4);
    CHECK(m1.num_edges() == 5);
    CHECK(m1.num_triangles() == 2);
    check_invariants(m1);

    Mesh m2 = build_structured_mesh(2, 2);
    CHECK(m2.num_vertices() == 9);
    CHECK(m2.num_edges() == 16);
    CHECK(m2.num_triangles() == 8);
    check_invariants(m2);
}

TEST_CASE("mesh size") {
    CHECK(mesh_size(build_structured_mesh(1, 1)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(mesh_size(build_structured_mesh(4, 4)) == doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(1e-14));
    CHECK(mesh_size(build_structured_mesh(2, 4)) ==
          doctest::Approx(std::sqrt(0.25 + 0.0625)).epsilon(1e-14));
}

TEST_CASE("uniform refinement") {
    Mesh m = build_structured_mesh(1, 1);
    Mesh r = refine_uniform(m);
    CHECK(r.num_triangles() == 8);
    CHECK(mesh_size(r) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-14));
    check_invariants(r);

    Mesh m4 = build_structured_mesh(4, 4);
    Mesh r4 = refine_uniform(m4);
    CHECK(mesh_size(m4) == doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(1e-14));
    CHECK(mesh_size(r4) == doctest::Approx(std::sqrt(2.0) / 8.0).epsilon(1e-14));
    check_invariants(r4);

    Mesh rr = refine_uniform(r4);
    CHECK(rr.num_triangles() == 16 * m4.num_triangles());
    CHECK(mesh_size(rr) == doctest::Approx(mesh_size(m4) / 4.0).epsilon(1e-14));

    // quasi-uniformity witness: min angle does not change under refinement
    CHECK(std::abs(min_angle(m4) - min_angle(rr)) < 1e-12);
}

TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(build_structured_mesh(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_structured_mesh(3, -1), std::invalid_argument);
    CHECK_THROWS_AS(build_structured_mesh(2, 2, Rect{0, 0, 0, 1}), std::invalid_argument);
}

TEST_CASE("mesh dump is line-oriented") {
    Mesh m = build_structured_mesh(1, 1);
    std::ostringstream os;
    dump_mesh(m, os);
    const std::string s = os.str();
    CHECK(s.find("v 0 ") != std::string::npos);
    CHECK(s.find("e 0 ") != std::string::npos);
    CHECK(s.find("t 1 ") != std::string::npos);
}
