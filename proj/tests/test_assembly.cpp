#include "doctest.h"

#include <cmath>
#include <random>

#include "hidemix/assembly.hpp"
#include "hidemix/projection.hpp"
#include "test_util.hpp"

using namespace hidemix;
using namespace testutil;

namespace {

// Brute-force dense assembly of (K psi_j, psi_i) with the same quadrature.
std::vector<std::vector<double>> dense_mass_V(const DofSpace& vh, const MatrixField& coeff) {
    const Mesh& m = vh.mesh();
    const int n = vh.num_dofs();
    std::vector<std::vector<double>> out(static_cast<size_t>(n),
                                         std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            auto b = vh.eval_vector_basis_at(t, x);
            Mat2 k = coeff ? coeff(x) : Mat2::identity();
            for (int i = 0; i < b.n; ++i)
                for (int j = 0; j < b.n; ++j)
                    out[static_cast<size_t>(vh.global_dof(t, i))][static_cast<size_t>(vh.global_dof(t, j))] +=
                        area * g.w * k.apply(b.value[static_cast<size_t>(j)]).dot(b.value[static_cast<size_t>(i)]);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("RT0 mass on the 2-triangle square: symmetric positive definite") {
    Mesh m = build_structured_mesh(1, 1);
    DofSpace rt0(m, SpaceKind::RT0);
    SparseMatrix d = assemble_mass_V(rt0);
    CHECK(d.rows == 5);
    CHECK(d.cols == 5);
    CHECK(d.is_symmetric());

    // dense eigen/pivot check at this size: all leading principal minors positive
    std::vector<std::vector<double>> a(5, std::vector<double>(5, 0.0));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) a[static_cast<size_t>(i)][static_cast<size_t>(j)] = d.entry(i, j);
    for (int k = 0; k < 5; ++k) {
        // determinant of leading k+1 minor by elimination
        auto sub = a;
        double det = 1.0;
        for (int c = 0; c <= k; ++c) {
            det *= sub[static_cast<size_t>(c)][static_cast<size_t>(c)];
            for (int r = c + 1; r <= k; ++r) {
                const double f = sub[static_cast<size_t>(r)][static_cast<size_t>(c)] /
                                 sub[static_cast<size_t>(c)][static_cast<size_t>(c)];
                for (int cc = c; cc <= k; ++cc)
                    sub[static_cast<size_t>(r)][static_cast<size_t>(cc)] -= f * sub[static_cast<size_t>(c)][static_cast<size_t>(cc)];
            }
        }
        CHECK(det > 0.0);
    }

    // random Rayleigh quotients positive
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x(5);
        for (auto& v : x) v = u(rng);
        auto dx = d.multiply(x);
        double q = 0.0;
        for (int i = 0; i < 5; ++i) q += x[static_cast<size_t>(i)] * dx[static_cast<size_t>(i)];
        CHECK(q > 0.0);
    }
}

TEST_CASE("bilinearity in the coefficient") {
    Mesh m = build_structured_mesh(2, 2);
    DofSpace rt1(m, SpaceKind::RT1);
    SparseMatrix d1 = assemble_mass_V(rt1);
    SparseMatrix d2 = assemble_mass_V(rt1, constant_matrix_field(Mat2::scaled_identity(2.0)));
    REQUIRE(d1.nnz() == d2.nnz());
    for (size_t p = 0; p < d1.nnz(); ++p)
        CHECK(d2.vals[p] == doctest::Approx(2.0 * d1.vals[p]).epsilon(1e-14));
}

TEST_CASE("zero kernel assembles the zero matrix") {
    Mesh m = build_structured_mesh(2, 2);
    DofSpace rt0(m, SpaceKind::RT0);
    SparseMatrix b = assemble_mass_V_kernel(
        rt0, [](Vec2, double, double) { return Mat2{}; }, 0.7, 0.3);
    CHECK(b.max_abs() == 0.0);
}

TEST_CASE("non-finite coefficient reports the element") {
    Mesh m = build_structured_mesh(2, 2);
    DofSpace rt0(m, SpaceKind::RT0);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(assemble_mass_V(rt0, constant_matrix_field(Mat2{inf, 0, 0, 1})),
                         doctest::Contains("element 0"), AssemblyError);
}

TEST_CASE("div coupling structure on the 2-triangle square") {
    Mesh m = build_structured_mesh(1, 1);
    DofSpace rt0(m, SpaceKind::RT0), dg0(m, SpaceKind::DG0);
    SparseMatrix c = assemble_div_coupling(dg0, rt0);
    CHECK(c.rows == 2);
    CHECK(c.cols == 5);
    // columns of interior edges carry two entries of opposite sign; here the
    // diagonal is the single interior edge
    std::vector<int> count(5, 0);
    for (int e = 0; e < 5; ++e) {
        const double v0 = c.entry(0, e), v1 = c.entry(1, e);
        if (v0 != 0.0) ++count[static_cast<size_t>(e)];
        if (v1 != 0.0) ++count[static_cast<size_t>(e)];
        if (v0 != 0.0 && v1 != 0.0) {
            CHECK(v0 * v1 < 0.0);
            CHECK(std::abs(v0) == doctest::Approx(std::abs(v1)).epsilon(1e-13));
            // |(1, div psi)| = |e| on each side
            CHECK(std::abs(v0) == doctest::Approx(m.edge_length(e)).epsilon(1e-13));
        }
    }
    int interior = 0;
    for (int e = 0; e < 5; ++e)
        if (count[static_cast<size_t>(e)] == 2) ++interior;
    CHECK(interior == 1);
}

TEST_CASE("div-free RT1 member has a zero coupling column") {
    Mesh m = build_structured_mesh(2, 2);
    DofSpace rt1(m, SpaceKind::RT1), dg1(m, SpaceKind::DG1);
    // curl of the quadratic phi = x^2 y ... use phi = x*y + 0.5 x^2: curl phi = (phi_y, -phi_x)
    auto g = [](Vec2 p) { return Vec2{p.x, -(p.y + p.x)}; };
    auto coeffs = rt_interpolate(g, rt1);
    SparseMatrix c = assemble_div_coupling(dg1, rt1);
    CHECK(max_abs(c.multiply(coeffs)) < 1e-12);
}

TEST_CASE("coupling matrix equals direct quadrature pairing") {
    Mesh m = build_structured_mesh(2, 2);
    DofSpace rt1(m, SpaceKind::RT1), dg1(m, SpaceKind::DG1);
    SparseMatrix c = assemble_div_coupling(dg1, rt1);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> q(static_cast<size_t>(rt1.num_dofs()));
    std::vector<double> w(static_cast<size_t>(dg1.num_dofs()));
    for (auto& v : q) v = u(rng);
    for (auto& v : w) v = u(rng);
    auto cq = c.multiply(q);
    double via_matrix = 0.0;
    for (size_t i = 0; i < w.size(); ++i) via_matrix += w[i] * cq[i];
    double direct = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            direct += area * g.w * dg1.eval_scalar(w, t, g.l0, g.l1, g.l2) * rt1.eval_vector_div(q, t, x);
        }
    }
    CHECK(via_matrix == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("scalar mass and loads") {
    Mesh m = build_structured_mesh(1, 1);
    DofSpace dg0(m, SpaceKind::DG0);
    SparseMatrix w = assemble_mass_W(dg0);
    CHECK(w.entry(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w.entry(1, 1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(w.entry(0, 1) == 0.0);

    auto zero = assemble_load([](Vec2, double) { return 0.0; }, 0.0, dg0);
    CHECK(max_abs(zero) == 0.0);
    auto ones = assemble_load([](Vec2, double) { return 1.0; }, 0.0, dg0);
    CHECK(ones[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ones[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("sparse assembly equals the dense oracle on small meshes") {
    Mesh m = build_structured_mesh(2, 2);  // 8 triangles
    for (SpaceKind vk : {SpaceKind::RT0, SpaceKind::RT1}) {
        DofSpace vh(m, vk);
        auto coeff = [](Vec2 x) {
            return Mat2{1.0 + 0.25 * x.x, 0.1 * x.y, 0.1 * x.y, 1.0 + 0.25 * x.y};
        };
        SparseMatrix s = assemble_mass_V(vh, coeff);
        auto d = dense_mass_V(vh, coeff);
        for (int i = 0; i < s.rows; ++i)
            for (int j = 0; j < s.cols; ++j)
                CHECK(s.entry(i, j) ==
                      doctest::Approx(d[static_cast<size_t>(i)][static_cast<size_t>(j)]).epsilon(1e-13));
    }
}

TEST_CASE("refinement consistency of mass pairings") {
    auto g = [](Vec2 x) { return Vec2{std::sin(x.x + 2.0 * x.y), std::cos(2.0 * x.x - x.y)}; };
    const double exact = [&] {
        // tensor Gauss reference for int |g|^2 over the unit square
        double acc = 0.0;
        const int n = 24;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (const auto& gx : gauss5())
                    for (const auto& gy : gauss5()) {
                        Vec2 x{(i + gx.x) / n, (j + gy.x) / n};
                        acc += gx.w * gy.w * g(x).dot(g(x)) / (n * n);
                    }
        return acc;
    }();
    std::array<double, 3> errs{};
    for (int lvl = 0; lvl < 3; ++lvl) {
        const int n = 4 << lvl;
        Mesh m = build_structured_mesh(n, n);
        DofSpace rt1(m, SpaceKind::RT1);
        auto coeffs = rt_interpolate(g, rt1);
        SparseMatrix d = assemble_mass_V(rt1);
        auto dc = d.multiply(coeffs);
        double pairing = 0.0;
        for (size_t i = 0; i < coeffs.size(); ++i) pairing += coeffs[i] * dc[i];
        errs[static_cast<size_t>(lvl)] = std::abs(pairing - exact);
    }
    CHECK(observed_order(errs[0], errs[1]) > 1.8);
    CHECK(observed_order(errs[1], errs[2]) > 1.8);
}

TEST_CASE("CSR storage keeps strictly increasing column indices") {
    Mesh m = build_structured_mesh(3, 3);
    DofSpace rt1(m, SpaceKind::RT1);
    SparseMatrix d = assemble_mass_V(rt1);
    REQUIRE(d.row_ptr.size() == static_cast<size_t>(d.rows) + 1);
    for (int i = 0; i < d.rows; ++i) {
        CHECK(d.row_ptr[static_cast<size_t>(i)] <= d.row_ptr[static_cast<size_t>(i) + 1]);
        for (int p = d.row_ptr[static_cast<size_t>(i)] + 1; p < d.row_ptr[static_cast<size_t>(i) + 1]; ++p)
            CHECK(d.col_idx[static_cast<size_t>(p) - 1] < d.col_idx[static_cast<size_t>(p)]);
    }
    CHECK(d.is_symmetric());
}

TEST_CASE("mismatched meshes are rejected") {
    Mesh m1 = build_structured_mesh(2, 2);
    Mesh m2 = build_structured_mesh(2, 2);
    DofSpace vh(m1, SpaceKind::RT0), wh(m2, SpaceKind::DG0);
    CHECK_THROWS_AS(assemble_div_coupling(wh, vh), std::invalid_argument);
}
