#pragma once

#include <span>
#include <vector>

#include "hidemix/assembly.hpp"
#include "hidemix/linsolve.hpp"
#include "hidemix/spaces.hpp"

namespace hidemix {

// L2 projection onto a DG space. The mass matrix is block-diagonal, so the
// projection reduces to small per-element solves.
inline std::vector<double> l2_project_scalar(const ScalarField& f, const DofSpace& wh) {
    if (wh.is_vector()) throw std::invalid_argument("l2_project_scalar: scalar space required");
    const Mesh& m = wh.mesh();
    std::vector<double> coeffs(static_cast<size_t>(wh.num_dofs()), 0.0);
    const int nl = wh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        std::array<std::array<double, 3>, 3> mass{};
        std::array<double, 3> rhs{};
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const auto b = wh.eval_scalar_basis(t, g.l0, g.l1, g.l2);
            const double fv = f(x);
            for (int i = 0; i < nl; ++i) {
                rhs[static_cast<size_t>(i)] += g.w * fv * b.value[static_cast<size_t>(i)];
                for (int j = 0; j < nl; ++j)
                    mass[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                        g.w * b.value[static_cast<size_t>(i)] * b.value[static_cast<size_t>(j)];
            }
        }
        if (nl == 1) {
            coeffs[static_cast<size_t>(wh.global_dof(t, 0))] = rhs[0] / mass[0][0];
        } else {
            auto inv = detail::invert_small<3>(mass);
            for (int i = 0; i < nl; ++i) {
                double s = 0.0;
                for (int j = 0; j < nl; ++j) s += inv[static_cast<size_t>(i)][static_cast<size_t>(j)] * rhs[static_cast<size_t>(j)];
                coeffs[static_cast<size_t>(wh.global_dof(t, i))] = s;
            }
        }
    }
    return coeffs;
}

// L2 projection onto an RT space via the global mass system.
inline std::vector<double> l2_project_vector(const VectorField& g, const DofSpace& vh) {
    if (!vh.is_vector()) throw std::invalid_argument("l2_project_vector: vector space required");
    SparseMatrix d = assemble_mass_V(vh);
    std::vector<double> load = assemble_vector_load(
        [&g](Vec2 x, double) { return g(x); }, 0.0, vh);
    SparseLU lu(d);
    return lu.solve(load);
}

// Raviart-Thomas interpolation: reproduce edge normal moments (and interior
// mean moments for RT1) of g. Commutes with the divergence against W_h.
inline std::vector<double> rt_interpolate(const VectorField& g, const DofSpace& vh) {
    if (!vh.is_vector()) throw std::invalid_argument("rt_interpolate: vector space required");
    const Mesh& m = vh.mesh();
    std::vector<double> coeffs(static_cast<size_t>(vh.num_dofs()), 0.0);
    const bool rt1 = vh.kind() == SpaceKind::RT1;
    for (int e = 0; e < m.num_edges(); ++e) {
        const auto& ed = m.edges[static_cast<size_t>(e)];
        const Vec2 a = m.vertex(ed[0]);
        const Vec2 b = m.vertex(ed[1]);
        const Vec2 n = m.edge_normal(e);
        double m0 = 0.0, m1 = 0.0;
        for (const auto& gq : gauss5()) {
            const double gn = g(a + (b - a) * gq.x).dot(n);
            m0 += gq.w * gn;
            m1 += gq.w * gn * (2.0 * gq.x - 1.0);
        }
        if (rt1) {
            coeffs[static_cast<size_t>(2 * e)] = m0;
            coeffs[static_cast<size_t>(2 * e + 1)] = m1;
        } else {
            coeffs[static_cast<size_t>(e)] = m0;
        }
    }
    if (rt1) {
        const int off = 2 * m.num_edges();
        for (int t = 0; t < m.num_triangles(); ++t) {
            Vec2 mean{0.0, 0.0};
            for (const auto& gq : tri_rule_d5())
                mean += g(m.from_barycentric(t, gq.l0, gq.l1, gq.l2)) * gq.w;
            coeffs[static_cast<size_t>(off + 2 * t)] = mean.x;
            coeffs[static_cast<size_t>(off + 2 * t + 1)] = mean.y;
        }
    }
    return coeffs;
}

}  // namespace hidemix
