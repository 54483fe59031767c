#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hidemix/fields.hpp"
#include "hidemix/sparse.hpp"
#include "hidemix/spaces.hpp"

namespace hidemix {

struct AssemblyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mass matrix on a vector space: M[i][j] = (K psi_j, psi_i), K an optional
// matrix coefficient (identity when absent). Symmetric for symmetric K.
inline SparseMatrix assemble_mass_V(const DofSpace& vh, const MatrixField& coeff = {}) {
    if (!vh.is_vector()) throw std::invalid_argument("assemble_mass_V: vector space required");
    const Mesh& m = vh.mesh();
    TripletBuilder tb(vh.num_dofs(), vh.num_dofs());
    const int nl = vh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        std::array<std::array<double, DofSpace::kMaxLocal>, DofSpace::kMaxLocal> loc{};
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const auto b = vh.eval_vector_basis_at(t, x);
            Mat2 k = coeff ? coeff(x) : Mat2::identity();
            if (!k.finite())
                throw AssemblyError("assemble_mass_V: non-finite coefficient on element " +
                                    std::to_string(t));
            std::array<Vec2, DofSpace::kMaxLocal> kb{};
            for (int j = 0; j < nl; ++j) kb[static_cast<size_t>(j)] = k.apply(b.value[static_cast<size_t>(j)]);
            for (int i = 0; i < nl; ++i)
                for (int j = 0; j < nl; ++j)
                    loc[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                        area * g.w * kb[static_cast<size_t>(j)].dot(b.value[static_cast<size_t>(i)]);
        }
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j)
                tb.add(vh.global_dof(t, i), vh.global_dof(t, j), loc[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    }
    return tb.build();
}

// Kernel-coefficient variant evaluated at fixed times (t, s).
inline SparseMatrix assemble_mass_V_kernel(const DofSpace& vh, const MatrixKernel& kernel,
                                           double t_eval, double s_eval) {
    return assemble_mass_V(vh, [&](Vec2 x) { return kernel(x, t_eval, s_eval); });
}

// Component mass matrices D_ab[i][j] = (psi_j . e_b)(psi_i . e_a); any matrix
// coefficient mass is a linear combination of these four when the coefficient
// is spatially constant.
inline std::array<SparseMatrix, 4> assemble_mass_V_components(const DofSpace& vh) {
    if (!vh.is_vector()) throw std::invalid_argument("assemble_mass_V_components: vector space required");
    const Mesh& m = vh.mesh();
    std::array<TripletBuilder, 4> tb{TripletBuilder(vh.num_dofs(), vh.num_dofs()),
                                     TripletBuilder(vh.num_dofs(), vh.num_dofs()),
                                     TripletBuilder(vh.num_dofs(), vh.num_dofs()),
                                     TripletBuilder(vh.num_dofs(), vh.num_dofs())};
    const int nl = vh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j) {
                std::array<double, 4> acc{};
                for (const auto& g : tri_rule_d5()) {
                    const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
                    const auto b = vh.eval_vector_basis_at(t, x);
                    const Vec2 vi = b.value[static_cast<size_t>(i)];
                    const Vec2 vj = b.value[static_cast<size_t>(j)];
                    acc[0] += area * g.w * vi.x * vj.x;
                    acc[1] += area * g.w * vi.x * vj.y;
                    acc[2] += area * g.w * vi.y * vj.x;
                    acc[3] += area * g.w * vi.y * vj.y;
                }
                for (int c = 0; c < 4; ++c)
                    tb[static_cast<size_t>(c)].add(vh.global_dof(t, i), vh.global_dof(t, j), acc[static_cast<size_t>(c)]);
            }
    }
    return {tb[0].build(), tb[1].build(), tb[2].build(), tb[3].build()};
}

// Divergence coupling C[i][j] = (w_i, div psi_j), rows over W_h, cols over V_h.
inline SparseMatrix assemble_div_coupling(const DofSpace& wh, const DofSpace& vh) {
    if (wh.is_vector() || !vh.is_vector())
        throw std::invalid_argument("assemble_div_coupling: expected (scalar, vector) spaces");
    if (&wh.mesh() != &vh.mesh())
        throw std::invalid_argument("assemble_div_coupling: spaces live on different meshes");
    const Mesh& m = vh.mesh();
    TripletBuilder tb(wh.num_dofs(), vh.num_dofs());
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        const int nw = wh.local_dof_count();
        const int nv = vh.local_dof_count();
        std::array<std::array<double, DofSpace::kMaxLocal>, 3> loc{};
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const auto bw = wh.eval_scalar_basis(t, g.l0, g.l1, g.l2);
            const auto bv = vh.eval_vector_basis_at(t, x);
            for (int i = 0; i < nw; ++i)
                for (int j = 0; j < nv; ++j)
                    loc[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                        area * g.w * bw.value[static_cast<size_t>(i)] * bv.divergence[static_cast<size_t>(j)];
        }
        for (int i = 0; i < nw; ++i)
            for (int j = 0; j < nv; ++j)
                tb.add(wh.global_dof(t, i), vh.global_dof(t, j), loc[static_cast<size_t>(i)][static_cast<size_t>(j)]);
    }
    return tb.build();
}

// Scalar mass matrix; block-diagonal for DG spaces.
inline SparseMatrix assemble_mass_W(const DofSpace& wh) {
    if (wh.is_vector()) throw std::invalid_argument("assemble_mass_W: scalar space required");
    const Mesh& m = wh.mesh();
    TripletBuilder tb(wh.num_dofs(), wh.num_dofs());
    const int nl = wh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const auto b = wh.eval_scalar_basis(t, g.l0, g.l1, g.l2);
            for (int i = 0; i < nl; ++i)
                for (int j = 0; j < nl; ++j)
                    tb.add(wh.global_dof(t, i), wh.global_dof(t, j),
                           area * g.w * b.value[static_cast<size_t>(i)] * b.value[static_cast<size_t>(j)]);
        }
    }
    return tb.build();
}

// Load vector (f(., t), w_i).
inline std::vector<double> assemble_load(const ScalarFieldT& f, double time, const DofSpace& wh) {
    if (wh.is_vector()) throw std::invalid_argument("assemble_load: scalar space required");
    const Mesh& m = wh.mesh();
    std::vector<double> load(static_cast<size_t>(wh.num_dofs()), 0.0);
    if (!f) return load;
    const int nl = wh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const double fv = f(x, time);
            if (!std::isfinite(fv))
                throw AssemblyError("assemble_load: non-finite source on element " + std::to_string(t));
            const auto b = wh.eval_scalar_basis(t, g.l0, g.l1, g.l2);
            for (int i = 0; i < nl; ++i)
                load[static_cast<size_t>(wh.global_dof(t, i))] += area * g.w * fv * b.value[static_cast<size_t>(i)];
        }
    }
    return load;
}

// Load vector (f, div psi_i) pairing a scalar field against divergences.
inline std::vector<double> assemble_div_load(const ScalarField& f, const DofSpace& vh) {
    if (!vh.is_vector()) throw std::invalid_argument("assemble_div_load: vector space required");
    const Mesh& m = vh.mesh();
    std::vector<double> load(static_cast<size_t>(vh.num_dofs()), 0.0);
    const int nl = vh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const double fv = f(x);
            const auto b = vh.eval_vector_basis_at(t, x);
            for (int i = 0; i < nl; ++i)
                load[static_cast<size_t>(vh.global_dof(t, i))] +=
                    area * g.w * fv * b.divergence[static_cast<size_t>(i)];
        }
    }
    return load;
}

// Load vector (g(., t), psi_i) on a vector space.
inline std::vector<double> assemble_vector_load(const VectorFieldT& g, double time, const DofSpace& vh) {
    if (!vh.is_vector()) throw std::invalid_argument("assemble_vector_load: vector space required");
    const Mesh& m = vh.mesh();
    std::vector<double> load(static_cast<size_t>(vh.num_dofs()), 0.0);
    const int nl = vh.local_dof_count();
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g5 : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g5.l0, g5.l1, g5.l2);
            const Vec2 gv = g(x, time);
            const auto b = vh.eval_vector_basis_at(t, x);
            for (int i = 0; i < nl; ++i)
                load[static_cast<size_t>(vh.global_dof(t, i))] += area * g5.w * gv.dot(b.value[static_cast<size_t>(i)]);
        }
    }
    return load;
}

}  // namespace hidemix
