#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "hidemix/fields.hpp"
#include "hidemix/mesh.hpp"
#include "hidemix/quadrature.hpp"

namespace hidemix {

enum class SpaceKind { RT0, RT1, DG0, DG1 };

inline bool is_vector_kind(SpaceKind k) { return k == SpaceKind::RT0 || k == SpaceKind::RT1; }

inline const char* space_kind_name(SpaceKind k) {
    switch (k) {
        case SpaceKind::RT0: return "RT0";
        case SpaceKind::RT1: return "RT1";
        case SpaceKind::DG0: return "DG0";
        case SpaceKind::DG1: return "DG1";
    }
    return "?";
}

namespace detail {

// Dense n x n inversion with partial pivoting; n <= 8.
template <int N>
inline std::array<std::array<double, N>, N> invert_small(std::array<std::array<double, N>, N> a) {
    std::array<std::array<double, N>, N> inv{};
    for (int i = 0; i < N; ++i) inv[i][i] = 1.0;
    for (int k = 0; k < N; ++k) {
        int piv = k;
        for (int i = k + 1; i < N; ++i)
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        if (std::abs(a[piv][k]) < 1e-300)
            throw std::runtime_error("invert_small: singular dof matrix");
        std::swap(a[k], a[piv]);
        std::swap(inv[k], inv[piv]);
        const double d = 1.0 / a[k][k];
        for (int j = 0; j < N; ++j) { a[k][j] *= d; inv[k][j] *= d; }
        for (int i = 0; i < N; ++i) {
            if (i == k) continue;
            const double f = a[i][k];
            if (f == 0.0) continue;
            for (int j = 0; j < N; ++j) { a[i][j] -= f * a[k][j]; inv[i][j] -= f * inv[k][j]; }
        }
    }
    return inv;
}

}  // namespace detail

// A finite element space on a mesh with global dof numbering.
//
// Raviart-Thomas bases are constructed per element directly against the global
// dof functionals (edge normal moments taken with the global edge normal and
// the global low-to-high edge parametrization, plus interior mean moments for
// RT1), so element matrices scatter into global position without sign flips.
// Normalization: edge dofs are mean normal-flux densities, so the lowest-order
// basis function of edge e has |div| = |e|/|T| on an incident triangle T.
class DofSpace {
  public:
    static constexpr int kMaxLocal = 8;

    DofSpace(const Mesh& mesh, SpaceKind kind) : mesh_(&mesh), kind_(kind) {
        const int T = mesh.num_triangles();
        const int E = mesh.num_edges();
        switch (kind) {
            case SpaceKind::DG0: ndofs_ = T; local_ = 1; break;
            case SpaceKind::DG1: ndofs_ = 3 * T; local_ = 3; break;
            case SpaceKind::RT0: ndofs_ = E; local_ = 3; break;
            case SpaceKind::RT1: ndofs_ = 2 * E + 2 * T; local_ = 8; break;
        }
        if (is_vector_kind(kind)) build_rt_coefficients();
    }

    const Mesh& mesh() const { return *mesh_; }
    SpaceKind kind() const { return kind_; }
    bool is_vector() const { return is_vector_kind(kind_); }
    int num_dofs() const { return ndofs_; }
    int local_dof_count() const { return local_; }

    int global_dof(int t, int local) const {
        switch (kind_) {
            case SpaceKind::DG0: return t;
            case SpaceKind::DG1: return 3 * t + local;
            case SpaceKind::RT0: return mesh_->tri_edges[static_cast<size_t>(t)][local];
            case SpaceKind::RT1:
                if (local < 6) {
                    const int e = mesh_->tri_edges[static_cast<size_t>(t)][local / 2];
                    return 2 * e + (local % 2);
                }
                return 2 * mesh_->num_edges() + 2 * t + (local - 6);
        }
        return -1;
    }

    struct VectorBasisEval {
        int n = 0;
        std::array<Vec2, kMaxLocal> value{};
        std::array<double, kMaxLocal> divergence{};
    };

    struct ScalarBasisEval {
        int n = 0;
        std::array<double, 3> value{};
    };

    // Scalar basis values at a barycentric point of triangle t.
    ScalarBasisEval eval_scalar_basis(int t, double l0, double l1, double l2) const {
        check_tri(t);
        ScalarBasisEval out;
        if (kind_ == SpaceKind::DG0) {
            out.n = 1;
            out.value[0] = 1.0;
        } else if (kind_ == SpaceKind::DG1) {
            out.n = 3;
            out.value = {l0, l1, l2};
        } else {
            throw std::logic_error("eval_scalar_basis called on a vector space");
        }
        return out;
    }

    // Vector basis values and divergences at a barycentric point of triangle t.
    VectorBasisEval eval_vector_basis(int t, double l0, double l1, double l2) const {
        check_tri(t);
        if (!is_vector()) throw std::logic_error("eval_vector_basis called on a scalar space");
        return eval_vector_basis_at(t, mesh_->from_barycentric(t, l0, l1, l2));
    }

    // Same, at a physical point of triangle t (used by assembly loops).
    VectorBasisEval eval_vector_basis_at(int t, Vec2 x) const {
        const auto& el = rt_[static_cast<size_t>(t)];
        const double inv_s = 1.0 / el.scale;
        const Vec2 xi = (x - el.center) * inv_s;
        const int nm = (kind_ == SpaceKind::RT0) ? 3 : 8;
        std::array<Vec2, 8> mono{};
        std::array<double, 8> mdiv{};
        if (kind_ == SpaceKind::RT0) {
            mono[0] = {1.0, 0.0};
            mono[1] = {0.0, 1.0};
            mono[2] = xi;
            mdiv = {0.0, 0.0, 2.0 * inv_s};
        } else {
            mono[0] = {1.0, 0.0};
            mono[1] = {xi.x, 0.0};
            mono[2] = {xi.y, 0.0};
            mono[3] = {0.0, 1.0};
            mono[4] = {0.0, xi.x};
            mono[5] = {0.0, xi.y};
            mono[6] = {xi.x * xi.x, xi.x * xi.y};
            mono[7] = {xi.x * xi.y, xi.y * xi.y};
            mdiv = {0.0, inv_s, 0.0, 0.0, 0.0, inv_s, 3.0 * xi.x * inv_s, 3.0 * xi.y * inv_s};
        }
        VectorBasisEval out;
        out.n = local_;
        for (int d = 0; d < local_; ++d) {
            Vec2 v{0.0, 0.0};
            double dv = 0.0;
            const double* c = &el.coeff[static_cast<size_t>(d) * 8];
            for (int m = 0; m < nm; ++m) {
                v += mono[m] * c[m];
                dv += mdiv[m] * c[m];
            }
            out.value[d] = v;
            out.divergence[d] = dv;
        }
        return out;
    }

    // Evaluate a coefficient vector as a field on triangle t.
    double eval_scalar(std::span<const double> coeffs, int t, double l0, double l1, double l2) const {
        auto b = eval_scalar_basis(t, l0, l1, l2);
        double s = 0.0;
        for (int d = 0; d < b.n; ++d) s += coeffs[static_cast<size_t>(global_dof(t, d))] * b.value[d];
        return s;
    }

    Vec2 eval_vector(std::span<const double> coeffs, int t, Vec2 x) const {
        auto b = eval_vector_basis_at(t, x);
        Vec2 s{0.0, 0.0};
        for (int d = 0; d < b.n; ++d) s += b.value[d] * coeffs[static_cast<size_t>(global_dof(t, d))];
        return s;
    }

    double eval_vector_div(std::span<const double> coeffs, int t, Vec2 x) const {
        auto b = eval_vector_basis_at(t, x);
        double s = 0.0;
        for (int d = 0; d < b.n; ++d) s += b.divergence[d] * coeffs[static_cast<size_t>(global_dof(t, d))];
        return s;
    }

  private:
    struct RTElement {
        Vec2 center;
        double scale = 1.0;
        std::array<double, 64> coeff{};  // coeff[d*8 + m], basis d over monomial m
    };

    void check_tri(int t) const {
        if (t < 0 || t >= mesh_->num_triangles())
            throw std::out_of_range("DofSpace: element index out of range");
    }

    void build_rt_coefficients() {
        const int nm = (kind_ == SpaceKind::RT0) ? 3 : 8;
        rt_.resize(static_cast<size_t>(mesh_->num_triangles()));
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            RTElement& el = rt_[static_cast<size_t>(t)];
            el.center = mesh_->tri_centroid(t);
            el.scale = mesh_->tri_diameter(t);
            const double inv_s = 1.0 / el.scale;

            auto monomials = [&](Vec2 x, std::array<Vec2, 8>& mono) {
                const Vec2 xi = (x - el.center) * inv_s;
                if (kind_ == SpaceKind::RT0) {
                    mono[0] = {1.0, 0.0};
                    mono[1] = {0.0, 1.0};
                    mono[2] = xi;
                } else {
                    mono[0] = {1.0, 0.0};
                    mono[1] = {xi.x, 0.0};
                    mono[2] = {xi.y, 0.0};
                    mono[3] = {0.0, 1.0};
                    mono[4] = {0.0, xi.x};
                    mono[5] = {0.0, xi.y};
                    mono[6] = {xi.x * xi.x, xi.x * xi.y};
                    mono[7] = {xi.x * xi.y, xi.y * xi.y};
                }
            };

            // dof rows applied to each monomial
            std::array<std::array<double, 8>, 8> M{};
            std::array<Vec2, 8> mono{};
            for (int le = 0; le < 3; ++le) {
                const int e = mesh_->tri_edges[static_cast<size_t>(t)][le];
                const auto& ed = mesh_->edges[static_cast<size_t>(e)];
                const Vec2 a = mesh_->vertex(ed[0]);
                const Vec2 b = mesh_->vertex(ed[1]);
                const Vec2 n = mesh_->edge_normal(e);
                for (const auto& g : gauss5()) {
                    const Vec2 x = a + (b - a) * g.x;
                    monomials(x, mono);
                    for (int m = 0; m < nm; ++m) {
                        const double fn = mono[static_cast<size_t>(m)].dot(n);
                        if (kind_ == SpaceKind::RT0) {
                            M[static_cast<size_t>(le)][static_cast<size_t>(m)] += g.w * fn;
                        } else {
                            M[static_cast<size_t>(2 * le)][static_cast<size_t>(m)] += g.w * fn;
                            M[static_cast<size_t>(2 * le + 1)][static_cast<size_t>(m)] +=
                                g.w * fn * (2.0 * g.x - 1.0);
                        }
                    }
                }
            }
            if (kind_ == SpaceKind::RT1) {
                for (const auto& g : tri_rule_d5()) {
                    const Vec2 x = mesh_->from_barycentric(t, g.l0, g.l1, g.l2);
                    monomials(x, mono);
                    for (int m = 0; m < nm; ++m) {
                        M[6][static_cast<size_t>(m)] += g.w * mono[static_cast<size_t>(m)].x;
                        M[7][static_cast<size_t>(m)] += g.w * mono[static_cast<size_t>(m)].y;
                    }
                }
            }

            if (kind_ == SpaceKind::RT0) {
                std::array<std::array<double, 3>, 3> m3{};
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) m3[i][j] = M[i][j];
                auto inv = detail::invert_small<3>(m3);
                // basis d = sum_m inv[m][d] * mono_m  (C = M^{-T})
                for (int d = 0; d < 3; ++d)
                    for (int m = 0; m < 3; ++m) el.coeff[static_cast<size_t>(d) * 8 + m] = inv[m][d];
            } else {
                auto inv = detail::invert_small<8>(M);
                for (int d = 0; d < 8; ++d)
                    for (int m = 0; m < 8; ++m) el.coeff[static_cast<size_t>(d) * 8 + m] = inv[m][d];
            }
        }
    }

    const Mesh* mesh_;
    SpaceKind kind_;
    int ndofs_ = 0;
    int local_ = 0;
    std::vector<RTElement> rt_;
};

// Paired spaces used by the mixed schemes.
inline SpaceKind scalar_partner(SpaceKind rt) {
    if (rt == SpaceKind::RT0) return SpaceKind::DG0;
    if (rt == SpaceKind::RT1) return SpaceKind::DG1;
    throw std::invalid_argument("scalar_partner: expected an RT kind");
}

// --- error norms -----------------------------------------------------------

// L2 norm of (f - u_h) with the degree-8 rule.
inline double l2_error_scalar(const ScalarField& f, std::span<const double> coeffs,
                              const DofSpace& space) {
    const Mesh& m = space.mesh();
    double acc = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d8()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const double d = f(x) - space.eval_scalar(coeffs, t, g.l0, g.l1, g.l2);
            acc += area * g.w * d * d;
        }
    }
    return std::sqrt(acc);
}

inline double l2_error_vector(const VectorField& f, std::span<const double> coeffs,
                              const DofSpace& space) {
    const Mesh& m = space.mesh();
    double acc = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d8()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            const Vec2 d = f(x) - space.eval_vector(coeffs, t, x);
            acc += area * g.w * d.dot(d);
        }
    }
    return std::sqrt(acc);
}

// Max-norm sampled on the fixed 6-point lattice (vertices + edge midpoints).
inline double linf_error_scalar(const ScalarField& f, std::span<const double> coeffs,
                                const DofSpace& space) {
    static const std::array<std::array<double, 3>, 6> lattice = {{{1, 0, 0},
                                                                  {0, 1, 0},
                                                                  {0, 0, 1},
                                                                  {0.5, 0.5, 0},
                                                                  {0, 0.5, 0.5},
                                                                  {0.5, 0, 0.5}}};
    const Mesh& m = space.mesh();
    double worst = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        for (const auto& p : lattice) {
            const Vec2 x = m.from_barycentric(t, p[0], p[1], p[2]);
            worst = std::max(worst, std::abs(f(x) - space.eval_scalar(coeffs, t, p[0], p[1], p[2])));
        }
    }
    return worst;
}

}  // namespace hidemix
