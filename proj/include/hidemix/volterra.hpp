#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hidemix/assembly.hpp"
#include "hidemix/fields.hpp"
#include "hidemix/quadrature.hpp"
#include "hidemix/sparse.hpp"

namespace hidemix {

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- midpoint quadrature and its error functional ---------------------------

// Composite midpoint sum k * sum_{j<n} g(t_{j+1/2}) approximating the integral
// of g over [0, nk].
inline double midpoint_sum(const std::function<double(double)>& g, int n, double k) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += g((j + 0.5) * k);
    return k * s;
}

// Signed quadrature error of the midpoint sum against an accurate reference
// integral.
inline double quadrature_error(const std::function<double(double)>& g, int n, double k) {
    const double ref = integrate_1d(g, 0.0, n * k, 1e-13);
    return midpoint_sum(g, n, k) - ref;
}

// Peano-kernel form of the same error: sum over panels of the integral of
// K(s) g''(s) with the midpoint-rule Peano kernel K(s) = -(s - t_j)^2 / 2 on
// the left half panel and -(s - t_{j+1})^2 / 2 on the right. Per half panel a
// Gauss rule is used; the identity is exact for C^2 integrands.
inline double peano_error(const std::function<double(double)>& g_dd, int n, double k) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        const double t0 = j * k, tm = (j + 0.5) * k, t1 = (j + 1) * k;
        for (const auto& gq : gauss5()) {
            const double sl = t0 + (tm - t0) * gq.x;
            acc -= (tm - t0) * gq.w * 0.5 * (sl - t0) * (sl - t0) * g_dd(sl);
            const double sr = tm + (t1 - tm) * gq.x;
            acc -= (t1 - tm) * gq.w * 0.5 * (sr - t1) * (sr - t1) * g_dd(sr);
        }
    }
    return acc;
}

// --- kernel data -------------------------------------------------------------

enum class KernelKind { zero, convolution, separable, general };

// One term of a separable expansion B(x,t,s) = sum_i a_i(t) b_i(s) B_i(x).
struct SeparableTerm {
    std::function<double(double)> a_t;
    std::function<double(double)> b_s;
    MatrixField spatial;
};

// Resolvent values R(t_m, t_{j+1/2}) on the staggered lattice 0 <= j < m <= N.
struct ResolventTable {
    int n_levels = 0;
    double k = 0.0;
    std::vector<Mat2> entries;  // offset(m) + j with offset(m) = m(m-1)/2

    const Mat2& at(int m, int j) const {
        if (m < 1 || m > n_levels || j < 0 || j >= m)
            throw std::out_of_range("ResolventTable::at: lattice index out of range");
        return entries[static_cast<size_t>(m) * (m - 1) / 2 + static_cast<size_t>(j)];
    }
};

// Coefficient fields of the memory problem: A(x), its pointwise inverse, the
// kernel B(x,t,s), and any prepared resolvent tables for the standard method.
struct KernelSet {
    MatrixField A = identity_matrix_field();
    MatrixKernel B;                      // unused when kind == zero
    KernelKind kind = KernelKind::zero;
    std::vector<SeparableTerm> terms;    // optional fast path for B sums
    bool spatially_constant = true;

    // resolvent tables; a single shared table when spatially constant
    std::vector<ResolventTable> tables;
    std::vector<Vec2> table_points;

    Mat2 alpha(Vec2 x) const {
        Mat2 a = A(x);
        if (std::abs(a.det()) < 1e-14 * std::max(1.0, a.max_abs() * a.max_abs()))
            throw std::domain_error("KernelSet: coefficient matrix A is not invertible");
        return a.inverse();
    }

    Mat2 eval_B(Vec2 x, double t, double s) const {
        if (kind == KernelKind::zero) return Mat2{};
        return B(x, t, s);
    }

    bool has_memory() const { return kind != KernelKind::zero; }

    // The implicit self-term matrix B(t_{n+1}, t_{n+1/2}) is the same at every
    // step for difference kernels b(t-s), so the step matrix can be factored once.
    bool self_term_constant() const {
        return kind == KernelKind::zero || kind == KernelKind::convolution;
    }
};

inline KernelSet zero_kernel(MatrixField a = identity_matrix_field(), bool constant_a = true) {
    KernelSet ks;
    ks.A = std::move(a);
    ks.kind = KernelKind::zero;
    ks.spatially_constant = constant_a;
    return ks;
}

// A must be symmetric positive definite and alpha(x) A(x) = identity, checked
// at the element quadrature points.
inline void check_kernel_set(const KernelSet& ks, const Mesh& mesh, double tol = 1e-12) {
    for (int t = 0; t < mesh.num_triangles(); ++t)
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = mesh.from_barycentric(t, g.l0, g.l1, g.l2);
            const Mat2 a = ks.A(x);
            if (std::abs(a.a12 - a.a21) > tol * std::max(1.0, a.max_abs()))
                throw std::logic_error("KernelSet: coefficient matrix A is not symmetric");
            if (!(a.a11 > 0.0) || !(a.det() > 0.0))
                throw std::logic_error("KernelSet: coefficient matrix A is not positive definite");
            const Mat2 prod = ks.alpha(x).matmul(a);
            const Mat2 diff = prod - Mat2::identity();
            if (diff.max_abs() > tol * std::max(1.0, a.max_abs()))
                throw std::logic_error("KernelSet: alpha * A deviates from identity");
        }
}

// --- resolvent ---------------------------------------------------------------

// Solve R(t,s) = K(t,s) + int_s^t K(t,tau) R(tau,s) dtau, K = A^{-1} B, for one
// spatial point by marching in t with composite trapezoid product integration.
// The table holds R at the staggered lattice points (t_m, t_{j+1/2}).
inline ResolventTable resolvent_table(const KernelSet& ks, Vec2 x, int n_levels, double k,
                                      int substeps = 2) {
    if (substeps < 1) throw std::invalid_argument("resolvent_table: substeps must be >= 1");
    if (n_levels < 1) throw std::invalid_argument("resolvent_table: need at least one level");
    ResolventTable tab;
    tab.n_levels = n_levels;
    tab.k = k;
    tab.entries.assign(static_cast<size_t>(n_levels) * (n_levels + 1) / 2, Mat2{});
    if (!ks.has_memory()) return tab;

    const Mat2 alpha = ks.alpha(x);
    auto kern = [&](double t, double s) { return alpha.matmul(ks.eval_B(x, t, s)); };
    const double delta = k / (2.0 * substeps);

    if (ks.kind == KernelKind::convolution) {
        // a difference kernel has a difference-kernel resolvent: march one
        // column and translate, which also makes entries on each diagonal
        // t - s = const bitwise identical
        const double s = 0.5 * k;
        const int steps = (2 * n_levels - 1) * substeps;
        std::vector<Mat2> r(static_cast<size_t>(steps) + 1);
        r[0] = kern(s, s);
        for (int i = 1; i <= steps; ++i) {
            const double ti = s + i * delta;
            Mat2 rhs = kern(ti, s);
            Mat2 acc = kern(ti, s).matmul(r[0]) * 0.5;
            for (int l = 1; l < i; ++l) acc += kern(ti, s + l * delta).matmul(r[static_cast<size_t>(l)]);
            rhs += acc * delta;
            const Mat2 lhs = Mat2::identity() - kern(ti, ti) * (0.5 * delta);
            r[static_cast<size_t>(i)] = lhs.inverse().matmul(rhs);
        }
        for (int m = 1; m <= n_levels; ++m)
            for (int j = 0; j < m; ++j)
                tab.entries[static_cast<size_t>(m) * (m - 1) / 2 + static_cast<size_t>(j)] =
                    r[static_cast<size_t>((2 * (m - j) - 1) * substeps)];
        return tab;
    }

    for (int j = 0; j < n_levels; ++j) {
        const double s = (j + 0.5) * k;
        const int steps = (2 * (n_levels - j) - 1) * substeps;
        std::vector<Mat2> r(static_cast<size_t>(steps) + 1);
        r[0] = kern(s, s);
        for (int i = 1; i <= steps; ++i) {
            const double ti = s + i * delta;
            Mat2 rhs = kern(ti, s);
            Mat2 acc = kern(ti, s).matmul(r[0]) * 0.5;
            for (int l = 1; l < i; ++l) acc += kern(ti, s + l * delta).matmul(r[static_cast<size_t>(l)]);
            rhs += acc * delta;
            const Mat2 lhs = Mat2::identity() - kern(ti, ti) * (0.5 * delta);
            r[static_cast<size_t>(i)] = lhs.inverse().matmul(rhs);
        }
        for (int m = j + 1; m <= n_levels; ++m) {
            const int idx = (2 * (m - j) - 1) * substeps;
            tab.entries[static_cast<size_t>(m) * (m - 1) / 2 + static_cast<size_t>(j)] =
                r[static_cast<size_t>(idx)];
        }
    }
    return tab;
}

// Build tables for every supplied spatial point (one shared table when the
// coefficients are spatially constant).
inline void prepare_resolvent(KernelSet& ks, const std::vector<Vec2>& points, int n_levels,
                              double k, int substeps = 2) {
    ks.tables.clear();
    ks.table_points.clear();
    if (ks.spatially_constant) {
        const Vec2 x = points.empty() ? Vec2{0.0, 0.0} : points.front();
        ks.tables.push_back(resolvent_table(ks, x, n_levels, k, substeps));
        return;
    }
    ks.table_points = points;
    ks.tables.reserve(points.size());
    for (const Vec2& x : points) ks.tables.push_back(resolvent_table(ks, x, n_levels, k, substeps));
}

namespace detail {

inline const ResolventTable& table_for_point(const KernelSet& ks, Vec2 x) {
    if (ks.tables.empty())
        throw StateError("m_kernel: resolvent tables have not been prepared");
    if (ks.spatially_constant) return ks.tables.front();
    for (size_t i = 0; i < ks.table_points.size(); ++i)
        if (ks.table_points[i].x == x.x && ks.table_points[i].y == x.y) return ks.tables[i];
    throw StateError("m_kernel: no resolvent table for the requested point");
}

inline int lattice_level(double t, double k, const char* what) {
    const double m = t / k;
    const int mi = static_cast<int>(std::lround(m));
    if (std::abs(m - mi) > 1e-9)
        throw std::invalid_argument(std::string(what) + ": time is not on the scheme lattice");
    return mi;
}

}  // namespace detail

// M(t,s) = R(t,s) A^{-1}(x) on the staggered lattice; off-lattice queries are
// rejected rather than interpolated.
inline Mat2 m_kernel(const KernelSet& ks, Vec2 x, double t, double s) {
    if (!ks.has_memory()) return Mat2{};
    const ResolventTable& tab = detail::table_for_point(ks, x);
    const int m = detail::lattice_level(t, tab.k, "m_kernel");
    const int j = detail::lattice_level(s - 0.5 * tab.k, tab.k, "m_kernel");
    return tab.at(m, j).matmul(ks.alpha(x));
}

// --- history buffers and midpoint memory sums --------------------------------

// Half-level snapshots Q^{j+1/2} (or Z^{j+1/2}) plus running separable sums
// S_i = k sum_j b_i(t_{j+1/2}) Q^{j+1/2}.
struct HistoryBuffer {
    double k = 0.0;
    std::vector<std::vector<double>> snaps;
    std::vector<std::vector<double>> sep_sums;

    int size() const { return static_cast<int>(snaps.size()); }

    void push(std::vector<double> snap, const KernelSet& ks) {
        const double t_mid = (size() + 0.5) * k;
        if (!ks.terms.empty()) {
            if (sep_sums.empty()) sep_sums.assign(ks.terms.size(), std::vector<double>(snap.size(), 0.0));
            for (size_t i = 0; i < ks.terms.size(); ++i) {
                const double w = k * ks.terms[i].b_s(t_mid);
                for (size_t d = 0; d < snap.size(); ++d) sep_sums[i][d] += w * snap[d];
            }
        }
        snaps.push_back(std::move(snap));
    }
};

// Memory sums of one kernel against one vector space. `history_sum` returns
// the strictly-past part of the midpoint rule; the implicit half-term matrix
// (k/2) B(t_{n+1}, t_{n+1/2}) is exposed separately so the stepper can keep the
// unknown Q^{n+1/2} on the left-hand side.
class MemoryOperator {
  public:
    enum class Kind { B, M };

    MemoryOperator(const KernelSet& ks, const DofSpace& vh, Kind kind = Kind::B)
        : ks_(&ks), vh_(&vh), kind_(kind) {
        if (kind_ == Kind::B) {
            for (const auto& term : ks.terms)
                term_matrices_.push_back(assemble_mass_V(vh, term.spatial));
        } else if (ks.has_memory() && ks.spatially_constant) {
            components_ = assemble_mass_V_components(vh);
        }
    }

    const DofSpace& space() const { return *vh_; }

    // ( sum_{j<n} k Kernel(t_eval, t_{j+1/2}) Q^{j+1/2}, psi_i )
    std::vector<double> history_sum(const HistoryBuffer& hist, double t_eval, int expected_steps) const {
        if (hist.size() != expected_steps)
            throw StateError("history_sum: buffer length does not match the step index");
        std::vector<double> out(static_cast<size_t>(vh_->num_dofs()), 0.0);
        if (!ks_->has_memory() || hist.size() == 0) return out;
        if (kind_ == Kind::B && !ks_->terms.empty()) {
            for (size_t i = 0; i < ks_->terms.size(); ++i) {
                const double a = ks_->terms[i].a_t(t_eval);
                auto mv = term_matrices_[i].multiply(hist.sep_sums[i]);
                for (size_t d = 0; d < out.size(); ++d) out[d] += a * mv[d];
            }
            return out;
        }
        if (kind_ == Kind::M && ks_->spatially_constant) {
            // M(t,s) is one 2x2 matrix per (t,s); combine component masses.
            const ResolventTable& tab = detail::table_for_point(*ks_, Vec2{0.0, 0.0});
            const int m = detail::lattice_level(t_eval, hist.k, "history_sum");
            const Mat2 alpha = ks_->alpha(Vec2{0.0, 0.0});
            std::array<std::vector<double>, 4> weighted;
            for (auto& w : weighted) w.assign(hist.snaps.front().size(), 0.0);
            for (int j = 0; j < hist.size(); ++j) {
                const Mat2 mk = tab.at(m, j).matmul(alpha);
                const auto& snap = hist.snaps[static_cast<size_t>(j)];
                const std::array<double, 4> c{hist.k * mk.a11, hist.k * mk.a12,
                                              hist.k * mk.a21, hist.k * mk.a22};
                for (int comp = 0; comp < 4; ++comp) {
                    if (c[static_cast<size_t>(comp)] == 0.0) continue;
                    auto& w = weighted[static_cast<size_t>(comp)];
                    for (size_t d = 0; d < snap.size(); ++d) w[d] += c[static_cast<size_t>(comp)] * snap[d];
                }
            }
            for (int comp = 0; comp < 4; ++comp) {
                auto mv = components_[static_cast<size_t>(comp)].multiply(weighted[static_cast<size_t>(comp)]);
                for (size_t d = 0; d < out.size(); ++d) out[d] += mv[d];
            }
            return out;
        }
        return history_sum_direct(hist, t_eval);
    }

    // (k/2) * [(Kernel(t_next, t_next - k/2) psi_j, psi_i)]
    SparseMatrix self_term_matrix(double t_next, double k) const {
        const double s = t_next - 0.5 * k;
        if (!ks_->has_memory()) {
            TripletBuilder tb(vh_->num_dofs(), vh_->num_dofs());
            return tb.build();
        }
        if (kind_ == Kind::B)
            return scale(assemble_mass_V_kernel(*vh_, ks_->B, t_next, s), 0.5 * k);
        return scale(assemble_mass_V(*vh_, [&](Vec2 x) { return m_kernel(*ks_, x, t_next, s); }),
                     0.5 * k);
    }

    // Holds for difference kernels in both the B and M forms (the resolvent of
    // a difference kernel is again a difference kernel).
    bool self_term_constant() const { return ks_->self_term_constant(); }

  private:
    static SparseMatrix scale(SparseMatrix m, double s) {
        for (auto& v : m.vals) v *= s;
        return m;
    }

    // matrix-free accumulation; handles spatially varying kernels
    std::vector<double> history_sum_direct(const HistoryBuffer& hist, double t_eval) const {
        const Mesh& mesh = vh_->mesh();
        std::vector<double> out(static_cast<size_t>(vh_->num_dofs()), 0.0);
        const int nl = vh_->local_dof_count();
        const int n = hist.size();
        for (int t = 0; t < mesh.num_triangles(); ++t) {
            const double area = mesh.tri_area(t);
            for (const auto& g : tri_rule_d5()) {
                const Vec2 x = mesh.from_barycentric(t, g.l0, g.l1, g.l2);
                const auto b = vh_->eval_vector_basis_at(t, x);
                Vec2 acc{0.0, 0.0};
                for (int j = 0; j < n; ++j) {
                    const double s = (j + 0.5) * hist.k;
                    Vec2 snap{0.0, 0.0};
                    const auto& coeffs = hist.snaps[static_cast<size_t>(j)];
                    for (int d = 0; d < nl; ++d)
                        snap += b.value[static_cast<size_t>(d)] * coeffs[static_cast<size_t>(vh_->global_dof(t, d))];
                    const Mat2 kmat = kind_ == Kind::B ? ks_->eval_B(x, t_eval, s)
                                                       : m_kernel(*ks_, x, t_eval, s);
                    acc += kmat.apply(snap) * hist.k;
                }
                for (int d = 0; d < nl; ++d)
                    out[static_cast<size_t>(vh_->global_dof(t, d))] +=
                        area * g.w * acc.dot(b.value[static_cast<size_t>(d)]);
            }
        }
        return out;
    }

    const KernelSet* ks_;
    const DofSpace* vh_;
    Kind kind_;
    std::vector<SparseMatrix> term_matrices_;
    std::array<SparseMatrix, 4> components_{};
};

}  // namespace hidemix
