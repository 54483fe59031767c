#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "hidemix/stepper.hpp"

namespace hidemix {

struct InconclusiveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const double kPi = 3.14159265358979323846;

// A manufactured problem: exact solution, derived fields, and source. The
// second time derivative is carried analytically (it supplies div sigma =
// u_tt - f for projection data); the residual check below still validates the
// catalog entries by numerical differentiation.
struct Problem {
    std::string name;
    KernelSet kernels;
    double default_T = 1.0;
    ScalarField u0;
    VectorField grad_u0;
    ScalarField u1;
    ScalarFieldT u;
    ScalarFieldT utt;
    VectorFieldT q;
    VectorFieldT sigma;
    ScalarFieldT f;  // empty means zero
    double omega_max = kPi;
    bool is_zero = false;
};

// |u_tt - div sigma - f| / (1 + |u_tt| + |f|) at one sample, all derivatives
// by fourth-order central differences.
inline double pde_residual(const Problem& p, Vec2 x, double t) {
    const double d = std::clamp(0.02 / std::max(p.omega_max, 1.0), 1e-4, 2e-3);
    auto u_of_t = [&](double tt) { return p.u(x, tt); };
    const double utt_num = (-u_of_t(t + 2 * d) + 16.0 * u_of_t(t + d) - 30.0 * u_of_t(t) +
                            16.0 * u_of_t(t - d) - u_of_t(t - 2 * d)) /
                           (12.0 * d * d);
    auto sx = [&](double xx) { return p.sigma({xx, x.y}, t).x; };
    auto sy = [&](double yy) { return p.sigma({x.x, yy}, t).y; };
    const double dsx = (-sx(x.x + 2 * d) + 8.0 * sx(x.x + d) - 8.0 * sx(x.x - d) + sx(x.x - 2 * d)) /
                       (12.0 * d);
    const double dsy = (-sy(x.y + 2 * d) + 8.0 * sy(x.y + d) - 8.0 * sy(x.y - d) + sy(x.y - 2 * d)) /
                       (12.0 * d);
    const double fv = p.f ? p.f(x, t) : 0.0;
    const double res = utt_num - (dsx + dsy) - fv;
    return std::abs(res) / (1.0 + std::abs(utt_num) + std::abs(fv));
}

inline void residual_check(const Problem& p, int samples = 20, unsigned seed = 2024,
                           double tol = 1e-8) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ux(0.05, 0.95), ut(0.05, 1.0);
    for (int s = 0; s < samples; ++s) {
        const Vec2 x{ux(rng), ux(rng)};
        const double t = ut(rng) * p.default_T;
        if (pde_residual(p, x, t) > tol)
            throw std::logic_error("manufactured problem '" + p.name + "' fails its residual check");
    }
}

// Catalog: wave_standing, exp_memory_poly, resolvent_expo, rough_init, zero.
inline Problem manufactured_problem(const std::string& name) {
    Problem p;
    p.name = name;
    auto S = [](Vec2 x) { return std::sin(kPi * x.x) * std::sin(kPi * x.y); };
    auto gradS = [](Vec2 x) {
        return Vec2{kPi * std::cos(kPi * x.x) * std::sin(kPi * x.y),
                    kPi * std::sin(kPi * x.x) * std::cos(kPi * x.y)};
    };

    if (name == "zero") {
        p.kernels = zero_kernel();
        p.u0 = [](Vec2) { return 0.0; };
        p.grad_u0 = [](Vec2) { return Vec2{}; };
        p.u1 = [](Vec2) { return 0.0; };
        p.u = [](Vec2, double) { return 0.0; };
        p.utt = [](Vec2, double) { return 0.0; };
        p.q = [](Vec2, double) { return Vec2{}; };
        p.sigma = [](Vec2, double) { return Vec2{}; };
        p.is_zero = true;
        return p;
    }
    if (name == "wave_standing") {
        // u = sin(pi x) sin(pi y) cos(sqrt(2) pi t) solves u_tt = lap u
        const double omega = std::sqrt(2.0) * kPi;
        p.kernels = zero_kernel();
        p.omega_max = omega;
        p.u0 = S;
        p.grad_u0 = gradS;
        p.u1 = [](Vec2) { return 0.0; };
        p.u = [S, omega](Vec2 x, double t) { return S(x) * std::cos(omega * t); };
        p.utt = [S, omega](Vec2 x, double t) { return -omega * omega * S(x) * std::cos(omega * t); };
        p.q = [gradS, omega](Vec2 x, double t) { return gradS(x) * std::cos(omega * t); };
        p.sigma = p.q;
        return p;
    }
    if (name == "exp_memory_poly") {
        // u = sin sin (1 + t^2), B = e^{-(t-s)} I; then
        // sigma = grad u * (2t - 2 + 3 e^{-t}) and
        // f = sin sin [2 + 2 pi^2 (2t - 2 + 3 e^{-t})]
        p.kernels.A = identity_matrix_field();
        p.kernels.kind = KernelKind::convolution;
        p.kernels.B = [](Vec2, double t, double s) {
            return Mat2::scaled_identity(std::exp(-(t - s)));
        };
        p.kernels.terms.push_back({[](double t) { return std::exp(-t); },
                                   [](double s) { return std::exp(s); },
                                   identity_matrix_field()});
        p.kernels.spatially_constant = true;
        p.omega_max = kPi * std::sqrt(2.0);
        p.u0 = S;
        p.grad_u0 = gradS;
        p.u1 = [](Vec2) { return 0.0; };
        p.u = [S](Vec2 x, double t) { return S(x) * (1.0 + t * t); };
        p.utt = [S](Vec2 x, double) { return 2.0 * S(x); };
        p.q = [gradS](Vec2 x, double t) { return gradS(x) * (1.0 + t * t); };
        p.sigma = [gradS](Vec2 x, double t) {
            return gradS(x) * (2.0 * t - 2.0 + 3.0 * std::exp(-t));
        };
        p.f = [S](Vec2 x, double t) {
            return S(x) * (2.0 + 2.0 * kPi * kPi * (2.0 * t - 2.0 + 3.0 * std::exp(-t)));
        };
        return p;
    }
    if (name == "resolvent_expo") {
        // u = sin sin (1 + t^2), B = 0.5 A with A = I; probes the resolvent
        // path since M(t,s) = 0.5 e^{0.5 (t-s)} I in closed form
        const double c = 0.5;
        p.kernels.A = identity_matrix_field();
        p.kernels.kind = KernelKind::convolution;
        p.kernels.B = [c](Vec2, double, double) { return Mat2::scaled_identity(c); };
        p.kernels.terms.push_back({[c](double) { return c; }, [](double) { return 1.0; },
                                   identity_matrix_field()});
        p.kernels.spatially_constant = true;
        p.omega_max = kPi * std::sqrt(2.0);
        p.u0 = S;
        p.grad_u0 = gradS;
        p.u1 = [](Vec2) { return 0.0; };
        p.u = [S](Vec2 x, double t) { return S(x) * (1.0 + t * t); };
        p.utt = [S](Vec2 x, double) { return 2.0 * S(x); };
        p.q = [gradS](Vec2 x, double t) { return gradS(x) * (1.0 + t * t); };
        p.sigma = [gradS, c](Vec2 x, double t) {
            return gradS(x) * ((1.0 + t * t) - c * (t + t * t * t / 3.0));
        };
        p.f = [S, c](Vec2 x, double t) {
            return S(x) * (2.0 + 2.0 * kPi * kPi * ((1.0 + t * t) - c * (t + t * t * t / 3.0)));
        };
        return p;
    }
    if (name == "rough_init") {
        // truncated eigenexpansion with coefficients n^{-3.6}: in H^3 but not
        // H^4 (in the decay-rate sense emulated by the truncation)
        constexpr int modes = 8;
        std::vector<double> cn(modes + 1, 0.0);
        for (int n = 1; n <= modes; ++n) cn[static_cast<size_t>(n)] = std::pow(n, -3.6);
        p.kernels = zero_kernel();
        p.omega_max = std::sqrt(2.0) * kPi * modes;
        auto mode = [](int n, Vec2 x) { return std::sin(n * kPi * x.x) * std::sin(n * kPi * x.y); };
        p.u0 = [cn, mode](Vec2 x) {
            double s = 0.0;
            for (int n = 1; n <= modes; ++n) s += cn[static_cast<size_t>(n)] * mode(n, x);
            return s;
        };
        p.grad_u0 = [cn](Vec2 x) {
            Vec2 s{};
            for (int n = 1; n <= modes; ++n) {
                const double w = n * kPi;
                s += Vec2{w * std::cos(w * x.x) * std::sin(w * x.y),
                          w * std::sin(w * x.x) * std::cos(w * x.y)} *
                     cn[static_cast<size_t>(n)];
            }
            return s;
        };
        p.u1 = [](Vec2) { return 0.0; };
        p.u = [cn, mode](Vec2 x, double t) {
            double s = 0.0;
            for (int n = 1; n <= modes; ++n)
                s += cn[static_cast<size_t>(n)] * mode(n, x) * std::cos(std::sqrt(2.0) * n * kPi * t);
            return s;
        };
        p.utt = [cn, mode](Vec2 x, double t) {
            double s = 0.0;
            for (int n = 1; n <= modes; ++n) {
                const double om = std::sqrt(2.0) * n * kPi;
                s -= cn[static_cast<size_t>(n)] * mode(n, x) * om * om * std::cos(om * t);
            }
            return s;
        };
        p.q = [cn](Vec2 x, double t) {
            Vec2 s{};
            for (int n = 1; n <= modes; ++n) {
                const double w = n * kPi;
                s += Vec2{w * std::cos(w * x.x) * std::sin(w * x.y),
                          w * std::sin(w * x.x) * std::cos(w * x.y)} *
                     (cn[static_cast<size_t>(n)] * std::cos(std::sqrt(2.0) * n * kPi * t));
            }
            return s;
        };
        p.sigma = p.q;
        return p;
    }
    throw std::invalid_argument("manufactured_problem: unknown name '" + name + "'");
}

inline SchemeConfig scheme_config_for(const Problem& prob, Method method, SpacePair spaces,
                                      double k, double T) {
    SchemeConfig cfg;
    cfg.method = method;
    cfg.spaces = spaces;
    cfg.k = k;
    cfg.T = T;
    cfg.u0 = prob.u0;
    cfg.grad_u0 = prob.grad_u0;
    cfg.u1 = prob.u1;
    cfg.f = prob.f;
    cfg.kernels = prob.kernels;
    return cfg;
}

// --- Ritz-Volterra projections ------------------------------------------------

// Extended projection of the exact triple (u, q, sigma) at the time lattice.
// The stress component is the commuting interpolant (the identity the error
// analysis is built on); the flux then solves the kernel equation marched with
// the scheme's midpoint rule, and the scalar solves the saddle least-squares
// reduction of the first projection equation.
struct RitzVolterraExtended {
    std::vector<std::vector<double>> u, q, sigma;  // levels 0..N
};

inline RitzVolterraExtended ritz_volterra_project_extended(const Problem& prob, const DofSpace& wh,
                                                           const DofSpace& vh, int n_levels,
                                                           double k) {
    const KernelSet& ks = prob.kernels;
    SparseMatrix mass_v = assemble_mass_V(vh);
    SparseMatrix mass_a = assemble_mass_V(vh, ks.A);
    SparseMatrix coupling = assemble_div_coupling(wh, vh);
    MemoryOperator memop(ks, vh, MemoryOperator::Kind::B);

    // saddle [D, C^T; C, 0] for the scalar reduction, factored once
    const int n1 = wh.num_dofs(), n2 = vh.num_dofs();
    SparseLU saddle_lu([&] {
        BlockSystem sys(n1 + n2);
        sys.add_block(0, 0, mass_v, 1.0);
        sys.add_transposed_block(0, n2, coupling, 1.0);
        sys.add_block(n2, 0, coupling, 1.0);
        return sys.build();
    }());

    SparseLU a_lu(mass_a);  // kernel equation at t = 0
    std::unique_ptr<SparseLU> aq_lu;  // A - (k/2) B(t_n, t_{n-1/2}) for n >= 1
    SparseMatrix self_term;

    // separable running sums for the exact-data memory loads
    std::vector<std::vector<double>> sep_sums(ks.terms.size());

    RitzVolterraExtended out;
    for (int n = 0; n <= n_levels; ++n) {
        const double tn = n * k;
        auto sigma_n = rt_interpolate([&](Vec2 x) { return prob.sigma(x, tn); }, vh);

        // data vector: (A q, z) - (sigma, z) + (sigma_h, z) - int (B q, z)
        std::vector<double> rhs = assemble_vector_load(
            [&](Vec2 x, double) { return ks.A(x).apply(prob.q(x, tn)); }, 0.0, vh);
        {
            auto ls = assemble_vector_load([&](Vec2 x, double) { return prob.sigma(x, tn); }, 0.0, vh);
            auto ds = mass_v.multiply(sigma_n);
            for (int i = 0; i < n2; ++i)
                rhs[static_cast<size_t>(i)] += ds[static_cast<size_t>(i)] - ls[static_cast<size_t>(i)];
        }
        if (ks.has_memory() && n > 0) {
            if (!ks.terms.empty()) {
                for (size_t i = 0; i < ks.terms.size(); ++i)
                    for (int d = 0; d < n2; ++d)
                        rhs[static_cast<size_t>(d)] -=
                            ks.terms[i].a_t(tn) * sep_sums[i][static_cast<size_t>(d)];
            } else {
                for (int j = 0; j < n; ++j) {
                    const double sj = (j + 0.5) * k;
                    auto lj = assemble_vector_load(
                        [&](Vec2 x, double) { return ks.B(x, tn, sj).apply(prob.q(x, sj)); }, 0.0, vh);
                    for (int d = 0; d < n2; ++d) rhs[static_cast<size_t>(d)] -= k * lj[static_cast<size_t>(d)];
                }
            }
        }

        std::vector<double> q_n;
        if (!ks.has_memory() || n == 0) {
            q_n = a_lu.solve(rhs);
        } else {
            const bool rebuild = !aq_lu || !memop.self_term_constant();
            if (rebuild) {
                self_term = memop.self_term_matrix(tn, k);
                aq_lu = std::make_unique<SparseLU>(sparse_add(mass_a, self_term, -1.0));
            }
            // explicit memory of the projected flux: averaged snapshots up to
            // j = n-2 plus the explicit half of the j = n-1 panel
            HistoryBuffer tmp;
            tmp.k = k;
            for (int j = 0; j + 1 <= n - 1; ++j) {
                std::vector<double> half(static_cast<size_t>(n2));
                for (int d = 0; d < n2; ++d)
                    half[static_cast<size_t>(d)] = 0.5 * (out.q[static_cast<size_t>(j)][static_cast<size_t>(d)] +
                                                          out.q[static_cast<size_t>(j) + 1][static_cast<size_t>(d)]);
                tmp.push(std::move(half), ks);
            }
            auto strict = memop.history_sum(tmp, tn, n - 1);
            auto half_prev = self_term.multiply(out.q.back());
            for (int d = 0; d < n2; ++d)
                rhs[static_cast<size_t>(d)] += strict[static_cast<size_t>(d)] + half_prev[static_cast<size_t>(d)];
            q_n = aq_lu->solve(rhs);
        }

        // scalar part from the saddle reduction of (q - q_h, v) + (u - u_h, div v) = 0
        std::vector<double> top = assemble_vector_load(
            [&](Vec2 x, double) { return prob.q(x, tn); }, 0.0, vh);
        {
            auto dl = assemble_div_load([&](Vec2 x) { return prob.u(x, tn); }, vh);
            auto dq = mass_v.multiply(q_n);
            for (int i = 0; i < n2; ++i)
                top[static_cast<size_t>(i)] += dl[static_cast<size_t>(i)] - dq[static_cast<size_t>(i)];
        }
        std::vector<double> srhs(static_cast<size_t>(n1 + n2), 0.0);
        std::copy(top.begin(), top.end(), srhs.begin());
        auto sol = saddle_lu.solve(srhs);
        std::vector<double> u_n(sol.begin() + n2, sol.end());

        // update separable exact-data sums with the just-passed midpoint
        if (ks.has_memory() && !ks.terms.empty() && n < n_levels) {
            const double sj = (n + 0.5) * k;
            for (size_t i = 0; i < ks.terms.size(); ++i) {
                auto lj = assemble_vector_load(
                    [&](Vec2 x, double) { return ks.terms[i].spatial(x).apply(prob.q(x, sj)); }, 0.0,
                    vh);
                if (sep_sums[i].empty()) sep_sums[i].assign(static_cast<size_t>(n2), 0.0);
                const double w = k * ks.terms[i].b_s(sj);
                for (int d = 0; d < n2; ++d) sep_sums[i][static_cast<size_t>(d)] += w * lj[static_cast<size_t>(d)];
            }
        }

        out.sigma.push_back(std::move(sigma_n));
        out.q.push_back(std::move(q_n));
        out.u.push_back(std::move(u_n));
    }
    return out;
}

// Standard projection of (u, sigma): the coupled saddle system per level with
// the M-kernel memory marched by the same midpoint rule.
struct RitzVolterraStandard {
    std::vector<std::vector<double>> u, sigma;
};

inline RitzVolterraStandard ritz_volterra_project_standard(const Problem& prob, const DofSpace& wh,
                                                           const DofSpace& vh, int n_levels,
                                                           double k, int substeps = 2) {
    KernelSet ks = prob.kernels;  // local copy carries the resolvent tables
    if (ks.has_memory()) {
        std::vector<Vec2> pts;
        if (!ks.spatially_constant) {
            const Mesh& mesh = vh.mesh();
            for (int t = 0; t < mesh.num_triangles(); ++t)
                for (const auto& g : tri_rule_d5()) pts.push_back(mesh.from_barycentric(t, g.l0, g.l1, g.l2));
        }
        prepare_resolvent(ks, pts, std::max(n_levels, 1), k, substeps);
    }
    SparseMatrix mass_alpha = assemble_mass_V(vh, [&](Vec2 x) { return ks.alpha(x); });
    SparseMatrix coupling = assemble_div_coupling(wh, vh);
    MemoryOperator memop(ks, vh, MemoryOperator::Kind::M);

    const int n1 = wh.num_dofs(), n2 = vh.num_dofs();
    auto build_saddle = [&](const SparseMatrix* self) {
        BlockSystem sys(n1 + n2);
        sys.add_block(0, 0, mass_alpha, 1.0);
        if (self) sys.add_block(0, 0, *self, 1.0);
        sys.add_transposed_block(0, n2, coupling, 1.0);
        sys.add_block(n2, 0, coupling, 1.0);
        return sys.build();
    };
    SparseLU stationary_lu(build_saddle(nullptr));
    std::unique_ptr<SparseLU> mem_lu;
    SparseMatrix self_term;

    RitzVolterraStandard out;
    for (int n = 0; n <= n_levels; ++n) {
        const double tn = n * k;
        std::vector<double> bv = assemble_vector_load(
            [&](Vec2 x, double) { return ks.alpha(x).apply(prob.sigma(x, tn)); }, 0.0, vh);
        {
            auto dl = assemble_div_load([&](Vec2 x) { return prob.u(x, tn); }, vh);
            for (int i = 0; i < n2; ++i) bv[static_cast<size_t>(i)] += dl[static_cast<size_t>(i)];
        }
        if (ks.has_memory() && n > 0) {
            // exact-data memory: + int (M sigma, v) by the midpoint rule
            for (int j = 0; j < n; ++j) {
                const double sj = (j + 0.5) * k;
                auto lj = assemble_vector_load(
                    [&](Vec2 x, double) { return m_kernel(ks, x, tn, sj).apply(prob.sigma(x, sj)); },
                    0.0, vh);
                for (int d = 0; d < n2; ++d) bv[static_cast<size_t>(d)] += k * lj[static_cast<size_t>(d)];
            }
        }

        const SparseLU* lu = &stationary_lu;
        if (ks.has_memory() && n > 0) {
            if (!mem_lu || !memop.self_term_constant()) {
                self_term = memop.self_term_matrix(tn, k);
                mem_lu = std::make_unique<SparseLU>(build_saddle(&self_term));
            }
            lu = mem_lu.get();
            // explicit part of the projected-stress memory to the right side
            HistoryBuffer tmp;
            tmp.k = k;
            for (int j = 0; j + 1 <= n - 1; ++j) {
                std::vector<double> half(static_cast<size_t>(n2));
                for (int d = 0; d < n2; ++d)
                    half[static_cast<size_t>(d)] =
                        0.5 * (out.sigma[static_cast<size_t>(j)][static_cast<size_t>(d)] +
                               out.sigma[static_cast<size_t>(j) + 1][static_cast<size_t>(d)]);
                tmp.push(std::move(half), ks);
            }
            auto strict = memop.history_sum(tmp, tn, n - 1);
            auto half_prev = self_term.multiply(out.sigma.back());
            for (int d = 0; d < n2; ++d)
                bv[static_cast<size_t>(d)] -= strict[static_cast<size_t>(d)] + half_prev[static_cast<size_t>(d)];
        }

        std::vector<double> rhs(static_cast<size_t>(n1 + n2), 0.0);
        std::copy(bv.begin(), bv.end(), rhs.begin());
        auto bw = assemble_load(
            [&](Vec2 x, double) {
                return prob.utt(x, tn) - (prob.f ? prob.f(x, tn) : 0.0);  // div sigma
            },
            0.0, wh);
        std::copy(bw.begin(), bw.end(), rhs.begin() + n2);
        auto sol = lu->solve(rhs);
        out.sigma.emplace_back(sol.begin(), sol.begin() + n2);
        out.u.emplace_back(sol.begin() + n2, sol.end());
    }
    return out;
}

// U^0 choice u_h(0) = projected initial scalar, used by the ritz init option.
inline std::vector<double> ritz_initial_u(const Problem& prob, Method method, const DofSpace& wh,
                                          const DofSpace& vh) {
    if (method == Method::extended)
        return ritz_volterra_project_extended(prob, wh, vh, 0, 1.0).u.front();
    return ritz_volterra_project_standard(prob, wh, vh, 0, 1.0).u.front();
}

// --- convergence studies -------------------------------------------------------

struct ConvergenceLevel {
    int level = 0;
    double h = 0.0, k = 0.0;
    int dofs_w = 0, dofs_v = 0;
    double err_u_linf_l2 = 0.0;
    double err_q_l2 = std::numeric_limits<double>::quiet_NaN();
    double err_sigma_l2 = 0.0;
    double err_u_linf_linf = 0.0;
    double runtime_s = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceLevel> levels;
    std::vector<double> order_u, order_q, order_sigma;  // entry l is between levels l and l+1
    bool inconclusive = false;
    double floor_estimate = 0.0;

    std::string to_csv(bool with_runtime = false) const {
        std::string out =
            "level,h,k,dofs_W,dofs_V,err_u_LinfL2,err_q_L2,err_sigma_L2,err_u_LinfLinf,"
            "order_u,order_q,order_sigma,runtime_s\n";
        char buf[512];
        for (size_t l = 0; l < levels.size(); ++l) {
            const auto& lv = levels[l];
            auto num = [](double v) {
                char b[64];
                if (std::isnan(v)) return std::string("na");
                std::snprintf(b, sizeof b, "%.12e", v);
                return std::string(b);
            };
            auto ord = [&](const std::vector<double>& o) {
                if (l == 0 || l - 1 >= o.size() || std::isnan(o[l - 1])) return std::string("na");
                char b[64];
                std::snprintf(b, sizeof b, "%.6f", o[l - 1]);
                return std::string(b);
            };
            std::snprintf(buf, sizeof buf, "%d,%s,%s,%d,%d,%s,%s,%s,%s,%s,%s,%s,%.3f\n",
                          lv.level, num(lv.h).c_str(), num(lv.k).c_str(), lv.dofs_w, lv.dofs_v,
                          num(lv.err_u_linf_l2).c_str(), num(lv.err_q_l2).c_str(),
                          num(lv.err_sigma_l2).c_str(), num(lv.err_u_linf_linf).c_str(),
                          ord(order_u).c_str(), ord(order_q).c_str(), ord(order_sigma).c_str(),
                          with_runtime ? lv.runtime_s : 0.0);
            out += buf;
        }
        return out;
    }
};

struct StudyOptions {
    Method method = Method::extended;
    SpacePair spaces = SpacePair::rt1_dg1;
    int levels = 4;
    int nx0 = 4;            // coarsest cell count per side
    double coupling = 0.5;  // k = coupling / nx
    double T = 1.0;
    InitU init_u = InitU::l2;
    InitQ init_q = InitQ::l2;
    int workers = 1;
    int resolvent_substeps = 2;
};

namespace detail {

inline ConvergenceLevel run_one_level(const Problem& prob, const StudyOptions& opt, int lvl,
                                      int nx, double k) {
    const auto start = std::chrono::steady_clock::now();
    Mesh mesh = build_structured_mesh(nx, nx);
    SchemeConfig cfg = scheme_config_for(prob, opt.method, opt.spaces, k, opt.T);
    cfg.init_q = opt.init_q;
    cfg.resolvent_substeps = opt.resolvent_substeps;
    if (opt.init_u == InitU::ritz) {
        DofSpace wh(mesh, scalar_partner(vector_kind(opt.spaces)));
        DofSpace vh(mesh, vector_kind(opt.spaces));
        cfg.init_u = InitU::ritz;
        cfg.ritz_u0 = ritz_initial_u(prob, opt.method, wh, vh);
    }
    SchemeDriver driver(mesh, cfg);

    ConvergenceLevel out;
    out.level = lvl;
    out.h = 1.0 / nx;
    out.k = k;
    out.dofs_w = driver.scalar_space().num_dofs();
    out.dofs_v = driver.vector_space().num_dofs();

    driver.run([&](int, double t, const SchemeState& st) {
        const double el2 = l2_error_scalar([&](Vec2 x) { return prob.u(x, t); }, st.u_curr,
                                           driver.scalar_space());
        const double einf = linf_error_scalar([&](Vec2 x) { return prob.u(x, t); }, st.u_curr,
                                              driver.scalar_space());
        out.err_u_linf_l2 = std::max(out.err_u_linf_l2, el2);
        out.err_u_linf_linf = std::max(out.err_u_linf_linf, einf);
    });
    const double T = opt.T;
    out.err_sigma_l2 = l2_error_vector([&](Vec2 x) { return prob.sigma(x, T); },
                                       driver.state().z_curr, driver.vector_space());
    if (opt.method == Method::extended)
        out.err_q_l2 = l2_error_vector([&](Vec2 x) { return prob.q(x, T); }, driver.state().q_curr,
                                       driver.vector_space());
    out.runtime_s =
        std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - start)
            .count();
    return out;
}

inline std::vector<double> orders_between(const std::vector<ConvergenceLevel>& levels,
                                          double ConvergenceLevel::* field) {
    std::vector<double> out;
    for (size_t l = 0; l + 1 < levels.size(); ++l) {
        const double ec = levels[l].*field, ef = levels[l + 1].*field;
        if (std::isnan(ec) || std::isnan(ef) || std::min(ec, ef) < 1e-11)
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        else
            out.push_back(std::log2(ec / ef));
    }
    return out;
}

}  // namespace detail

// Refinement ladder nx0, 2 nx0, ... with k = coupling * h; errors measured at
// every time level against the exact solution, orders between adjacent levels.
inline ConvergenceReport convergence_study(const Problem& prob, const StudyOptions& opt) {
    if (opt.levels < 3)
        throw std::invalid_argument("convergence_study: at least 3 refinement levels required");
    ConvergenceReport rep;
    rep.levels.resize(static_cast<size_t>(opt.levels));

    const int workers = std::max(1, std::min(opt.workers, opt.levels));
    std::atomic<int> next{0};
    auto body = [&] {
        for (;;) {
            const int lvl = next.fetch_add(1);
            if (lvl >= opt.levels) return;
            const int nx = opt.nx0 << lvl;
            const double k = opt.coupling / nx;
            rep.levels[static_cast<size_t>(lvl)] = detail::run_one_level(prob, opt, lvl, nx, k);
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& th : pool) th.join();
    }

    rep.order_u = detail::orders_between(rep.levels, &ConvergenceLevel::err_u_linf_l2);
    rep.order_q = detail::orders_between(rep.levels, &ConvergenceLevel::err_q_l2);
    rep.order_sigma = detail::orders_between(rep.levels, &ConvergenceLevel::err_sigma_l2);
    return rep;
}

struct TemporalOptions {
    Method method = Method::extended;
    SpacePair spaces = SpacePair::rt1_dg1;
    int nx = 64;
    std::vector<double> k_values;  // coarse to fine
    double T = 1.0;
    int workers = 1;
    int resolvent_substeps = 2;
};

// k-refinement at fixed h. The spatial error floor is estimated by a Richardson
// split of the two finest runs plus one reference run at k_min/2; orders are
// reported only between consecutive levels sitting at least 10x above the
// floor, and the study is flagged inconclusive when fewer than two levels do.
inline ConvergenceReport temporal_order_study(const Problem& prob, const TemporalOptions& opt) {
    if (opt.k_values.size() < 2)
        throw std::invalid_argument("temporal_order_study: at least 2 time-step levels required");
    std::vector<double> ks = opt.k_values;
    std::sort(ks.begin(), ks.end(), std::greater<>());

    StudyOptions level_opt;
    level_opt.method = opt.method;
    level_opt.spaces = opt.spaces;
    level_opt.T = opt.T;
    level_opt.resolvent_substeps = opt.resolvent_substeps;

    ConvergenceReport rep;
    rep.levels.resize(ks.size());
    ConvergenceLevel ref_level;

    const int total = static_cast<int>(ks.size()) + 1;
    std::atomic<int> next{0};
    auto body = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= total) return;
            const double k = (i < static_cast<int>(ks.size())) ? ks[static_cast<size_t>(i)]
                                                               : ks.back() / 2.0;
            auto lv = detail::run_one_level(prob, level_opt, i, opt.nx, k);
            lv.level = i;
            if (i < static_cast<int>(ks.size()))
                rep.levels[static_cast<size_t>(i)] = lv;
            else
                ref_level = lv;
        }
    };
    const int workers = std::max(1, std::min(opt.workers, total));
    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& th : pool) th.join();
    }

    // Richardson split: err(k) ~ floor + c k^2
    const double e_min = rep.levels.back().err_u_linf_l2;
    const double e_ref = ref_level.err_u_linf_l2;
    rep.floor_estimate = std::max(0.0, e_ref - (e_min - e_ref) / 3.0);

    std::vector<bool> usable(ks.size());
    int n_usable = 0;
    for (size_t i = 0; i < ks.size(); ++i) {
        usable[i] = rep.levels[i].err_u_linf_l2 >= 10.0 * rep.floor_estimate;
        if (usable[i]) ++n_usable;
    }
    rep.order_u.assign(ks.size() - 1, std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i + 1 < ks.size(); ++i)
        if (usable[i] && usable[i + 1])
            rep.order_u[i] = std::log2(rep.levels[i].err_u_linf_l2 / rep.levels[i + 1].err_u_linf_l2) /
                             std::log2(ks[i] / ks[i + 1]);
    bool any_order = false;
    for (double o : rep.order_u)
        if (!std::isnan(o)) any_order = true;
    rep.inconclusive = (n_usable < 2) || !any_order;
    return rep;
}

}  // namespace hidemix
