// Acceptance suite: runs every verification criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero on any failure.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <vector>

#include "hidemix/verify.hpp"

using namespace hidemix;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

double last_order(const std::vector<double>& orders) {
    return orders.empty() ? std::numeric_limits<double>::quiet_NaN() : orders.back();
}

// dense assembly oracle, independent of the sparse path
std::vector<std::vector<double>> dense_mass_oracle(const DofSpace& vh, const MatrixField& coeff) {
    const Mesh& m = vh.mesh();
    const int n = vh.num_dofs();
    std::vector<std::vector<double>> out(static_cast<size_t>(n),
                                         std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int t = 0; t < m.num_triangles(); ++t) {
        const double area = m.tri_area(t);
        for (const auto& g : tri_rule_d5()) {
            const Vec2 x = m.from_barycentric(t, g.l0, g.l1, g.l2);
            auto b = vh.eval_vector_basis_at(t, x);
            const Mat2 kmat = coeff(x);
            for (int i = 0; i < b.n; ++i)
                for (int j = 0; j < b.n; ++j)
                    out[static_cast<size_t>(vh.global_dof(t, i))][static_cast<size_t>(vh.global_dof(t, j))] +=
                        area * g.w * kmat.apply(b.value[static_cast<size_t>(j)]).dot(b.value[static_cast<size_t>(i)]);
        }
    }
    return out;
}

// dense Gaussian elimination oracle
std::vector<double> dense_solve_oracle(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a[static_cast<size_t>(i)][static_cast<size_t>(k)]) >
                std::abs(a[static_cast<size_t>(piv)][static_cast<size_t>(k)]))
                piv = i;
        std::swap(a[static_cast<size_t>(k)], a[static_cast<size_t>(piv)]);
        std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(piv)]);
        for (int i = k + 1; i < n; ++i) {
            const double f = a[static_cast<size_t>(i)][static_cast<size_t>(k)] /
                             a[static_cast<size_t>(k)][static_cast<size_t>(k)];
            if (f == 0.0) continue;
            for (int j = k; j < n; ++j)
                a[static_cast<size_t>(i)][static_cast<size_t>(j)] -= f * a[static_cast<size_t>(k)][static_cast<size_t>(j)];
            b[static_cast<size_t>(i)] -= f * b[static_cast<size_t>(k)];
        }
    }
    std::vector<double> x(static_cast<size_t>(n), 0.0);
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<size_t>(i)];
        for (int j = i + 1; j < n; ++j)
            s -= a[static_cast<size_t>(i)][static_cast<size_t>(j)] * x[static_cast<size_t>(j)];
        x[static_cast<size_t>(i)] = s / a[static_cast<size_t>(i)][static_cast<size_t>(i)];
    }
    return x;
}

}  // namespace

int main() {
    using clock = std::chrono::steady_clock;

    // ---- criteria 1, 2, 9, 12: refinement ladders --------------------------
    StudyOptions ladder;
    ladder.levels = 4;
    ladder.nx0 = 4;
    ladder.coupling = 0.5;
    ladder.T = 1.0;

    const auto t0 = clock::now();
    Problem wave = manufactured_problem("wave_standing");
    Problem expmem = manufactured_problem("exp_memory_poly");

    ladder.spaces = SpacePair::rt1_dg1;
    ConvergenceReport wave_rt1 = convergence_study(wave, ladder);
    ConvergenceReport expmem_rt1 = convergence_study(expmem, ladder);
    const double elapsed_c1 =
        std::chrono::duration_cast<std::chrono::duration<double>>(clock::now() - t0).count();

    {
        const double o1 = last_order(wave_rt1.order_u);
        const double o2 = last_order(expmem_rt1.order_u);
        const bool pass = in_band(o1, 1.8, 2.2) && in_band(o2, 1.8, 2.2) && elapsed_c1 < 180.0;
        report(1, pass,
               fmt("spatial L\xE2\x88\x9E(L2) orders of u on RT1/DG1, h=1/4..1/32, k=h/2: "
                   "wave_standing %.3f, exp_memory_poly %.3f (band [1.8,2.2]); runtime %.1fs < 180s",
                   o1, o2, elapsed_c1));
    }

    ladder.spaces = SpacePair::rt0_dg0;
    ConvergenceReport wave_rt0 = convergence_study(wave, ladder);
    ConvergenceReport expmem_rt0 = convergence_study(expmem, ladder);
    {
        const double q1 = last_order(wave_rt1.order_q), s1 = last_order(wave_rt1.order_sigma);
        const double q1m = last_order(expmem_rt1.order_q), s1m = last_order(expmem_rt1.order_sigma);
        const double q0 = last_order(wave_rt0.order_q), s0 = last_order(wave_rt0.order_sigma);
        const double q0m = last_order(expmem_rt0.order_q), s0m = last_order(expmem_rt0.order_sigma);
        const bool rt1_ok = in_band(q1, 1.8, 2.2) && in_band(s1, 1.8, 2.2) &&
                            in_band(q1m, 1.8, 2.2) && in_band(s1m, 1.8, 2.2);
        const bool rt0_ok = in_band(q0, 0.8, 1.2) && in_band(s0, 0.8, 1.2) &&
                            in_band(q0m, 0.8, 1.2) && in_band(s0m, 0.8, 1.2);
        report(2, rt1_ok && rt0_ok,
               fmt("flux/stress orders: RT1 q %.3f/%.3f sigma %.3f/%.3f (band [1.8,2.2]); "
                   "RT0 q %.3f/%.3f sigma %.3f/%.3f (band [0.8,1.2])",
                   q1, q1m, s1, s1m, q0, q0m, s0, s0m));
    }

    // ---- criterion 3: temporal order at fixed h = 1/64 ---------------------
    {
        TemporalOptions topt;
        topt.nx = 64;
        topt.k_values = {1.0 / 4, 1.0 / 8, 1.0 / 16};
        topt.T = 1.0;
        topt.spaces = SpacePair::rt1_dg1;
        ConvergenceReport rep = temporal_order_study(wave, topt);
        const double order = last_order(rep.order_u);
        const bool pass = !rep.inconclusive && in_band(order, 1.7, 2.2);
        report(3, pass,
               fmt("temporal order at h=1/64, k=1/4..1/16: %.3f (band [1.7,2.2], floor %.2e%s)",
                   order, rep.floor_estimate, rep.inconclusive ? ", INCONCLUSIVE" : ""));
    }

    // ---- criterion 4: midpoint quadrature error and Peano form -------------
    {
        const int n = 10;
        const double k = 0.1;
        const double e_sq = quadrature_error([](double s) { return s * s; }, n, k);
        const double expected = -n * k * k * k / 12.0;
        const bool sq_ok = std::abs(e_sq - expected) <= 1e-12 * std::abs(expected);

        bool ratio_ok = true;
        double r_sin = 0.0, r_exp = 0.0;
        {
            const double t_end = 1.6;
            const double e1 = quadrature_error([](double s) { return std::sin(s); }, 8, t_end / 8);
            const double e2 = quadrature_error([](double s) { return std::sin(s); }, 16, t_end / 16);
            r_sin = std::abs(e1 / e2);
            const double f1 = quadrature_error([](double s) { return std::exp(s); }, 8, t_end / 8);
            const double f2 = quadrature_error([](double s) { return std::exp(s); }, 16, t_end / 16);
            r_exp = std::abs(f1 / f2);
            ratio_ok = in_band(r_sin, 3.6, 4.4) && in_band(r_exp, 3.6, 4.4);
        }
        const double direct = quadrature_error([](double s) { return std::sin(s); }, 8, 0.1);
        const double peano = peano_error([](double s) { return -std::sin(s); }, 8, 0.1);
        const bool peano_ok = std::abs(direct - peano) <= 1e-10;
        report(4, sq_ok && ratio_ok && peano_ok,
               fmt("quadrature: E(s^2) err %.2e (rel tol 1e-12); halving ratios sin %.3f exp %.3f "
                   "(band [3.6,4.4]); |peano - direct| = %.2e (tol 1e-10)",
                   std::abs(e_sq - expected), r_sin, r_exp, std::abs(direct - peano)));
    }

    // ---- criterion 5: resolvent accuracy for B = 0.5 A ----------------------
    {
        const double c = 0.5;
        KernelSet ks;
        ks.kind = KernelKind::convolution;
        ks.B = [c](Vec2, double, double) { return Mat2::scaled_identity(c); };
        ks.spatially_constant = true;
        auto max_err = [&](int pts) {
            auto tab = resolvent_table(ks, {0.0, 0.0}, pts, 1.0 / pts, 1);
            double worst = 0.0;
            for (int m = 1; m <= pts; ++m)
                for (int j = 0; j < m; ++j) {
                    const double dt = (m - j - 0.5) / pts;
                    worst = std::max(
                        worst, (tab.at(m, j) - Mat2::scaled_identity(c * std::exp(c * dt))).max_abs());
                }
            return worst;
        };
        const double e32 = max_err(32);
        const double e64 = max_err(64);
        const double ratio = e32 / e64;
        const bool pass = e32 <= 1e-4 && in_band(ratio, 3.6, 4.4);
        report(5, pass,
               fmt("resolvent vs 0.5 e^{0.5(t-s)}: max err %.3e at 32 points (tol 1e-4), "
                   "halving ratio %.3f (band [3.6,4.4])",
                   e32, ratio));
    }

    // ---- criterion 6: projection identities ---------------------------------
    {
        bool commuting_ok = true;
        double worst_res = 0.0;
        Mesh mesh = build_structured_mesh(4, 4);
        for (SpaceKind vk : {SpaceKind::RT0, SpaceKind::RT1}) {
            DofSpace vh(mesh, vk);
            DofSpace wh(mesh, scalar_partner(vk));
            SparseMatrix c = assemble_div_coupling(wh, vh);
            std::mt19937 rng(20240601);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            for (int trial = 0; trial < 20; ++trial) {
                std::array<double, 6> a{}, b{};
                for (auto& v : a) v = u(rng);
                for (auto& v : b) v = u(rng);
                auto g = [&](Vec2 p) {
                    return Vec2{a[0] * p.x * p.x + a[1] * p.x * p.y + a[2] * p.y * p.y +
                                    a[3] * p.x + a[4] * p.y + a[5],
                                b[0] * p.x * p.x + b[1] * p.x * p.y + b[2] * p.y * p.y +
                                    b[3] * p.x + b[4] * p.y + b[5]};
                };
                auto div_g = [&](Vec2 p, double) {
                    return 2.0 * a[0] * p.x + a[1] * p.y + a[3] + b[1] * p.x + 2.0 * b[2] * p.y + b[4];
                };
                auto coeffs = rt_interpolate(g, vh);
                auto lhs = c.multiply(coeffs);
                auto rhs = assemble_load(div_g, 0.0, wh);
                for (size_t i = 0; i < lhs.size(); ++i)
                    worst_res = std::max(worst_res, std::abs(lhs[i] - rhs[i]));
            }
        }
        commuting_ok = worst_res <= 1e-10;

        // idempotence of P_h and Pi_h via a second projection of the projected field
        DofSpace dg1(mesh, SpaceKind::DG1), rt1(mesh, SpaceKind::RT1);
        auto f = [](Vec2 x) { return std::sin(kPi * x.x) * std::cos(kPi * x.y); };
        auto cf = l2_project_scalar(f, dg1);
        // evaluate the projected field element-wise (piecewise polynomial)
        double idem_p = 0.0;
        {
            std::vector<double> cf2(cf.size(), 0.0);
            const Mesh& m = dg1.mesh();
            for (int t = 0; t < m.num_triangles(); ++t) {
                // project element-locally: identical quadrature, so dof-exact
                std::array<std::array<double, 3>, 3> mass{};
                std::array<double, 3> rhs{};
                for (const auto& g : tri_rule_d5()) {
                    const auto bas = dg1.eval_scalar_basis(t, g.l0, g.l1, g.l2);
                    const double fv = dg1.eval_scalar(cf, t, g.l0, g.l1, g.l2);
                    for (int i = 0; i < 3; ++i) {
                        rhs[static_cast<size_t>(i)] += g.w * fv * bas.value[static_cast<size_t>(i)];
                        for (int j = 0; j < 3; ++j)
                            mass[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                                g.w * bas.value[static_cast<size_t>(i)] * bas.value[static_cast<size_t>(j)];
                    }
                }
                auto inv = hidemix::detail::invert_small<3>(mass);
                for (int i = 0; i < 3; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < 3; ++j)
                        s += inv[static_cast<size_t>(i)][static_cast<size_t>(j)] * rhs[static_cast<size_t>(j)];
                    cf2[static_cast<size_t>(dg1.global_dof(t, i))] = s;
                }
            }
            for (size_t i = 0; i < cf.size(); ++i) idem_p = std::max(idem_p, std::abs(cf[i] - cf2[i]));
        }
        double idem_pi = 0.0;
        {
            auto g = [](Vec2 x) { return Vec2{std::sin(x.x + x.y), std::cos(x.x - x.y)}; };
            auto cg = rt_interpolate(g, rt1);
            auto cg2 = rt_interpolate(
                [&](Vec2 x) {
                    // the interpolant is single-valued in its own dofs: evaluate on
                    // the containing element via normal-trace continuity
                    const Mesh& m = rt1.mesh();
                    for (int t = 0; t < m.num_triangles(); ++t) {
                        const auto& tri = m.triangles[static_cast<size_t>(t)];
                        const Vec2 p0 = m.vertex(tri[0]), p1 = m.vertex(tri[1]), p2 = m.vertex(tri[2]);
                        const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
                        const double l1 = ((x.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (x.y - p0.y)) / det;
                        const double l2 = ((p1.x - p0.x) * (x.y - p0.y) - (x.x - p0.x) * (p1.y - p0.y)) / det;
                        if (l1 >= -1e-12 && l2 >= -1e-12 && 1.0 - l1 - l2 >= -1e-12)
                            return rt1.eval_vector(cg, t, x);
                    }
                    return rt1.eval_vector(cg, 0, x);
                },
                rt1);
            for (size_t i = 0; i < cg.size(); ++i) idem_pi = std::max(idem_pi, std::abs(cg[i] - cg2[i]));
        }
        const bool pass = commuting_ok && idem_p <= 1e-12 && idem_pi <= 1e-12;
        report(6, pass,
               fmt("commuting residual %.2e (tol 1e-10, 20 random deg-2 fields); idempotence "
                   "P_h %.2e, Pi_h %.2e (tol 1e-12)",
                   worst_res, idem_p, idem_pi));
    }

    // ---- criterion 7: Ritz-Volterra projection rates ------------------------
    {
        const double T = 0.5;
        std::array<double, 3> eu{};
        for (int lvl = 0; lvl < 3; ++lvl) {
            const int nx = 4 << lvl;
            Mesh mesh = build_structured_mesh(nx, nx);
            DofSpace wh(mesh, SpaceKind::DG1), vh(mesh, SpaceKind::RT1);
            const double k = 1.0 / nx;
            const int n = static_cast<int>(std::lround(T / k));
            auto proj = ritz_volterra_project_extended(expmem, wh, vh, n, k);
            eu[static_cast<size_t>(lvl)] =
                l2_error_scalar([&](Vec2 x) { return expmem.u(x, T); }, proj.u.back(), wh);
        }
        const double order = std::log2(eu[1] / eu[2]);

        // B = 0 reduction: the projected stress equals the commuting interpolant
        double ident = 0.0;
        {
            Mesh mesh = build_structured_mesh(8, 8);
            DofSpace wh(mesh, SpaceKind::DG1), vh(mesh, SpaceKind::RT1);
            const double k = 0.25;
            auto proj = ritz_volterra_project_extended(wave, wh, vh, 2, k);
            for (int lvl = 0; lvl <= 2; ++lvl) {
                auto pi = rt_interpolate([&](Vec2 x) { return wave.sigma(x, lvl * k); }, vh);
                for (size_t i = 0; i < pi.size(); ++i)
                    ident = std::max(ident,
                                     std::abs(proj.sigma[static_cast<size_t>(lvl)][i] - pi[i]));
            }
        }
        const bool pass = in_band(order, 1.8, 2.2) && ident <= 1e-10;
        report(7, pass,
               fmt("Ritz-Volterra: eta_u order %.3f on RT1/DG1 (band [1.8,2.2]); B=0 stress vs "
                   "interpolant %.2e (tol 1e-10)",
                   order, ident));
    }

    // ---- criterion 8: extended vs standard cross-check ----------------------
    {
        std::array<double, 3> diff{};
        for (int lvl = 0; lvl < 3; ++lvl) {
            const int nx = 4 << lvl;
            Mesh mesh = build_structured_mesh(nx, nx);
            const double k = 0.5 / nx;
            SchemeConfig ce = scheme_config_for(expmem, Method::extended, SpacePair::rt1_dg1, k, 0.5);
            SchemeConfig cs = scheme_config_for(expmem, Method::standard, SpacePair::rt1_dg1, k, 0.5);
            SchemeDriver de(mesh, ce), ds(mesh, cs);
            de.run();
            ds.run();
            DofSpace wh(mesh, SpaceKind::DG1);
            std::vector<double> d(de.state().u_curr.size());
            for (size_t i = 0; i < d.size(); ++i) d[i] = de.state().u_curr[i] - ds.state().u_curr[i];
            diff[static_cast<size_t>(lvl)] =
                l2_error_scalar([](Vec2) { return 0.0; }, d, wh);
        }
        const double order = std::log2(diff[1] / diff[2]);

        double b0_diff = 0.0;
        {
            Mesh mesh = build_structured_mesh(8, 8);
            SchemeConfig ce = scheme_config_for(wave, Method::extended, SpacePair::rt1_dg1, 1.0 / 16, 0.5);
            SchemeConfig cs = scheme_config_for(wave, Method::standard, SpacePair::rt1_dg1, 1.0 / 16, 0.5);
            SchemeDriver de(mesh, ce), ds(mesh, cs);
            de.run();
            ds.run();
            for (size_t i = 0; i < de.state().u_curr.size(); ++i)
                b0_diff = std::max(b0_diff, std::abs(de.state().u_curr[i] - ds.state().u_curr[i]));
            for (size_t i = 0; i < de.state().z_curr.size(); ++i)
                b0_diff = std::max(b0_diff, std::abs(de.state().z_curr[i] - ds.state().z_curr[i]));
        }
        const bool pass = order >= 1.8 && b0_diff <= 1e-10;
        report(8, pass,
               fmt("method cross-check on exp_memory_poly: final-U difference order %.3f "
                   "(>= 2 with the +-0.2 order band); B=0 trajectory difference %.2e (tol 1e-10)",
                   order, b0_diff));
    }

    // ---- criterion 9: max-norm convergence -----------------------------------
    {
        const auto& lv = wave_rt1.levels;
        const double order = std::log2(lv[lv.size() - 2].err_u_linf_linf /
                                       lv[lv.size() - 1].err_u_linf_linf);
        const bool pass = order >= 1.7;
        report(9, pass,
               fmt("L\xE2\x88\x9E(L\xE2\x88\x9E) order on wave_standing: %.3f (>= 1.7)", order));
    }

    // ---- criterion 10: minimal-smoothness probe -------------------------------
    {
        Problem rough = manufactured_problem("rough_init");
        StudyOptions opt;
        opt.levels = 3;
        opt.nx0 = 8;
        opt.coupling = 0.5;
        opt.T = 1.0;
        opt.spaces = SpacePair::rt1_dg1;
        ConvergenceReport rep = convergence_study(rough, opt);
        const double order = last_order(rep.order_u);
        const bool pass = order >= 1.6;
        report(10, pass, fmt("rough-initial-data order: %.3f (>= 1.6)", order));
    }

    // ---- criterion 11: oracle equivalence --------------------------------------
    {
        double worst_asm = 0.0;
        Mesh mesh = build_structured_mesh(2, 2);  // 8 triangles
        auto coeff = [](Vec2 x) {
            return Mat2{1.0 + 0.25 * x.x, 0.1 * x.y, 0.1 * x.y, 1.0 + 0.25 * x.y};
        };
        for (SpaceKind vk : {SpaceKind::RT0, SpaceKind::RT1}) {
            DofSpace vh(mesh, vk);
            SparseMatrix s = assemble_mass_V(vh, coeff);
            auto d = dense_mass_oracle(vh, coeff);
            for (int i = 0; i < s.rows; ++i)
                for (int j = 0; j < s.cols; ++j)
                    worst_asm = std::max(worst_asm,
                                         std::abs(s.entry(i, j) -
                                                  d[static_cast<size_t>(i)][static_cast<size_t>(j)]));
        }

        const int n = 50;
        std::mt19937 rng(777);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<std::vector<double>> a(static_cast<size_t>(n),
                                           std::vector<double>(static_cast<size_t>(n), 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                const double v = u(rng);
                a[static_cast<size_t>(i)][static_cast<size_t>(j)] = v;
                a[static_cast<size_t>(j)][static_cast<size_t>(i)] = v;
            }
        for (int i = 0; i < n; ++i) a[static_cast<size_t>(i)][static_cast<size_t>(i)] += n;
        std::vector<double> b(static_cast<size_t>(n));
        for (auto& v : b) v = u(rng);
        TripletBuilder tb(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) tb.add(i, j, a[static_cast<size_t>(i)][static_cast<size_t>(j)]);
        SparseLU lu(tb.build());
        auto xs = lu.solve(b);
        auto xd = dense_solve_oracle(a, b);
        double worst_lu = 0.0;
        for (int i = 0; i < n; ++i)
            worst_lu = std::max(worst_lu, std::abs(xs[static_cast<size_t>(i)] - xd[static_cast<size_t>(i)]));

        const bool pass = worst_asm <= 1e-13 && worst_lu <= 1e-10;
        report(11, pass,
               fmt("oracles: sparse-vs-dense assembly %.2e (tol 1e-13); sparse-vs-dense LU %.2e "
                   "(tol 1e-10)",
                   worst_asm, worst_lu));
    }

    // ---- criterion 12: determinism across worker counts -------------------------
    {
        StudyOptions opt = ladder;
        opt.spaces = SpacePair::rt1_dg1;
        opt.workers = 4;
        ConvergenceReport again = convergence_study(wave, opt);
        const bool pass = wave_rt1.to_csv() == again.to_csv();
        report(12, pass, "criterion-1 report CSV is byte-identical for workers 1 and 4");
    }

    std::printf("%d/12 criteria passed\n", 12 - failures);
    return failures == 0 ? 0 : 1;
}
