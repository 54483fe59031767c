#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hidemix/assembly.hpp"
#include "hidemix/linsolve.hpp"
#include "hidemix/projection.hpp"
#include "hidemix/volterra.hpp"

namespace hidemix {

struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, int at_step) : std::runtime_error(what), step(at_step) {}
    int step;
};

enum class Method { extended, standard };
enum class SpacePair { rt0_dg0, rt1_dg1 };
enum class InitU { l2, ritz };
enum class InitQ { l2, fortin };

inline SpaceKind vector_kind(SpacePair p) {
    return p == SpacePair::rt0_dg0 ? SpaceKind::RT0 : SpaceKind::RT1;
}

struct SchemeConfig {
    Method method = Method::extended;
    SpacePair spaces = SpacePair::rt1_dg1;
    double k = 0.1;
    double T = 1.0;
    InitU init_u = InitU::l2;
    InitQ init_q = InitQ::l2;
    ScalarField u0;
    VectorField grad_u0;
    ScalarField u1;
    ScalarFieldT f;  // optional manufactured source; empty means zero
    KernelSet kernels;
    std::vector<double> snapshot_times;
    int resolvent_substeps = 2;
    // precomputed U^0 dofs for the ritz initialization (supplied by the caller)
    std::optional<std::vector<double>> ritz_u0;
    // testing hook: poison the state after completing this step (0 = off)
    int inject_nonfinite_step = 0;

    int num_steps() const {
        const double n = T / k;
        const int ni = static_cast<int>(std::lround(n));
        if (ni < 1 || std::abs(n - ni) > 1e-9)
            throw std::invalid_argument("SchemeConfig: k must divide T to an integer step count");
        return ni;
    }
};

struct SchemeState {
    int n = 0;
    std::vector<double> u_prev, u_curr;
    std::vector<double> q_curr;  // extended method only
    std::vector<double> z_prev, z_curr;
    HistoryBuffer history;       // Q^{j+1/2} or Z^{j+1/2}
};

// Fully discrete time stepping for both mixed formulations. Level-(n+1)
// unknowns are solved from one coupled sparse system per step; half-level
// quantities are averages of level values. The memory self-term is implicit:
// its coefficient matrix is folded into the step matrix and the strictly-past
// midpoint sum goes to the right-hand side.
class SchemeDriver {
  public:
    using LevelCallback = std::function<void(int n, double t, const SchemeState&)>;

    SchemeDriver(const Mesh& mesh, SchemeConfig cfg)
        : mesh_(&mesh),
          cfg_(std::move(cfg)),
          wh_(mesh, scalar_partner(vector_kind(cfg_.spaces))),
          vh_(mesh, vector_kind(cfg_.spaces)) {
        n_steps_ = cfg_.num_steps();
        if (cfg_.k > mesh.h_max)
            warnings_.push_back("time step k exceeds the mesh size h; accuracy may degrade");
        check_kernel_set(cfg_.kernels, mesh);

        mass_w_ = assemble_mass_W(wh_);
        mass_v_ = assemble_mass_V(vh_);
        coupling_ = assemble_div_coupling(wh_, vh_);
        if (cfg_.method == Method::extended) {
            mass_a_ = assemble_mass_V(vh_, cfg_.kernels.A);
            memop_ = std::make_unique<MemoryOperator>(cfg_.kernels, vh_, MemoryOperator::Kind::B);
        } else {
            mass_alpha_ = assemble_mass_V(vh_, [this](Vec2 x) { return cfg_.kernels.alpha(x); });
            if (cfg_.kernels.has_memory()) {
                std::vector<Vec2> pts;
                if (!cfg_.kernels.spatially_constant) pts = element_quad_points(mesh);
                prepare_resolvent(cfg_.kernels, pts, n_steps_, cfg_.k, cfg_.resolvent_substeps);
            }
            memop_ = std::make_unique<MemoryOperator>(cfg_.kernels, vh_, MemoryOperator::Kind::M);
        }
        lu_mass_v_ = std::make_unique<SparseLU>(mass_v_);
        initialize_state();
    }

    const DofSpace& scalar_space() const { return wh_; }
    const DofSpace& vector_space() const { return vh_; }
    const SchemeState& state() const { return state_; }
    const SparseMatrix& mass_w() const { return mass_w_; }
    const SparseMatrix& mass_a() const { return mass_a_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    double time_step() const { return cfg_.k; }
    int num_steps() const { return n_steps_; }

    // March to T; the callback fires at every completed level including n = 0.
    void run(const LevelCallback& cb = {}) {
        if (cb) cb(0, 0.0, state_);
        for (int n = 0; n < n_steps_; ++n) {
            advance();
            if (cb) cb(state_.n, state_.n * cfg_.k, state_);
        }
    }

    // One step: startup when n = 0, the interior scheme otherwise.
    void advance() {
        const int n = state_.n;
        const double k = cfg_.k;
        const double t_next = (n + 1) * k;
        const bool startup = (n == 0);

        ensure_factorization(startup, t_next);

        const int n1 = wh_.num_dofs();
        const int n2 = vh_.num_dofs();
        const bool extended = cfg_.method == Method::extended;
        std::vector<double> rhs(static_cast<size_t>(extended ? n1 + 2 * n2 : n1 + n2), 0.0);

        // scalar row block
        {
            std::span<double> ru(rhs.data(), static_cast<size_t>(n1));
            if (startup) {
                auto lu1 = assemble_load([this](Vec2 x, double) { return cfg_.u1(x); }, 0.0, wh_);
                auto mu0 = mass_w_.multiply(state_.u_curr);
                auto cz0 = coupling_.multiply(state_.z_curr);
                for (int i = 0; i < n1; ++i)
                    ru[static_cast<size_t>(i)] = (2.0 / k) * lu1[static_cast<size_t>(i)] +
                                                 (2.0 / (k * k)) * mu0[static_cast<size_t>(i)] +
                                                 0.5 * cz0[static_cast<size_t>(i)];
                if (cfg_.f) {
                    auto f0 = load_at(0), f1 = load_at(1);
                    for (int i = 0; i < n1; ++i)
                        ru[static_cast<size_t>(i)] += 0.5 * (f0[static_cast<size_t>(i)] + f1[static_cast<size_t>(i)]);
                }
            } else {
                std::vector<double> ucomb(static_cast<size_t>(n1));
                for (int i = 0; i < n1; ++i)
                    ucomb[static_cast<size_t>(i)] = 2.0 * state_.u_curr[static_cast<size_t>(i)] -
                                                    state_.u_prev[static_cast<size_t>(i)];
                auto mu = mass_w_.multiply(ucomb);
                std::vector<double> zcomb(static_cast<size_t>(n2));
                for (int i = 0; i < n2; ++i)
                    zcomb[static_cast<size_t>(i)] = 2.0 * state_.z_curr[static_cast<size_t>(i)] +
                                                    state_.z_prev[static_cast<size_t>(i)];
                auto cz = coupling_.multiply(zcomb);
                for (int i = 0; i < n1; ++i)
                    ru[static_cast<size_t>(i)] = mu[static_cast<size_t>(i)] / (k * k) +
                                                 0.25 * cz[static_cast<size_t>(i)];
                if (cfg_.f) {
                    auto fm = load_at(n - 1), f0 = load_at(n), fp = load_at(n + 1);
                    for (int i = 0; i < n1; ++i)
                        ru[static_cast<size_t>(i)] += 0.25 * (fp[static_cast<size_t>(i)] +
                                                              2.0 * f0[static_cast<size_t>(i)] +
                                                              fm[static_cast<size_t>(i)]);
                }
            }
        }

        if (extended) {
            // flux row: D q^{n+1} + C^T u^{n+1} = -(D q^n + C^T u^n)
            {
                auto dq = mass_v_.multiply(state_.q_curr);
                coupling_.add_transpose_multiply(state_.u_curr, 1.0,
                                                 std::span<double>(dq.data(), dq.size()));
                for (int i = 0; i < n2; ++i) rhs[static_cast<size_t>(n1 + i)] = -dq[static_cast<size_t>(i)];
            }
            // stress row: D z^{n+1} + (S_self - A) q^{n+1}
            //           = (A - S_self) q^n - D z^n - hist(t_{n+1}) - hist(t_n)
            {
                auto aq = mass_a_.multiply(state_.q_curr);
                auto sq = self_term_.multiply(state_.q_curr);
                auto dz = mass_v_.multiply(state_.z_curr);
                for (int i = 0; i < n2; ++i)
                    rhs[static_cast<size_t>(n1 + n2 + i)] =
                        aq[static_cast<size_t>(i)] - sq[static_cast<size_t>(i)] - dz[static_cast<size_t>(i)];
                if (cfg_.kernels.has_memory() && n > 0) {
                    auto h1 = memop_->history_sum(state_.history, t_next, n);
                    auto h0 = memop_->history_sum(state_.history, n * k, n);
                    for (int i = 0; i < n2; ++i)
                        rhs[static_cast<size_t>(n1 + n2 + i)] -=
                            h1[static_cast<size_t>(i)] + h0[static_cast<size_t>(i)];
                }
            }
        } else {
            // stress row: (A_alpha + S_self) z^{n+1} + C^T u^{n+1}
            //           = -(A_alpha + S_self) z^n - C^T u^n - hist(t_{n+1}) - hist(t_n)
            auto az = mass_alpha_.multiply(state_.z_curr);
            auto sz = self_term_.multiply(state_.z_curr);
            std::vector<double> ctu(static_cast<size_t>(n2), 0.0);
            coupling_.add_transpose_multiply(state_.u_curr, 1.0,
                                             std::span<double>(ctu.data(), ctu.size()));
            for (int i = 0; i < n2; ++i)
                rhs[static_cast<size_t>(n1 + i)] =
                    -az[static_cast<size_t>(i)] - sz[static_cast<size_t>(i)] - ctu[static_cast<size_t>(i)];
            if (cfg_.kernels.has_memory() && n > 0) {
                auto h1 = memop_->history_sum(state_.history, t_next, n);
                auto h0 = memop_->history_sum(state_.history, n * k, n);
                for (int i = 0; i < n2; ++i)
                    rhs[static_cast<size_t>(n1 + i)] -=
                        h1[static_cast<size_t>(i)] + h0[static_cast<size_t>(i)];
            }
        }

        const SparseLU& lu = startup ? *startup_lu_ : *step_lu_;
        std::vector<double> x = lu.solve(rhs);

        std::vector<double> u_next(x.begin(), x.begin() + n1);
        std::vector<double> q_next, z_next;
        if (extended) {
            q_next.assign(x.begin() + n1, x.begin() + n1 + n2);
            z_next.assign(x.begin() + n1 + n2, x.end());
        } else {
            z_next.assign(x.begin() + n1, x.end());
        }

        if (cfg_.inject_nonfinite_step == n + 1)
            u_next[0] = std::numeric_limits<double>::quiet_NaN();
        for (double v : u_next)
            if (!std::isfinite(v)) throw DivergenceError("non-finite scalar state at step " +
                                                          std::to_string(n + 1), n + 1);
        for (double v : z_next)
            if (!std::isfinite(v)) throw DivergenceError("non-finite stress state at step " +
                                                          std::to_string(n + 1), n + 1);

        // record the half-level snapshot entering future memory sums
        if (extended) {
            std::vector<double> half(static_cast<size_t>(n2));
            for (int i = 0; i < n2; ++i)
                half[static_cast<size_t>(i)] = 0.5 * (state_.q_curr[static_cast<size_t>(i)] +
                                                      q_next[static_cast<size_t>(i)]);
            state_.history.push(std::move(half), cfg_.kernels);
        } else {
            std::vector<double> half(static_cast<size_t>(n2));
            for (int i = 0; i < n2; ++i)
                half[static_cast<size_t>(i)] = 0.5 * (state_.z_curr[static_cast<size_t>(i)] +
                                                      z_next[static_cast<size_t>(i)]);
            state_.history.push(std::move(half), cfg_.kernels);
        }

        state_.u_prev = std::move(state_.u_curr);
        state_.u_curr = std::move(u_next);
        state_.z_prev = std::move(state_.z_curr);
        state_.z_curr = std::move(z_next);
        if (extended) state_.q_curr = std::move(q_next);
        state_.n = n + 1;
    }

  private:
    void initialize_state() {
        state_.n = 0;
        if (cfg_.init_u == InitU::l2) {
            state_.u_curr = l2_project_scalar(cfg_.u0, wh_);
        } else {
            if (!cfg_.ritz_u0)
                throw std::invalid_argument("SchemeConfig: ritz initialization requires ritz_u0 dofs");
            if (static_cast<int>(cfg_.ritz_u0->size()) != wh_.num_dofs())
                throw std::invalid_argument("SchemeConfig: ritz_u0 has the wrong dof count");
            state_.u_curr = *cfg_.ritz_u0;
        }
        state_.u_prev = state_.u_curr;  // placeholder; unused before step 1 completes
        state_.history.k = cfg_.k;

        if (cfg_.method == Method::extended) {
            state_.q_curr = (cfg_.init_q == InitQ::l2) ? l2_project_vector(cfg_.grad_u0, vh_)
                                                       : rt_interpolate(cfg_.grad_u0, vh_);
            // Z^0 from the stress equation at t = 0: (Z^0, z) = (A Q^0, z)
            state_.z_curr = lu_mass_v_->solve(mass_a_.multiply(state_.q_curr));
        } else {
            // Z^0 = P_h(A grad u0)
            auto az = [this](Vec2 x) { return cfg_.kernels.A(x).apply(cfg_.grad_u0(x)); };
            state_.z_curr = l2_project_vector(az, vh_);
        }
        state_.z_prev = state_.z_curr;
    }

    void ensure_factorization(bool startup, double t_next) {
        const bool need_self = cfg_.kernels.has_memory();
        if (!self_built_ || (need_self && !memop_->self_term_constant())) {
            self_term_ = need_self ? memop_->self_term_matrix(t_next, cfg_.k)
                                   : SparseMatrix{vh_.num_dofs(), vh_.num_dofs(),
                                                  std::vector<int>(static_cast<size_t>(vh_.num_dofs()) + 1, 0),
                                                  {}, {}};
            self_built_ = true;
            step_lu_.reset();
            startup_lu_.reset();
        }
        if (startup && !startup_lu_) startup_lu_ = std::make_unique<SparseLU>(build_matrix(true));
        if (!startup && !step_lu_) step_lu_ = std::make_unique<SparseLU>(build_matrix(false));
    }

    SparseMatrix build_matrix(bool startup) const {
        const int n1 = wh_.num_dofs();
        const int n2 = vh_.num_dofs();
        const double k = cfg_.k;
        const bool extended = cfg_.method == Method::extended;
        BlockSystem sys(extended ? n1 + 2 * n2 : n1 + n2);

        const double mscale = startup ? 2.0 / (k * k) : 1.0 / (k * k);
        const double cscale = startup ? -0.5 : -0.25;
        sys.add_block(0, 0, mass_w_, mscale);
        sys.add_block(0, extended ? n1 + n2 : n1, coupling_, cscale);

        if (extended) {
            sys.add_transposed_block(n1, 0, coupling_, 1.0);
            sys.add_block(n1, n1, mass_v_, 1.0);
            sys.add_block(n1 + n2, n1, mass_a_, -1.0);
            if (cfg_.kernels.has_memory()) sys.add_block(n1 + n2, n1, self_term_, 1.0);
            sys.add_block(n1 + n2, n1 + n2, mass_v_, 1.0);
        } else {
            sys.add_transposed_block(n1, 0, coupling_, 1.0);
            sys.add_block(n1, n1, mass_alpha_, 1.0);
            if (cfg_.kernels.has_memory()) sys.add_block(n1, n1, self_term_, 1.0);
        }
        return sys.build();
    }

    std::vector<double> load_at(int level) {
        while (!load_cache_.empty() && load_cache_.front().first < level - 1) load_cache_.pop_front();
        for (auto& [lvl, vec] : load_cache_)
            if (lvl == level) return vec;
        auto vec = assemble_load(cfg_.f, level * cfg_.k, wh_);
        load_cache_.emplace_back(level, vec);
        return vec;
    }

    static std::vector<Vec2> element_quad_points(const Mesh& mesh) {
        std::vector<Vec2> pts;
        pts.reserve(static_cast<size_t>(mesh.num_triangles()) * tri_rule_d5().size());
        for (int t = 0; t < mesh.num_triangles(); ++t)
            for (const auto& g : tri_rule_d5()) pts.push_back(mesh.from_barycentric(t, g.l0, g.l1, g.l2));
        return pts;
    }

    const Mesh* mesh_;
    SchemeConfig cfg_;
    DofSpace wh_, vh_;
    int n_steps_ = 0;
    std::vector<std::string> warnings_;

    SparseMatrix mass_w_, mass_v_, mass_a_, mass_alpha_, coupling_, self_term_;
    bool self_built_ = false;
    std::unique_ptr<MemoryOperator> memop_;
    std::unique_ptr<SparseLU> lu_mass_v_, startup_lu_, step_lu_;
    std::deque<std::pair<int, std::vector<double>>> load_cache_;

    SchemeState state_;
};

// Trajectory capture at the lattice levels nearest the requested times.
struct Snapshot {
    double t = 0.0;
    std::vector<double> u, q, z;  // q empty for the standard method
};

inline std::vector<Snapshot> run_scheme(const Mesh& mesh, const SchemeConfig& cfg) {
    SchemeDriver driver(mesh, cfg);
    const int n_steps = driver.num_steps();
    std::vector<int> capture_levels;
    capture_levels.reserve(cfg.snapshot_times.size());
    for (double t : cfg.snapshot_times) {
        int lvl = static_cast<int>(std::lround(t / cfg.k));
        lvl = std::max(0, std::min(n_steps, lvl));
        capture_levels.push_back(lvl);
    }
    std::vector<Snapshot> out(capture_levels.size());
    driver.run([&](int n, double t, const SchemeState& st) {
        for (size_t i = 0; i < capture_levels.size(); ++i) {
            if (capture_levels[i] != n) continue;
            out[i].t = t;
            out[i].u = st.u_curr;
            out[i].q = st.q_curr;
            out[i].z = st.z_curr;
        }
    });
    return out;
}

}  // namespace hidemix
