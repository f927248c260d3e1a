#pragma once

#include "dmpc/models.hpp"

#include <array>
#include <limits>
#include <optional>

namespace dmpc::trajopt {

enum class TerminalMode { soft_dare, hard_equality };

struct MpcConfig {
    int horizon = 20;          // N
    double step = 1.0 / 53.0;  // T, matches the model sample rate
    Eigen::Matrix3d Q = Eigen::Vector3d(10.0, 10.0, 2.0).asDiagonal();
    Eigen::Matrix2d R = Eigen::Vector2d(0.5, 0.1).asDiagonal();
    InputBounds bounds;
    std::optional<std::array<double, 6>> state_box;  // x/y/theta min,max; validated, not enforced
    TerminalMode terminal_mode = TerminalMode::soft_dare;
    double beta = 10.0;        // terminal fallback weight: P = beta * Q
    double epsilon = 0.05;     // convergence threshold on the weighted pose error
    double tol_defect = 1e-8;
    double tol_step = 1e-8;
    int max_iterations = 60;

    void validate() const {
        if (horizon < 1) throw ConfigError("horizon must be >= 1");
        if (!(step > 0.0)) throw ConfigError("step must be > 0");
        auto diag_pd = [](const auto& M) {
            for (Eigen::Index r = 0; r < M.rows(); ++r)
                for (Eigen::Index c = 0; c < M.cols(); ++c) {
                    if (r == c && !(M(r, c) > 0.0)) return false;
                    if (r != c && M(r, c) != 0.0) return false;
                }
            return true;
        };
        if (!diag_pd(Q)) throw ConfigError("Q must be diagonal with strictly positive entries");
        if (!diag_pd(R)) throw ConfigError("R must be diagonal with strictly positive entries");
        bounds.validate();
        if (state_box) {
            const auto& b = *state_box;
            if (!(b[0] <= b[1] && b[2] <= b[3] && b[4] <= b[5]))
                throw ConfigError("state box is empty");
        }
        if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
        if (!(tol_defect > 0.0) || !(tol_step > 0.0))
            throw ConfigError("solver tolerances must be > 0");
        if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    }
};

/// One MPC solution over the horizon.
struct OptimizedHorizon {
    std::vector<State> states;  // N+1, states[0] == supplied current state
    std::vector<Input> inputs;  // N, always within bounds
    double horizon_cost = 0.0;
    bool converged = false;
    int iterations = 0;
    double defect_norm = 0.0;  // inf-norm of shooting defects at the returned iterate
    double step_norm = 0.0;    // inf-norm of the last accepted step (stationarity proxy)
};

struct TerminalCost {
    enum class Source { dare, fallback };
    Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
    Source source = Source::fallback;
};

/// Quadratic stage penalty with the angular error taken as the shortest
/// signed difference.
inline double stage_cost(const State& s, const Input& u, const State& x_ref,
                         const Eigen::Matrix3d& Q, const Eigen::Matrix2d& R) {
    const Eigen::Vector3d e = pose_error(s, x_ref);
    const Eigen::Vector2d uv = u.vec();
    return e.dot(Q * e) + uv.dot(R * uv);
}

/// Discrete-time linearization consistent with the Euler transcription:
/// A = I + T J_x, B = T J_u at (x_eq, u_eq).
template <model::DynamicsModel M>
std::pair<Eigen::Matrix3d, Matrix32> linearize_at(const M& m, const State& x_eq,
                                                  const Input& u_eq, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("step size must be > 0");
    const auto [Jx, Ju] = m.jacobians(x_eq, u_eq);
    if (!Jx.allFinite() || !Ju.allFinite())
        throw std::runtime_error("linearize_at: non-finite model Jacobians");
    return {Eigen::Matrix3d::Identity() + T * Jx, T * Ju};
}

/// Fixed-point iteration for the discrete algebraic Riccati equation,
/// started from P = Q. Divergence, a singular input-weight block, or hitting
/// the iteration cap all fall back to P = beta * Q.
inline TerminalCost solve_dare(const Eigen::Matrix3d& A, const Matrix32& B,
                               const Eigen::Matrix3d& Q, const Eigen::Matrix2d& R,
                               double beta = 10.0) {
    TerminalCost fallback{beta * Q, TerminalCost::Source::fallback};
    Eigen::Matrix3d P = Q;
    for (int it = 0; it < 10000; ++it) {
        const Eigen::Matrix2d S = R + B.transpose() * P * B;
        Eigen::LLT<Eigen::Matrix2d> llt(S);
        if (llt.info() != Eigen::Success) return fallback;
        const Eigen::Matrix<double, 2, 3> K = llt.solve(B.transpose() * P * A);
        Eigen::Matrix3d Pn =
            A.transpose() * P * A - A.transpose() * P * B * K + Q;
        Pn = 0.5 * (Pn + Pn.transpose()).eval();
        if (!Pn.allFinite() || Pn.cwiseAbs().maxCoeff() > 1e12) return fallback;
        const double delta = (Pn - P).cwiseAbs().maxCoeff();
        P = Pn;
        if (delta < 1e-10) return {P, TerminalCost::Source::dare};
    }
    return fallback;
}

/// Horizon objective: sum of stage costs plus the terminal quadratic; the
/// scalar fed into ensemble cost weighting.
inline double horizon_cost(const std::vector<State>& states, const std::vector<Input>& inputs,
                           const State& x_ref, const Eigen::Matrix3d& Q,
                           const Eigen::Matrix2d& R, const Eigen::Matrix3d& P) {
    if (states.size() != inputs.size() + 1)
        throw std::invalid_argument("horizon_cost: need N+1 states for N inputs");
    double J = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        J += stage_cost(states[k], inputs[k], x_ref, Q, R);
    const Eigen::Vector3d eN = pose_error(states.back(), x_ref);
    return J + eN.dot(P * eN);
}

/// Direct multiple-shooting transcription: N input blocks and N shooting
/// states (the initial state is pinned), linked by Euler dynamics defects.
template <model::DynamicsModel M>
struct NlpProblem {
    MpcConfig cfg;
    State x0;
    State x_ref;
    M model;
    TerminalCost terminal;

    int num_inputs() const { return cfg.horizon; }
    int num_defect_blocks() const { return cfg.horizon; }
    int num_variables() const { return 2 * cfg.horizon + 3 * cfg.horizon; }

    double objective(const std::vector<State>& states, const std::vector<Input>& inputs) const {
        return horizon_cost(states, inputs, x_ref, cfg.Q, cfg.R, terminal.P);
    }

    std::vector<Eigen::Vector3d> defects(const std::vector<State>& states,
                                         const std::vector<Input>& inputs) const {
        if (states.size() != inputs.size() + 1 ||
            static_cast<int>(inputs.size()) != cfg.horizon)
            throw std::invalid_argument("defects: horizon length mismatch");
        std::vector<Eigen::Vector3d> c(inputs.size());
        for (std::size_t k = 0; k < inputs.size(); ++k)
            c[k] = states[k + 1].vec() - states[k].vec() -
                   cfg.step * model.derivative(states[k], inputs[k]).vec();
        return c;
    }
};

template <model::DynamicsModel M>
NlpProblem<M> build_problem(const MpcConfig& cfg, const State& x0, const State& x_ref,
                            const M& m, const TerminalCost& terminal) {
    cfg.validate();
    if (!finite(x0) || !finite(x_ref)) throw ConfigError("non-finite problem states");
    if (cfg.state_box) {
        const auto& b = *cfg.state_box;
        if (x_ref.x < b[0] || x_ref.x > b[1] || x_ref.y < b[2] || x_ref.y > b[3] ||
            x_ref.theta < b[4] || x_ref.theta > b[5])
            throw ConfigError("x_ref outside the configured state box");
    }
    if (((terminal.P - terminal.P.transpose()).cwiseAbs().maxCoeff()) > 1e-10)
        throw ConfigError("terminal cost matrix must be symmetric");
    return {cfg, x0, x_ref, m, terminal};
}

namespace detail {

// Exact minimizer of 0.5 d'H d + g'd over the box [lo, hi], H 2x2 SPD, by
// active-set enumeration. clamped[i] reports whether dim i sits on a bound.
inline Eigen::Vector2d solve_box_qp2(const Eigen::Matrix2d& H, const Eigen::Vector2d& g,
                                     const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                                     std::array<bool, 2>& clamped) {
    constexpr double kTol = 1e-12;
    enum Mode { FREE = 0, LO = 1, HI = 2 };
    const bool fixed0 = hi[0] - lo[0] < 1e-15;
    const bool fixed1 = hi[1] - lo[1] < 1e-15;
    auto value_for = [&](int dim, Mode m) { return m == LO ? lo[dim] : hi[dim]; };

    // All-free first (the common case), then single-clamp, then corners.
    static constexpr std::array<std::array<Mode, 2>, 9> patterns{{{FREE, FREE},
                                                                  {LO, FREE},
                                                                  {HI, FREE},
                                                                  {FREE, LO},
                                                                  {FREE, HI},
                                                                  {LO, LO},
                                                                  {LO, HI},
                                                                  {HI, LO},
                                                                  {HI, HI}}};
    for (const auto& pat : patterns) {
        if (fixed0 && pat[0] != LO) continue;  // degenerate interval: only LO == HI valid
        if (fixed1 && pat[1] != LO) continue;
        Eigen::Vector2d d;
        if (pat[0] == FREE && pat[1] == FREE) {
            d = H.ldlt().solve(-g);
        } else if (pat[0] != FREE && pat[1] != FREE) {
            d = {value_for(0, pat[0]), value_for(1, pat[1])};
        } else {
            const int c = pat[0] != FREE ? 0 : 1;  // clamped dim
            const int f = 1 - c;
            d[c] = value_for(c, pat[c]);
            d[f] = -(g[f] + H(f, c) * d[c]) / H(f, f);
        }
        // Feasibility of free dims, optimality of clamped dims.
        bool ok = true;
        const Eigen::Vector2d grad = H * d + g;
        for (int i = 0; i < 2; ++i) {
            const bool fixed = (i == 0 ? fixed0 : fixed1);
            if (fixed) continue;
            if (pat[i] == FREE)
                ok = ok && d[i] >= lo[i] - kTol && d[i] <= hi[i] + kTol;
            else if (pat[i] == LO)
                ok = ok && grad[i] >= -kTol;
            else
                ok = ok && grad[i] <= kTol;
        }
        if (!ok) continue;
        clamped = {fixed0 || pat[0] != FREE, fixed1 || pat[1] != FREE};
        return {std::clamp(d[0], lo[0], hi[0]), std::clamp(d[1], lo[1], hi[1])};
    }
    // Numerical corner case: fall back to the projected unconstrained step.
    clamped = {true, true};
    const Eigen::Vector2d d = H.ldlt().solve(-g);
    return {std::clamp(d[0], lo[0], hi[0]), std::clamp(d[1], lo[1], hi[1])};
}

struct Iterate {
    std::vector<State> states;
    std::vector<Input> inputs;
};

template <model::DynamicsModel M>
double constraint_l1(const NlpProblem<M>& pb, const Iterate& z, double w_term_flag) {
    double c1 = 0.0;
    for (const auto& c : pb.defects(z.states, z.inputs)) c1 += c.template lpNorm<1>();
    if (w_term_flag > 0.0)
        c1 += pose_error(z.states.back(), pb.x_ref).template lpNorm<1>();
    return c1;
}

}  // namespace detail

/// Sequential quadratic programming on the multiple-shooting transcription.
/// Each iteration linearizes the dynamics, solves the resulting equality-
/// plus-box QP exactly by a Riccati backward sweep with per-stage box
/// subproblems, and globalizes with an l1-merit backtracking line search.
/// Hard terminal equality is handled by an escalating quadratic penalty.
template <model::DynamicsModel M>
OptimizedHorizon solve_mpc(const NlpProblem<M>& pb,
                           const std::optional<OptimizedHorizon>& warm_start = std::nullopt) {
    const int N = pb.cfg.horizon;
    const double T = pb.cfg.step;
    const Eigen::Matrix3d twoQ = 2.0 * pb.cfg.Q;
    const Eigen::Matrix2d twoR = 2.0 * pb.cfg.R;
    const bool hard_terminal = pb.cfg.terminal_mode == TerminalMode::hard_equality;

    // ---- initial iterate -------------------------------------------------
    detail::Iterate z;
    z.states.resize(static_cast<std::size_t>(N) + 1);
    z.inputs.resize(static_cast<std::size_t>(N));
    if (warm_start && static_cast<int>(warm_start->inputs.size()) == N &&
        warm_start->states.size() == static_cast<std::size_t>(N) + 1) {
        // Shift the previous horizon by one step, repeating the last input.
        for (int k = 0; k < N; ++k) {
            z.inputs[static_cast<std::size_t>(k)] = pb.cfg.bounds.clamp(
                warm_start->inputs[static_cast<std::size_t>(std::min(k + 1, N - 1))]);
            z.states[static_cast<std::size_t>(k)] =
                warm_start->states[static_cast<std::size_t>(k + 1)];
        }
        z.states[static_cast<std::size_t>(N)] = warm_start->states[static_cast<std::size_t>(N)];
        z.states[0] = pb.x0;
        // The horizon works with unwrapped theta; re-base the shifted tail so
        // its theta sequence is continuous with the (wrapped) plant state and
        // no spurious 2*pi defects appear when the plant crosses +-pi.
        for (int k = 1; k <= N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            z.states[ks].theta = z.states[ks - 1].theta +
                                 wrap_angle(z.states[ks].theta - z.states[ks - 1].theta);
        }
    } else {
        // Cold start: zero inputs, states from a zero-input rollout
        // (integrated without angle wrapping, like the defects).
        z.states[0] = pb.x0;
        for (int k = 0; k < N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            z.inputs[ks] = pb.cfg.bounds.clamp(Input{});
            z.states[ks + 1] = State::from_vec(
                z.states[ks].vec() +
                T * pb.model.derivative(z.states[ks], z.inputs[ks]).vec());
        }
    }

    double J = pb.objective(z.states, z.inputs);
    if (!std::isfinite(J))
        throw std::runtime_error("solve_mpc: non-finite objective at the initial iterate");

    double w_term = hard_terminal ? 1e4 : 0.0;  // quadratic penalty weight on e_N
    double reg = 0.0;                           // Levenberg-style Quu regularization
    double nu = 1.0;                            // l1 merit penalty parameter
    double c1 = detail::constraint_l1(pb, z, w_term);

    OptimizedHorizon best;
    best.states = z.states;
    best.inputs = z.inputs;
    best.horizon_cost = J;
    double best_J = J, best_c1 = c1;

    std::vector<Eigen::Matrix3d> A(static_cast<std::size_t>(N));
    std::vector<Matrix32> B(static_cast<std::size_t>(N));
    std::vector<Eigen::Vector3d> r(static_cast<std::size_t>(N));
    std::vector<Eigen::Vector2d> kff(static_cast<std::size_t>(N));
    std::vector<Eigen::Matrix<double, 2, 3>> K(static_cast<std::size_t>(N));
    std::vector<Eigen::Vector3d> dx(static_cast<std::size_t>(N) + 1);
    std::vector<Eigen::Vector2d> du(static_cast<std::size_t>(N));

    OptimizedHorizon out;
    int iter = 0;
    for (; iter < pb.cfg.max_iterations; ++iter) {
        // ---- linearize dynamics and defects at the current iterate -------
        double defect_inf = 0.0;
        for (int k = 0; k < N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const auto [Ak, Bk] = linearize_at(pb.model, z.states[ks], z.inputs[ks], T);
            A[ks] = Ak;
            B[ks] = Bk;
            const Eigen::Vector3d c = z.states[ks + 1].vec() - z.states[ks].vec() -
                                      T * pb.model.derivative(z.states[ks], z.inputs[ks]).vec();
            r[ks] = -c;  // affine term of the linearized transition for the deltas
            defect_inf = std::max(defect_inf, c.template lpNorm<Eigen::Infinity>());
        }
        const Eigen::Vector3d eN = pose_error(z.states.back(), pb.x_ref);
        const double term_inf = hard_terminal ? eN.template lpNorm<Eigen::Infinity>() : 0.0;

        // ---- backward Riccati sweep over the QP --------------------------
        bool backward_ok = false;
        while (!backward_ok) {
            backward_ok = true;
            Eigen::Matrix3d Pterm = pb.terminal.P;
            if (hard_terminal) Pterm += w_term * Eigen::Matrix3d::Identity();
            Eigen::Vector3d Vx = 2.0 * Pterm * eN;
            Eigen::Matrix3d Vxx = 2.0 * Pterm;
            double vx_max = Vx.template lpNorm<Eigen::Infinity>();
            for (int k = N - 1; k >= 0; --k) {
                const auto ks = static_cast<std::size_t>(k);
                const Eigen::Vector3d ek = pose_error(z.states[ks], pb.x_ref);
                const Eigen::Vector2d uk = z.inputs[ks].vec();
                const Eigen::Vector3d Vx_shift = Vx + Vxx * r[ks];
                const Eigen::Vector3d Qx = twoQ * ek + A[ks].transpose() * Vx_shift;
                const Eigen::Vector2d Qu = twoR * uk + B[ks].transpose() * Vx_shift;
                const Eigen::Matrix3d Qxx = twoQ + A[ks].transpose() * Vxx * A[ks];
                Eigen::Matrix2d Quu = twoR + B[ks].transpose() * Vxx * B[ks];
                Quu += reg * Eigen::Matrix2d::Identity();
                const Eigen::Matrix<double, 2, 3> Qux = B[ks].transpose() * Vxx * A[ks];
                Eigen::LLT<Eigen::Matrix2d> llt(Quu);
                if (llt.info() != Eigen::Success) {
                    reg = std::max(1e-6, reg * 10.0);
                    backward_ok = false;
                    break;
                }
                const Eigen::Vector2d lo(pb.cfg.bounds.v_min - uk[0],
                                         pb.cfg.bounds.omega_min - uk[1]);
                const Eigen::Vector2d hi(pb.cfg.bounds.v_max - uk[0],
                                         pb.cfg.bounds.omega_max - uk[1]);
                std::array<bool, 2> clamped{};
                kff[ks] = detail::solve_box_qp2(Quu, Qu, lo, hi, clamped);
                // Feedback only on free input dims; clamped rows stay zero.
                Eigen::Matrix<double, 2, 3> Kk = Eigen::Matrix<double, 2, 3>::Zero();
                if (!clamped[0] && !clamped[1]) {
                    Kk = -llt.solve(Qux);
                } else if (!clamped[0] || !clamped[1]) {
                    const int f = clamped[0] ? 1 : 0;
                    Kk.row(f) = -Qux.row(f) / Quu(f, f);
                }
                K[ks] = Kk;
                Vx = Qx + Kk.transpose() * (Quu * kff[ks] + Qu) + Qux.transpose() * kff[ks];
                Vxx = Qxx + Kk.transpose() * Quu * Kk + Kk.transpose() * Qux +
                      Qux.transpose() * Kk;
                Vxx = 0.5 * (Vxx + Vxx.transpose()).eval();
                vx_max = std::max(vx_max, Vx.template lpNorm<Eigen::Infinity>());
            }
            if (backward_ok) nu = std::max(nu, 1.1 * vx_max + 1.0);
            if (reg > 1e8) break;
        }
        if (!backward_ok) break;  // regularization exhausted; return best iterate

        // ---- roll the QP solution forward --------------------------------
        dx[0].setZero();
        double raw_step = 0.0;
        for (int k = 0; k < N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const Eigen::Vector2d lo(pb.cfg.bounds.v_min - z.inputs[ks].v,
                                     pb.cfg.bounds.omega_min - z.inputs[ks].omega);
            const Eigen::Vector2d hi(pb.cfg.bounds.v_max - z.inputs[ks].v,
                                     pb.cfg.bounds.omega_max - z.inputs[ks].omega);
            Eigen::Vector2d step_u = kff[ks] + K[ks] * dx[ks];
            du[ks] = {std::clamp(step_u[0], lo[0], hi[0]), std::clamp(step_u[1], lo[1], hi[1])};
            dx[ks + 1] = A[ks] * dx[ks] + B[ks] * du[ks] + r[ks];
            raw_step = std::max({raw_step, du[ks].template lpNorm<Eigen::Infinity>(),
                                 dx[ks + 1].template lpNorm<Eigen::Infinity>()});
        }

        const double constraint_inf = std::max(defect_inf, term_inf);
        if (constraint_inf <= pb.cfg.tol_defect && raw_step <= pb.cfg.tol_step) {
            out.converged = true;
            break;  // already optimal: keep the current iterate
        }

        // ---- l1-merit backtracking line search ---------------------------
        const double merit0 = J + nu * c1;
        bool accepted = false;
        for (double alpha = 1.0; alpha >= 1.0 / 1024.0; alpha *= 0.5) {
            detail::Iterate cand;
            cand.states = z.states;
            cand.inputs = z.inputs;
            for (int k = 0; k < N; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                cand.inputs[ks] = pb.cfg.bounds.clamp(
                    Input::from_vec(z.inputs[ks].vec() + alpha * du[ks]));
                cand.states[ks + 1] =
                    State::from_vec(z.states[ks + 1].vec() + alpha * dx[ks + 1]);
            }
            const double Jc = pb.objective(cand.states, cand.inputs);
            if (!std::isfinite(Jc)) continue;
            const double c1c = detail::constraint_l1(pb, cand, w_term);
            const double merit_c = Jc + nu * c1c;
            if (merit_c <= merit0 - 1e-8 * alpha * raw_step * raw_step) {
                z = std::move(cand);
                J = Jc;
                c1 = c1c;
                out.step_norm = alpha * raw_step;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            reg = std::max(1e-6, reg * 10.0);
            if (reg > 1e8) break;
            continue;  // re-linearize with stronger regularization
        }
        reg = std::max(0.0, reg * 0.1);
        if (reg < 1e-9) reg = 0.0;

        if (J + nu * c1 < best_J + nu * best_c1) {
            best.states = z.states;
            best.inputs = z.inputs;
            best_J = J;
            best_c1 = c1;
        }

        // Escalate the terminal penalty while the terminal equality is loose.
        if (hard_terminal &&
            pose_error(z.states.back(), pb.x_ref).template lpNorm<Eigen::Infinity>() >
                10.0 * pb.cfg.tol_defect)
            w_term = std::min(w_term * 4.0, 1e10);
    }

    // Prefer the current iterate when it is at least as good as the best seen.
    if (!(J + nu * c1 <= best_J + nu * best_c1)) {
        z.states = best.states;
        z.inputs = best.inputs;
        J = best_J;
    }

    out.states = std::move(z.states);
    out.inputs = std::move(z.inputs);
    for (auto& u : out.inputs) u = pb.cfg.bounds.clamp(u);
    out.horizon_cost = pb.objective(out.states, out.inputs);
    out.iterations = iter;
    double defect_inf = 0.0;
    for (const auto& c : pb.defects(out.states, out.inputs))
        defect_inf = std::max(defect_inf, c.template lpNorm<Eigen::Infinity>());
    out.defect_norm = defect_inf;
    if (hard_terminal)
        out.converged = out.converged &&
                        pose_error(out.states.back(), pb.x_ref)
                                .template lpNorm<Eigen::Infinity>() <= 10.0 * pb.cfg.tol_defect;
    return out;
}

}  // namespace dmpc::trajopt
