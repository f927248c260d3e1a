#pragma once

#include "dmpc/csv_io.hpp"
#include "dmpc/ensemble.hpp"

#include <chrono>
#include <fstream>

namespace dmpc::runner {

struct Scenario {
    std::string name;
    State initial;
    State x_ref;
    double epsilon = 0.05;  // threshold on the weighted pose norm
    int max_steps = 1500;
    plant::DisturbanceModel disturbance{0.02, 0.02, 0};

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("scenario epsilon must be > 0");
        if (max_steps < 1) throw ConfigError("scenario max_steps must be >= 1");
        if (!finite(initial) || !finite(x_ref)) throw ConfigError("non-finite scenario poses");
        disturbance.validate();
    }
};

/// Built-in experiments: `nav` drives [0,0,0] -> [1m, 2m, pi/4]; `park`
/// drives [0,0,0] -> [0m, 1m, 0].
inline Scenario make_scenario(const std::string& name) {
    Scenario sc;
    sc.name = name;
    if (name == "nav") {
        sc.x_ref = {1.0, 2.0, M_PI / 4.0};
    } else if (name == "park") {
        sc.x_ref = {0.0, 1.0, 0.0};
    } else {
        throw ConfigError("unknown scenario '" + name + "'; available: nav, park");
    }
    return sc;
}

enum class ControllerKind { dropout_mpc, vanilla_mpc, oracle_model_mpc };

inline ControllerKind parse_controller(const std::string& s) {
    if (s == "dropout") return ControllerKind::dropout_mpc;
    if (s == "vanilla") return ControllerKind::vanilla_mpc;
    if (s == "oracle") return ControllerKind::oracle_model_mpc;
    throw ConfigError("unknown controller '" + s + "'; available: dropout, vanilla, oracle");
}

inline const char* controller_name(ControllerKind k) {
    switch (k) {
        case ControllerKind::dropout_mpc: return "dropout";
        case ControllerKind::vanilla_mpc: return "vanilla";
        default: return "oracle";
    }
}

/// Convergence distance: positions in meters, angle error wrapped and scaled
/// so a rad counts half a meter.
inline double weighted_pose_norm(const State& s, const State& ref) {
    const Eigen::Vector3d e = pose_error(s, ref);
    return std::sqrt(e[0] * e[0] + e[1] * e[1] + 0.25 * e[2] * e[2]);
}

struct StepRecord {
    double t = 0.0;
    State state;  // true state the decision was computed from
    Input u_nn, u_ensemble, u_final;
    std::vector<double> weights;
    Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
    double horizon_cost = 0.0;
    double solve_ms = 0.0;
};

struct RunLog {
    std::string scenario_name;
    std::string controller;
    double step = 1.0 / 53.0;  // control period, equals the MPC step
    std::vector<StepRecord> records;
    bool reached = false;
    int steps_used = 0;
    State final_state;
    std::vector<std::string> warnings;
};

namespace detail {

template <model::DynamicsModel M>
trajopt::TerminalCost terminal_for(const M& m, const State& x_ref,
                                   const trajopt::MpcConfig& cfg) {
    const auto [A, B] = trajopt::linearize_at(m, x_ref, Input{}, cfg.step);
    return trajopt::solve_dare(A, B, cfg.Q, cfg.R, cfg.beta);
}

}  // namespace detail

/// Closed-loop simulation: at each step the controller sees the true state,
/// its input drives the disturbed plant for one period, and the decision is
/// logged. Stops when the weighted pose error falls to epsilon or the step
/// cap is hit. Warm starts (per member for the ensemble) thread between
/// steps; plant noise and controller randomness use separate streams of the
/// run seed.
inline RunLog run_closed_loop(const Scenario& scenario, ControllerKind kind,
                              const net::ModelParams* params,
                              const trajopt::MpcConfig& mpc_cfg,
                              const ensemble::EnsembleConfig& ens_cfg, std::uint64_t seed) {
    scenario.validate();
    mpc_cfg.validate();
    const bool needs_model = kind != ControllerKind::oracle_model_mpc;
    if (needs_model && params == nullptr)
        throw ConfigError("neural controllers require a trained model");
    if (needs_model) params->validate();

    RunLog log;
    log.scenario_name = scenario.name;
    log.controller = controller_name(kind);
    log.step = mpc_cfg.step;

    State x = scenario.initial;
    x.theta = wrap_angle(x.theta);

    std::mt19937_64 plant_rng(mix_seed(seed, 101));
    std::mt19937_64 ctrl_rng(mix_seed(seed, 202));
    std::normal_distribution<double> gauss(0.0, 1.0);

    const model::UnicycleModel oracle_model;
    trajopt::TerminalCost term;
    if (kind == ControllerKind::oracle_model_mpc)
        term = detail::terminal_for(oracle_model, scenario.x_ref, mpc_cfg);
    else
        term = detail::terminal_for(model::NetModel{params, nullptr}, scenario.x_ref, mpc_cfg);

    ensemble::WarmStarts warm;
    warm.members.resize(static_cast<std::size_t>(ens_cfg.members));

    for (int step = 0;; ++step) {
        if (weighted_pose_norm(x, scenario.x_ref) <= scenario.epsilon) {
            log.reached = true;
            break;
        }
        if (step >= scenario.max_steps) break;

        StepRecord rec;
        rec.t = step * mpc_cfg.step;
        rec.state = x;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (kind) {
                case ControllerKind::dropout_mpc: {
                    auto dec = ensemble::dropout_mpc_step(x, scenario.x_ref, *params, mpc_cfg,
                                                          ens_cfg, warm, ctrl_rng, &term);
                    rec.u_nn = dec.u_nn;
                    rec.u_ensemble = dec.u_ensemble;
                    rec.u_final = dec.u_final;
                    rec.weights = dec.weights;
                    rec.sigma = dec.sigma;
                    rec.horizon_cost = dec.full_horizon.horizon_cost;
                    warm.full = std::move(dec.full_horizon);
                    for (std::size_t i = 0; i < dec.member_horizons.size(); ++i)
                        warm.members[i] = std::move(dec.member_horizons[i]);
                    for (auto& w : dec.warnings) log.warnings.push_back(std::move(w));
                    break;
                }
                case ControllerKind::vanilla_mpc: {
                    const model::NetModel full{params, nullptr};
                    auto sol = trajopt::solve_mpc(
                        trajopt::build_problem(mpc_cfg, x, scenario.x_ref, full, term),
                        warm.full);
                    rec.u_nn = rec.u_ensemble = rec.u_final = sol.inputs.front();
                    rec.horizon_cost = sol.horizon_cost;
                    warm.full = std::move(sol);
                    break;
                }
                case ControllerKind::oracle_model_mpc: {
                    auto sol = trajopt::solve_mpc(
                        trajopt::build_problem(mpc_cfg, x, scenario.x_ref, oracle_model, term),
                        warm.full);
                    rec.u_nn = rec.u_ensemble = rec.u_final = sol.inputs.front();
                    rec.horizon_cost = sol.horizon_cost;
                    warm.full = std::move(sol);
                    break;
                }
            }
        } catch (const std::exception& e) {
            log.warnings.push_back("controller failed at step " + std::to_string(step) + ": " +
                                   e.what());
            break;
        }
        const auto t1 = std::chrono::steady_clock::now();
        rec.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        log.records.push_back(std::move(rec));

        Input eff = log.records.back().u_final;
        if (scenario.disturbance.sigma_v > 0.0)
            eff.v += scenario.disturbance.sigma_v * gauss(plant_rng);
        if (scenario.disturbance.sigma_omega > 0.0)
            eff.omega += scenario.disturbance.sigma_omega * gauss(plant_rng);
        x = plant::step_euler(plant::true_derivative, x, eff, mpc_cfg.step);
    }

    log.final_state = x;
    log.steps_used = static_cast<int>(log.records.size());
    return log;
}

struct Metrics {
    int steps_to_converge = 0;
    bool reached = false;
    double path_length = 0.0;
    double control_effort = 0.0;  // sum of ||u||^2 * T
    double mean_sigma = 0.0;      // mean over steps of ||sigma||
    double max_sigma = 0.0;
    double mean_solve_ms = 0.0;
};

inline Metrics metrics(const RunLog& log) {
    if (log.records.empty()) throw std::invalid_argument("metrics: empty run log");
    Metrics m;
    m.steps_to_converge = log.steps_used;
    m.reached = log.reached;
    for (std::size_t k = 0; k < log.records.size(); ++k) {
        const State& a = log.records[k].state;
        const State& b =
            k + 1 < log.records.size() ? log.records[k + 1].state : log.final_state;
        m.path_length = m.path_length + std::hypot(b.x - a.x, b.y - a.y);
        const Eigen::Vector2d u = log.records[k].u_final.vec();
        m.control_effort += u.squaredNorm() * log.step;
        const double sn = log.records[k].sigma.norm();
        m.mean_sigma += sn;
        m.max_sigma = std::max(m.max_sigma, sn);
        m.mean_solve_ms += log.records[k].solve_ms;
    }
    const double n = static_cast<double>(log.records.size());
    m.mean_sigma /= n;
    m.mean_solve_ms /= n;
    return m;
}

struct ComparisonRow {
    std::string metric;
    double a = 0.0;
    double b = 0.0;
    double delta_pct = 0.0;  // |a-b| relative to the larger magnitude
};

struct Comparison {
    std::string scenario;
    std::string controller_a, controller_b;
    std::vector<ComparisonRow> rows;
};

inline Comparison compare(const RunLog& a, const RunLog& b) {
    if (a.scenario_name != b.scenario_name)
        throw std::invalid_argument("compare: runs are from different scenarios");
    const Metrics ma = metrics(a), mb = metrics(b);
    Comparison cmp;
    cmp.scenario = a.scenario_name;
    cmp.controller_a = a.controller;
    cmp.controller_b = b.controller;
    auto row = [&cmp](const char* name, double va, double vb) {
        const double denom = std::max(std::abs(va), std::abs(vb));
        cmp.rows.push_back({name, va, vb, denom > 0.0 ? 100.0 * std::abs(va - vb) / denom : 0.0});
    };
    row("steps_to_converge", ma.steps_to_converge, mb.steps_to_converge);
    row("path_length", ma.path_length, mb.path_length);
    row("control_effort", ma.control_effort, mb.control_effort);
    row("mean_sigma", ma.mean_sigma, mb.mean_sigma);
    row("max_sigma", ma.max_sigma, mb.max_sigma);
    row("mean_solve_ms", ma.mean_solve_ms, mb.mean_solve_ms);
    return cmp;
}

inline constexpr const char* kRunLogHeader =
    "t,x,y,theta,v_nn,omega_nn,v_ens,omega_ens,v_final,omega_final,"
    "sigma_x,sigma_y,sigma_theta,cost,solve_ms";

/// CSV of the per-step records plus a human-readable sidecar summary at
/// `<path>.summary.txt`.
inline void save_run_log(const RunLog& log, const std::string& path) {
    {
        std::ofstream f(path);
        if (!f) throw IoError("cannot open run log for writing: " + path);
        using dmpc::detail::fmt17;
        f << kRunLogHeader << '\n';
        for (const StepRecord& r : log.records) {
            f << fmt17(r.t) << ',' << fmt17(r.state.x) << ',' << fmt17(r.state.y) << ','
              << fmt17(r.state.theta) << ',' << fmt17(r.u_nn.v) << ',' << fmt17(r.u_nn.omega)
              << ',' << fmt17(r.u_ensemble.v) << ',' << fmt17(r.u_ensemble.omega) << ','
              << fmt17(r.u_final.v) << ',' << fmt17(r.u_final.omega) << ','
              << fmt17(r.sigma[0]) << ',' << fmt17(r.sigma[1]) << ',' << fmt17(r.sigma[2])
              << ',' << fmt17(r.horizon_cost) << ',' << fmt17(r.solve_ms) << '\n';
        }
        f.flush();
        if (!f) throw IoError("failed while writing run log: " + path);
    }
    std::ofstream s(path + ".summary.txt");
    if (!s) throw IoError("cannot open run summary for writing: " + path + ".summary.txt");
    s << "scenario: " << log.scenario_name << '\n';
    s << "controller: " << log.controller << '\n';
    s << "reached: " << (log.reached ? "true" : "false") << '\n';
    s << "steps_used: " << log.steps_used << '\n';
    s << "final_state: " << log.final_state.x << ' ' << log.final_state.y << ' '
      << log.final_state.theta << '\n';
    if (!log.records.empty()) {
        const Metrics m = metrics(log);
        s << "path_length: " << m.path_length << '\n';
        s << "control_effort: " << m.control_effort << '\n';
        s << "mean_sigma: " << m.mean_sigma << '\n';
        s << "max_sigma: " << m.max_sigma << '\n';
        s << "mean_solve_ms: " << m.mean_solve_ms << '\n';
    }
    for (const auto& w : log.warnings) s << "warning: " << w << '\n';
    if (!s) throw IoError("failed while writing run summary");
}

}  // namespace dmpc::runner
