#pragma once

#include "dmpc/runner.hpp"

#include <json.hpp>

#include <fstream>

namespace dmpc::config {

/// Everything the CLI can be told through one JSON file. Every field has a
/// working default; the file may set any subset. Unknown keys are rejected
/// so typos fail loudly instead of silently using a default.
struct Config {
    std::uint64_t seed = 0;
    plant::DataGenConfig data;
    net::TrainConfig train;
    int hidden_dim = 30;
    trajopt::MpcConfig mpc;
    ensemble::EnsembleConfig ens;
    double scenario_epsilon = 0.05;
    int scenario_max_steps = 1500;
    plant::DisturbanceModel scenario_disturbance{0.02, 0.02, 0};
    std::string dataset_path = "dataset.csv";
    std::string model_path = "model.txt";
    std::string loss_history_path = "loss_history.csv";
    std::string run_log_path = "run_log.csv";

    void validate() const {
        data.validate();
        train.validate();
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
        mpc.validate();
        ens.validate();
        if (!(scenario_epsilon > 0.0)) throw ConfigError("scenario epsilon must be > 0");
        if (scenario_max_steps < 1) throw ConfigError("scenario max_steps must be >= 1");
        scenario_disturbance.validate();
    }

    runner::Scenario scenario(const std::string& name) const {
        runner::Scenario sc = runner::make_scenario(name);
        sc.epsilon = scenario_epsilon;
        sc.max_steps = scenario_max_steps;
        sc.disturbance = scenario_disturbance;
        return sc;
    }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

template <class T>
void get_to(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

inline void parse_bounds(const json& j, InputBounds& b, const std::string& where) {
    reject_unknown(j, {"v_min", "v_max", "omega_min", "omega_max"}, where);
    get_to(j, "v_min", b.v_min);
    get_to(j, "v_max", b.v_max);
    get_to(j, "omega_min", b.omega_min);
    get_to(j, "omega_max", b.omega_max);
}

}  // namespace detail

inline Config parse_config(const nlohmann::json& j) {
    using detail::get_to;
    Config c;
    detail::reject_unknown(
        j, {"seed", "data", "train", "mpc", "ensemble", "scenario", "paths"}, "config root");
    get_to(j, "seed", c.seed);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown(d,
                               {"sample_rate_hz", "n_random_walk_runs", "n_scripted_runs",
                                "run_duration_s", "sigma_v", "sigma_omega", "bounds"},
                               "data");
        get_to(d, "sample_rate_hz", c.data.sample_rate_hz);
        get_to(d, "n_random_walk_runs", c.data.n_random_walk_runs);
        get_to(d, "n_scripted_runs", c.data.n_scripted_runs);
        get_to(d, "run_duration_s", c.data.run_duration_s);
        get_to(d, "sigma_v", c.data.disturbance.sigma_v);
        get_to(d, "sigma_omega", c.data.disturbance.sigma_omega);
        if (d.contains("bounds")) detail::parse_bounds(d.at("bounds"), c.data.bounds, "data.bounds");
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t,
                               {"epochs", "batch_size", "learning_rate", "train_fraction",
                                "dropout_rate", "hidden_dim"},
                               "train");
        get_to(t, "epochs", c.train.epochs);
        get_to(t, "batch_size", c.train.batch_size);
        get_to(t, "learning_rate", c.train.learning_rate);
        get_to(t, "train_fraction", c.train.train_fraction);
        get_to(t, "dropout_rate", c.train.dropout_rate);
        get_to(t, "hidden_dim", c.hidden_dim);
    }
    if (j.contains("mpc")) {
        const auto& m = j.at("mpc");
        detail::reject_unknown(m,
                               {"horizon", "step", "q_diag", "r_diag", "bounds", "state_box",
                                "terminal_mode", "beta", "epsilon", "tol_defect", "tol_step",
                                "max_iterations"},
                               "mpc");
        get_to(m, "horizon", c.mpc.horizon);
        get_to(m, "step", c.mpc.step);
        if (m.contains("q_diag")) {
            std::array<double, 3> q{};
            get_to(m, "q_diag", q);
            c.mpc.Q = Eigen::Vector3d(q[0], q[1], q[2]).asDiagonal();
        }
        if (m.contains("r_diag")) {
            std::array<double, 2> r{};
            get_to(m, "r_diag", r);
            c.mpc.R = Eigen::Vector2d(r[0], r[1]).asDiagonal();
        }
        if (m.contains("bounds")) detail::parse_bounds(m.at("bounds"), c.mpc.bounds, "mpc.bounds");
        if (m.contains("state_box")) {
            std::array<double, 6> box{};
            get_to(m, "state_box", box);
            c.mpc.state_box = box;
        }
        if (m.contains("terminal_mode")) {
            std::string mode;
            get_to(m, "terminal_mode", mode);
            if (mode == "soft_dare")
                c.mpc.terminal_mode = trajopt::TerminalMode::soft_dare;
            else if (mode == "hard_equality")
                c.mpc.terminal_mode = trajopt::TerminalMode::hard_equality;
            else
                throw ConfigError("config: terminal_mode must be soft_dare or hard_equality");
        }
        get_to(m, "beta", c.mpc.beta);
        get_to(m, "epsilon", c.mpc.epsilon);
        get_to(m, "tol_defect", c.mpc.tol_defect);
        get_to(m, "tol_step", c.mpc.tol_step);
        get_to(m, "max_iterations", c.mpc.max_iterations);
    }
    if (j.contains("ensemble")) {
        const auto& e = j.at("ensemble");
        detail::reject_unknown(e, {"members", "dropout_rate", "kappa", "lambda", "xi"},
                               "ensemble");
        get_to(e, "members", c.ens.members);
        get_to(e, "dropout_rate", c.ens.dropout_rate);
        get_to(e, "kappa", c.ens.kappa);
        get_to(e, "lambda", c.ens.lambda);
        get_to(e, "xi", c.ens.xi);
    }
    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        detail::reject_unknown(s, {"epsilon", "max_steps", "sigma_v", "sigma_omega"},
                               "scenario");
        get_to(s, "epsilon", c.scenario_epsilon);
        get_to(s, "max_steps", c.scenario_max_steps);
        get_to(s, "sigma_v", c.scenario_disturbance.sigma_v);
        get_to(s, "sigma_omega", c.scenario_disturbance.sigma_omega);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        detail::reject_unknown(p, {"dataset", "model", "loss_history", "run_log"}, "paths");
        get_to(p, "dataset", c.dataset_path);
        get_to(p, "model", c.model_path);
        get_to(p, "loss_history", c.loss_history_path);
        get_to(p, "run_log", c.run_log_path);
    }
    c.validate();
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("config parse error in " + path + ": " + e.what());
    }
    return parse_config(j);
}

}  // namespace dmpc::config
