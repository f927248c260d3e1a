#pragma once

#include "dmpc/core.hpp"

#include <random>
#include <utility>

namespace dmpc::plant {

/// Zero-mean Gaussian noise added to the effective commanded velocities at
/// every simulation step.
struct DisturbanceModel {
    double sigma_v = 0.0;
    double sigma_omega = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (sigma_v < 0.0 || sigma_omega < 0.0)
            throw ConfigError("disturbance sigmas must be >= 0");
    }
};

struct Trajectory {
    std::vector<State> states;  // inputs.size() + 1 entries
    std::vector<Input> inputs;
};

struct DataGenConfig {
    double sample_rate_hz = 53.0;
    int n_random_walk_runs = 14;
    int n_scripted_runs = 8;
    double run_duration_s = 37.42;
    InputBounds bounds;
    DisturbanceModel disturbance{0.02, 0.02, 0};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be > 0");
        if (n_random_walk_runs < 0 || n_scripted_runs < 0)
            throw ConfigError("run counts must be >= 0");
        if (!(run_duration_s > 0.0)) throw ConfigError("run_duration_s must be > 0");
        bounds.validate();
        disturbance.validate();
    }
};

/// Deterministic part of the ground-truth dynamics: differential-drive
/// kinematics (xdot, ydot, thetadot) = (v cos(theta), v sin(theta), omega).
inline StateDerivative true_derivative(const State& s, const Input& u) {
    if (!finite(s) || !finite(u)) throw std::invalid_argument("non-finite plant state/input");
    return {u.v * std::cos(s.theta), u.v * std::sin(s.theta), u.omega};
}

/// One forward-Euler step of an arbitrary derivative function; theta is
/// re-wrapped to (-pi, pi] afterwards.
template <class F>
State step_euler(F&& f, const State& s, const Input& u, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("step size must be > 0");
    const Eigen::Vector3d next = s.vec() + T * f(s, u).vec();
    State out = State::from_vec(next);
    out.theta = wrap_angle(out.theta);
    return out;
}

/// One classical fourth-order Runge-Kutta step with the input held constant.
/// Intermediate stages are not wrapped (the unicycle derivative is periodic
/// in theta); only the returned state is.
template <class F>
State step_rk4(F&& f, const State& s, const Input& u, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("step size must be > 0");
    const Eigen::Vector3d x0 = s.vec();
    const Eigen::Vector3d k1 = f(s, u).vec();
    const Eigen::Vector3d k2 = f(State::from_vec(x0 + 0.5 * T * k1), u).vec();
    const Eigen::Vector3d k3 = f(State::from_vec(x0 + 0.5 * T * k2), u).vec();
    const Eigen::Vector3d k4 = f(State::from_vec(x0 + T * k3), u).vec();
    State out = State::from_vec(x0 + (T / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    out.theta = wrap_angle(out.theta);
    return out;
}

/// Disturbed forward-Euler rollout of the ground truth. With zero sigmas the
/// result is bit-identical to chaining step_euler on true_derivative.
inline std::vector<State> simulate_plant(const State& initial, const std::vector<Input>& inputs,
                                         double T, const DisturbanceModel& dist) {
    if (!(T > 0.0)) throw std::invalid_argument("step size must be > 0");
    dist.validate();
    std::mt19937_64 rng(dist.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<State> states;
    states.reserve(inputs.size() + 1);
    states.push_back(initial);
    for (const Input& u : inputs) {
        Input eff = u;
        if (dist.sigma_v > 0.0) eff.v += dist.sigma_v * gauss(rng);
        if (dist.sigma_omega > 0.0) eff.omega += dist.sigma_omega * gauss(rng);
        states.push_back(step_euler(true_derivative, states.back(), eff, T));
    }
    return states;
}

namespace detail {

inline int steps_for(const DataGenConfig& cfg) {
    return static_cast<int>(cfg.run_duration_s * cfg.sample_rate_hz);
}

inline Trajectory drive(const DataGenConfig& cfg, const std::vector<Input>& inputs,
                        std::uint64_t noise_seed) {
    DisturbanceModel d = cfg.disturbance;
    d.seed = noise_seed;
    Trajectory tr;
    tr.inputs = inputs;
    tr.states = simulate_plant(State{}, inputs, 1.0 / cfg.sample_rate_hz, d);
    return tr;
}

}  // namespace detail

/// One random-walk run: inputs drawn uniformly within bounds, held constant
/// for a uniformly random 0.5-2 s, then re-drawn, simulated with the
/// configured disturbance.
inline Trajectory generate_random_walk(const DataGenConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const int n = detail::steps_for(cfg);
    const double T = 1.0 / cfg.sample_rate_hz;
    std::uniform_real_distribution<double> hold_s(0.5, 2.0);
    std::uniform_real_distribution<double> rand_v(cfg.bounds.v_min, cfg.bounds.v_max);
    std::uniform_real_distribution<double> rand_w(cfg.bounds.omega_min, cfg.bounds.omega_max);
    std::vector<Input> inputs;
    inputs.reserve(static_cast<std::size_t>(n));
    Input current{rand_v(rng), rand_w(rng)};
    double until = hold_s(rng);
    for (int k = 0; k < n; ++k) {
        if (k * T >= until) {
            current = {rand_v(rng), rand_w(rng)};
            until = k * T + hold_s(rng);
        }
        inputs.push_back(current);
    }
    return detail::drive(cfg, inputs, rng());
}

/// Scripted runs emulating smooth human driving: constant-rate arcs,
/// sinusoidal S-curves, forward/backward reversals and ramped sprints, with
/// rng-drawn amplitudes, always clamped to the input bounds.
inline std::vector<Trajectory> generate_scripted_runs(const DataGenConfig& cfg,
                                                      std::mt19937_64& rng) {
    cfg.validate();
    const int n = detail::steps_for(cfg);
    const double T = 1.0 / cfg.sample_rate_hz;
    std::uniform_real_distribution<double> unit(0.3, 1.0);
    std::uniform_real_distribution<double> period_s(4.0, 12.0);
    std::vector<Trajectory> runs;
    runs.reserve(static_cast<std::size_t>(cfg.n_scripted_runs));
    for (int r = 0; r < cfg.n_scripted_runs; ++r) {
        const double av = unit(rng) * std::min(std::abs(cfg.bounds.v_min), cfg.bounds.v_max);
        const double aw =
            unit(rng) * std::min(std::abs(cfg.bounds.omega_min), cfg.bounds.omega_max);
        const double pv = period_s(rng);
        const double pw = period_s(rng);
        const double two_pi = 2.0 * M_PI;
        std::vector<Input> inputs;
        inputs.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            const double t = k * T;
            Input u;
            switch (r % 4) {
                case 0:  // steady arc with a soft ramp-in
                    u.v = av * std::min(1.0, t / 2.0);
                    u.omega = (r % 8 < 4 ? aw : -aw) * std::min(1.0, t / 2.0);
                    break;
                case 1:  // S-curves: constant speed, sinusoidal steering
                    u.v = av;
                    u.omega = aw * std::sin(two_pi * t / pw);
                    break;
                case 2:  // reversals: sinusoidal speed crosses zero
                    u.v = av * std::sin(two_pi * t / pv);
                    u.omega = 0.3 * aw * std::cos(two_pi * t / pw);
                    break;
                default:  // ramped sprint out and back with alternating turn
                    u.v = av * (1.0 - std::abs(2.0 * t / cfg.run_duration_s - 1.0)) *
                          (t < cfg.run_duration_s / 2.0 ? 1.0 : -1.0);
                    u.omega = aw * std::sin(two_pi * t / pv) * 0.5;
                    break;
            }
            inputs.push_back(cfg.bounds.clamp(u));
        }
        runs.push_back(detail::drive(cfg, inputs, rng()));
    }
    return runs;
}

/// Full synthetic corpus: random walks followed by scripted runs, all driven
/// by substreams of cfg.seed.
inline std::vector<Trajectory> generate_corpus(const DataGenConfig& cfg) {
    cfg.validate();
    std::vector<Trajectory> runs;
    runs.reserve(static_cast<std::size_t>(cfg.n_random_walk_runs + cfg.n_scripted_runs));
    for (int r = 0; r < cfg.n_random_walk_runs; ++r) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x1000u + static_cast<std::uint64_t>(r)));
        runs.push_back(generate_random_walk(cfg, rng));
    }
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x2000u));
    auto scripted = generate_scripted_runs(cfg, rng);
    for (auto& tr : scripted) runs.push_back(std::move(tr));
    return runs;
}

/// Difference-quotient targets: target_k = (pose_{k+1} - pose_k) * h with the
/// angle difference unwrapped per trajectory, paired with (state_k, input_k).
/// The last pose of each run has no successor and is dropped.
inline std::vector<Sample> build_dataset(const std::vector<Trajectory>& trajectories, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("sample rate must be > 0");
    std::vector<Sample> out;
    for (const Trajectory& tr : trajectories) {
        if (tr.states.size() < 2)
            throw std::invalid_argument("build_dataset: trajectory needs at least 2 poses");
        if (tr.inputs.size() + 1 != tr.states.size())
            throw std::invalid_argument("build_dataset: inputs/states length mismatch");
        for (std::size_t k = 0; k + 1 < tr.states.size(); ++k) {
            const State& a = tr.states[k];
            const State& b = tr.states[k + 1];
            Sample s;
            s.state = a;
            s.input = tr.inputs[k];
            s.target = {(b.x - a.x) * h, (b.y - a.y) * h, wrap_angle(b.theta - a.theta) * h};
            out.push_back(s);
        }
    }
    return out;
}

}  // namespace dmpc::plant
