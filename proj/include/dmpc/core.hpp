#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmpc {

using Matrix32 = Eigen::Matrix<double, 3, 2>;

// Errors that should map to "bad configuration / usage" at the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Errors from file IO and parsing.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Planar pose of the robot base. theta is kept in (-pi, pi] at plant
/// boundaries; intermediate math may leave it unwrapped.
struct State {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Eigen::Vector3d vec() const { return {x, y, theta}; }
    static State from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

/// Velocity command: linear v [m/s], angular omega [rad/s].
struct Input {
    double v = 0.0;
    double omega = 0.0;

    Eigen::Vector2d vec() const { return {v, omega}; }
    static Input from_vec(const Eigen::Vector2d& u) { return {u[0], u[1]}; }
};

struct StateDerivative {
    double xdot = 0.0;
    double ydot = 0.0;
    double thetadot = 0.0;

    Eigen::Vector3d vec() const { return {xdot, ydot, thetadot}; }
    static StateDerivative from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

/// One dataset row: (state, input) -> observed state derivative.
struct Sample {
    State state;
    Input input;
    StateDerivative target;
};

/// Box on the inputs, [v_min, v_max] x [omega_min, omega_max].
struct InputBounds {
    double v_min = -1.0;
    double v_max = 1.0;
    double omega_min = -2.0;
    double omega_max = 2.0;

    bool contains(const Input& u, double tol = 0.0) const {
        return u.v >= v_min - tol && u.v <= v_max + tol && u.omega >= omega_min - tol &&
               u.omega <= omega_max + tol;
    }

    Input clamp(const Input& u) const {
        return {std::clamp(u.v, v_min, v_max), std::clamp(u.omega, omega_min, omega_max)};
    }

    void validate() const {
        if (!(v_min <= v_max) || !(omega_min <= omega_max))
            throw ConfigError("input bounds are empty");
        if (v_min > 0.0 || v_max < 0.0 || omega_min > 0.0 || omega_max < 0.0)
            throw ConfigError("input bounds must contain the zero input");
    }
};

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::fmod(a + M_PI, 2.0 * M_PI);
    if (r <= 0.0) r += 2.0 * M_PI;
    return r - M_PI;
}

inline bool finite(const State& s) {
    return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.theta);
}

inline bool finite(const Input& u) { return std::isfinite(u.v) && std::isfinite(u.omega); }

/// Pose error state - ref with wrapped angle component.
inline Eigen::Vector3d pose_error(const State& s, const State& ref) {
    return {s.x - ref.x, s.y - ref.y, wrap_angle(s.theta - ref.theta)};
}

namespace detail {

// Decimal with 17 significant digits: round-trips IEEE doubles exactly, so
// write-then-read reproduces in-memory values bit for bit.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// splitmix64; used to derive independent RNG streams from one global seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Elementwise population standard deviation over a set of 3-vectors.
/// Identical samples give an exact zero (no accumulated rounding noise).
inline Eigen::Vector3d population_std3(const std::vector<Eigen::Vector3d>& xs) {
    if (xs.empty()) throw std::invalid_argument("population_std3: empty set");
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int d = 0; d < 3; ++d) {
        bool all_equal = true;
        for (const auto& x : xs)
            if (x[d] != xs.front()[d]) {
                all_equal = false;
                break;
            }
        if (all_equal) continue;
        double mean = 0.0;
        for (const auto& x : xs) mean += x[d];
        mean /= static_cast<double>(xs.size());
        double acc = 0.0;
        for (const auto& x : xs) acc += (x[d] - mean) * (x[d] - mean);
        out[d] = std::sqrt(acc / static_cast<double>(xs.size()));
    }
    return out;
}

}  // namespace dmpc
