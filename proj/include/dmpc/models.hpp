#pragma once

#include "dmpc/net.hpp"
#include "dmpc/plant.hpp"

#include <concepts>

namespace dmpc::model {

/// Continuous-time dynamics realization consumed by the MPC solver:
/// a derivative function f(x, u) and its analytic Jacobians.
template <class M>
concept DynamicsModel = requires(const M& m, const State& s, const Input& u) {
    { m.derivative(s, u) } -> std::convertible_to<StateDerivative>;
    { m.jacobians(s, u) } -> std::convertible_to<std::pair<Eigen::Matrix3d, Matrix32>>;
};

/// Learned network with an optional fixed dropout mask. A null mask is the
/// full network; a fixed mask is one ensemble member. Holds references only:
/// cheap to copy, safe to share across concurrent solves.
struct NetModel {
    const net::ModelParams* params = nullptr;
    const net::DropoutMask* mask = nullptr;

    StateDerivative derivative(const State& s, const Input& u) const {
        return net::forward(*params, mask, s, u);
    }
    std::pair<Eigen::Matrix3d, Matrix32> jacobians(const State& s, const Input& u) const {
        return net::jacobians(*params, mask, s, u);
    }
};

/// xdot = F x + G u. Used by tests to embed systems with known closed-form
/// optimal controllers.
struct LinearModel {
    Eigen::Matrix3d F = Eigen::Matrix3d::Zero();
    Matrix32 G = Matrix32::Zero();

    StateDerivative derivative(const State& s, const Input& u) const {
        return StateDerivative::from_vec(F * s.vec() + G * u.vec());
    }
    std::pair<Eigen::Matrix3d, Matrix32> jacobians(const State&, const Input&) const {
        return {F, G};
    }

    /// F, G such that one explicit-Euler step of this model with step T
    /// reproduces the discrete-time system x+ = Ad x + Bd u exactly.
    static LinearModel from_discrete(const Eigen::Matrix3d& Ad, const Matrix32& Bd, double T) {
        if (!(T > 0.0)) throw std::invalid_argument("step size must be > 0");
        return {(Ad - Eigen::Matrix3d::Identity()) / T, Bd / T};
    }
};

/// Ground-truth differential-drive kinematics with analytic Jacobians; the
/// oracle controller plugs this into the same solver as the learned model.
struct UnicycleModel {
    StateDerivative derivative(const State& s, const Input& u) const {
        return plant::true_derivative(s, u);
    }
    std::pair<Eigen::Matrix3d, Matrix32> jacobians(const State& s, const Input& u) const {
        Eigen::Matrix3d Jx = Eigen::Matrix3d::Zero();
        Jx(0, 2) = -u.v * std::sin(s.theta);
        Jx(1, 2) = u.v * std::cos(s.theta);
        Matrix32 Ju = Matrix32::Zero();
        Ju(0, 0) = std::cos(s.theta);
        Ju(1, 0) = std::sin(s.theta);
        Ju(2, 1) = 1.0;
        return {Jx, Ju};
    }
};

}  // namespace dmpc::model
