#pragma once

#include "dmpc/trajopt.hpp"

#include <random>

namespace dmpc::ensemble {

struct EnsembleConfig {
    int members = 10;          // M
    double dropout_rate = 0.2;
    int kappa = 2;             // weight temperature, natural number
    double lambda = 0.7;       // full-network blend weight
    double xi = 0.3;           // ensemble blend weight
    std::uint64_t seed = 0;

    void validate(std::vector<std::string>* warnings = nullptr) const {
        if (members < 1) throw ConfigError("ensemble members must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("dropout rate must be in [0, 1)");
        if (kappa < 1) throw ConfigError("kappa must be >= 1");
        if (!(lambda > xi)) throw ConfigError("blend weights must satisfy lambda > xi");
        if (warnings && std::abs(lambda + xi - 1.0) > 1e-12)
            warnings->push_back("blend weights lambda + xi != 1; proceeding as configured");
    }
};

/// Spread of the one-step predictions across the realizations.
struct UncertaintyEstimate {
    Eigen::Vector3d sigma = Eigen::Vector3d::Zero();  // per-dimension population std
    Eigen::Matrix2d cov_xy = Eigen::Matrix2d::Zero(); // planar covariance, for ellipses
};

/// Everything one Dropout MPC step produces.
struct EnsembleDecision {
    Input u_nn;                 // full-network MPC input
    Input u_ensemble;           // cost-weighted vote over member first inputs
    Input u_final;              // blended, clipped input actually applied
    std::vector<double> weights;                       // M values in [0, 1]
    std::vector<trajopt::OptimizedHorizon> member_horizons;  // M entries
    trajopt::OptimizedHorizon full_horizon;
    Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
    Eigen::Matrix2d cov_xy = Eigen::Matrix2d::Zero();
    std::vector<std::string> warnings;
};

/// z_i = (cost_i - mean)/std with the population std. A spread below 1e-12
/// is treated as degenerate: all zeros, flag set.
inline std::vector<double> standardize_costs(const std::vector<double>& costs,
                                             bool* degenerate = nullptr) {
    if (costs.empty()) throw std::invalid_argument("standardize_costs: empty cost list");
    for (double c : costs)
        if (!std::isfinite(c)) throw std::invalid_argument("standardize_costs: non-finite cost");
    const double n = static_cast<double>(costs.size());
    double mean = 0.0;
    for (double c : costs) mean += c;
    mean /= n;
    double var = 0.0;
    for (double c : costs) var += (c - mean) * (c - mean);
    const double sd = std::sqrt(var / n);
    if (degenerate) *degenerate = sd < 1e-12;
    std::vector<double> z(costs.size(), 0.0);
    if (sd < 1e-12) return z;
    for (std::size_t i = 0; i < costs.size(); ++i) z[i] = (costs[i] - mean) / sd;
    return z;
}

/// raw_i = exp(-z_i / kappa), then min-max scaled so the cheapest member gets
/// weight 1 and the dearest 0. All-equal z collapses min-max to 0/0 and is
/// defined as uniform weight 1.
inline std::vector<double> compute_weights(const std::vector<double>& z, int kappa) {
    if (z.empty()) throw std::invalid_argument("compute_weights: empty input");
    if (kappa < 1) throw std::invalid_argument("compute_weights: kappa must be >= 1");
    std::vector<double> raw(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        raw[i] = std::exp(-z[i] / static_cast<double>(kappa));
    const auto [mn_it, mx_it] = std::minmax_element(raw.begin(), raw.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx - mn < 1e-15) return std::vector<double>(z.size(), 1.0);
    std::vector<double> w(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) w[i] = (raw[i] - mn) / (mx - mn);
    return w;
}

/// Componentwise weighted mean of the member first inputs.
inline Input vote(const std::vector<double>& weights, const std::vector<Input>& first_inputs) {
    if (weights.size() != first_inputs.size())
        throw std::invalid_argument("vote: weights/inputs length mismatch");
    if (weights.empty()) throw std::invalid_argument("vote: empty ensemble");
    double wsum = 0.0, v = 0.0, omega = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        wsum += weights[i];
        v += weights[i] * first_inputs[i].v;
        omega += weights[i] * first_inputs[i].omega;
    }
    if (!(wsum > 0.0)) throw std::invalid_argument("vote: weights sum to zero");
    return {v / wsum, omega / wsum};
}

/// u_final = lambda * u_nn + xi * u_ensemble, clipped to the input box.
inline Input blend(const Input& u_nn, const Input& u_ensemble, double lambda, double xi,
                   const InputBounds& bounds) {
    if (!(lambda > xi)) throw std::invalid_argument("blend: requires lambda > xi");
    return bounds.clamp(Input::from_vec(lambda * u_nn.vec() + xi * u_ensemble.vec()));
}

/// One RK4 step per realization under the applied input; sigma is the
/// per-dimension population std of the resulting next states, cov_xy their
/// planar covariance.
template <model::DynamicsModel M>
UncertaintyEstimate next_state_uncertainty(const std::vector<M>& realizations,
                                           const State& state, const Input& u_final, double T) {
    if (realizations.empty())
        throw std::invalid_argument("next_state_uncertainty: no realizations");
    std::vector<Eigen::Vector3d> next;
    next.reserve(realizations.size());
    for (const auto& m : realizations) {
        const State s = plant::step_rk4(
            [&](const State& x, const Input& u) { return m.derivative(x, u); }, state, u_final,
            T);
        next.push_back(s.vec());
    }
    // Put all thetas on the branch of the first sample so realizations that
    // straddle +-pi do not inflate sigma_theta by 2*pi.
    for (auto& x : next) x[2] = next.front()[2] + wrap_angle(x[2] - next.front()[2]);
    UncertaintyEstimate est;
    est.sigma = population_std3(next);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& x : next) mean += x.head<2>();
    mean /= static_cast<double>(next.size());
    for (const auto& x : next) {
        const Eigen::Vector2d d = x.head<2>() - mean;
        est.cov_xy += d * d.transpose();
    }
    est.cov_xy /= static_cast<double>(next.size());
    return est;
}

/// Per-member warm starts threaded between closed-loop steps: member i keeps
/// its own previous horizon.
struct WarmStarts {
    std::optional<trajopt::OptimizedHorizon> full;
    std::vector<std::optional<trajopt::OptimizedHorizon>> members;
};

/// One Dropout MPC control step: solve the full-network MPC, then M
/// fixed-mask member MPCs; standardize member horizon costs, weight, vote on
/// the member first inputs, blend with the full-network input and estimate
/// next-state uncertainty over the same realizations. Masks are resampled on
/// every call.
inline EnsembleDecision dropout_mpc_step(const State& state, const State& x_ref,
                                         const net::ModelParams& params,
                                         const trajopt::MpcConfig& mpc_cfg,
                                         const EnsembleConfig& ens_cfg,
                                         const WarmStarts& warm, std::mt19937_64& rng,
                                         const trajopt::TerminalCost* terminal = nullptr) {
    mpc_cfg.validate();
    EnsembleDecision dec;
    ens_cfg.validate(&dec.warnings);
    params.validate();

    trajopt::TerminalCost term;
    if (terminal) {
        term = *terminal;
    } else {
        const model::NetModel full{&params, nullptr};
        const auto [A, B] = trajopt::linearize_at(full, x_ref, Input{}, mpc_cfg.step);
        term = trajopt::solve_dare(A, B, mpc_cfg.Q, mpc_cfg.R, mpc_cfg.beta);
    }

    // Full-network solve.
    const model::NetModel full{&params, nullptr};
    dec.full_horizon =
        trajopt::solve_mpc(trajopt::build_problem(mpc_cfg, state, x_ref, full, term),
                           warm.full);
    dec.u_nn = dec.full_horizon.inputs.front();

    // Fixed-mask member solves. Masks are drawn up front so member i's mask
    // depends only on (rng state, i), not on any solve.
    const int M = ens_cfg.members;
    std::vector<net::DropoutMask> masks;
    masks.reserve(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i)
        masks.push_back(net::sample_mask(rng, ens_cfg.dropout_rate, params.hidden_dim));

    dec.member_horizons.resize(static_cast<std::size_t>(M));
    std::vector<double> costs(static_cast<std::size_t>(M), 0.0);
    std::vector<bool> usable(static_cast<std::size_t>(M), false);
    for (int i = 0; i < M; ++i) {
        const auto is = static_cast<std::size_t>(i);
        const model::NetModel member{&params, &masks[is]};
        const auto& member_warm =
            is < warm.members.size() ? warm.members[is] : std::optional<trajopt::OptimizedHorizon>{};
        try {
            dec.member_horizons[is] = trajopt::solve_mpc(
                trajopt::build_problem(mpc_cfg, state, x_ref, member, term), member_warm);
            costs[is] = dec.member_horizons[is].horizon_cost;
            usable[is] = std::isfinite(costs[is]);
            if (!usable[is])
                dec.warnings.push_back("member " + std::to_string(i) +
                                       " returned a non-finite cost; excluded from vote");
        } catch (const std::exception& e) {
            usable[is] = false;
            dec.warnings.push_back("member " + std::to_string(i) +
                                   " solve failed: " + e.what());
        }
    }

    // Weighting and voting over the usable members only; excluded members
    // keep weight 0 in the reported vector.
    std::vector<double> live_costs;
    std::vector<Input> live_inputs;
    for (int i = 0; i < M; ++i) {
        const auto is = static_cast<std::size_t>(i);
        if (!usable[is]) continue;
        live_costs.push_back(costs[is]);
        live_inputs.push_back(dec.member_horizons[is].inputs.front());
    }
    dec.weights.assign(static_cast<std::size_t>(M), 0.0);
    if (live_costs.empty()) {
        dec.warnings.push_back("all ensemble members failed; applying the full-network input");
        dec.u_ensemble = dec.u_nn;
        dec.u_final = mpc_cfg.bounds.clamp(dec.u_nn);
    } else {
        const std::vector<double> z = standardize_costs(live_costs);
        const std::vector<double> w = compute_weights(z, ens_cfg.kappa);
        std::size_t j = 0;
        for (int i = 0; i < M; ++i) {
            const auto is = static_cast<std::size_t>(i);
            if (usable[is]) dec.weights[is] = w[j++];
        }
        dec.u_ensemble = vote(w, live_inputs);
        dec.u_final =
            blend(dec.u_nn, dec.u_ensemble, ens_cfg.lambda, ens_cfg.xi, mpc_cfg.bounds);
    }

    // Next-state uncertainty across all M realizations under u_final.
    std::vector<model::NetModel> realizations;
    realizations.reserve(static_cast<std::size_t>(M));
    for (const auto& mask : masks) realizations.push_back(model::NetModel{&params, &mask});
    const UncertaintyEstimate est =
        next_state_uncertainty(realizations, state, dec.u_final, mpc_cfg.step);
    dec.sigma = est.sigma;
    dec.cov_xy = est.cov_xy;
    return dec;
}

}  // namespace dmpc::ensemble
