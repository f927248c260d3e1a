#pragma once

#include "dmpc/core.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace dmpc::net {

/// Weights, biases and normalization statistics of the learned dynamics
/// network: one sigmoid hidden layer mapping (state, input) to the state
/// derivative. Immutable after training; safe to share across solver threads.
struct ModelParams {
    int in_dim = 5;
    int hidden_dim = 30;
    int out_dim = 3;

    Eigen::MatrixXd W1;  // hidden_dim x in_dim
    Eigen::VectorXd b1;  // hidden_dim
    Eigen::MatrixXd W2;  // out_dim x hidden_dim
    Eigen::VectorXd b2;  // out_dim

    Eigen::VectorXd input_mean, input_std;    // per feature, training split
    Eigen::VectorXd target_mean, target_std;  // per output, training split

    double dropout_rate = 0.2;

    /// Zero weights, unit normalization stats.
    static ModelParams with_dims(int hidden = 30) {
        ModelParams p;
        p.hidden_dim = hidden;
        p.W1 = Eigen::MatrixXd::Zero(hidden, p.in_dim);
        p.b1 = Eigen::VectorXd::Zero(hidden);
        p.W2 = Eigen::MatrixXd::Zero(p.out_dim, hidden);
        p.b2 = Eigen::VectorXd::Zero(p.out_dim);
        p.input_mean = Eigen::VectorXd::Zero(p.in_dim);
        p.input_std = Eigen::VectorXd::Ones(p.in_dim);
        p.target_mean = Eigen::VectorXd::Zero(p.out_dim);
        p.target_std = Eigen::VectorXd::Ones(p.out_dim);
        return p;
    }

    void validate() const {
        if (in_dim != 5 || out_dim != 3) throw ConfigError("model dims must be 5 -> 3");
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
        if (W1.rows() != hidden_dim || W1.cols() != in_dim || b1.size() != hidden_dim ||
            W2.rows() != out_dim || W2.cols() != hidden_dim || b2.size() != out_dim)
            throw ConfigError("model weight shapes inconsistent with dims");
        if (input_mean.size() != in_dim || input_std.size() != in_dim ||
            target_mean.size() != out_dim || target_std.size() != out_dim)
            throw ConfigError("normalization stat shapes inconsistent with dims");
        if ((input_std.array() <= 0.0).any() || (target_std.array() <= 0.0).any())
            throw ConfigError("normalization std must be strictly positive");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("dropout rate must be in [0, 1)");
    }
};

/// One Bernoulli keep/drop pattern over the hidden units. Fixing a mask fixes
/// one deterministic realization of the model.
struct DropoutMask {
    std::vector<std::uint8_t> keep;
    double rate = 0.0;
};

struct TrainConfig {
    int epochs = 600;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double train_fraction = 0.8;
    double dropout_rate = 0.2;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("train_fraction must be in (0, 1)");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw ConfigError("dropout rate must be in [0, 1)");
    }
};

inline DropoutMask sample_mask(std::mt19937_64& rng, double rate, int hidden_dim) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    DropoutMask m;
    m.rate = rate;
    m.keep.resize(static_cast<std::size_t>(hidden_dim));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto& k : m.keep) k = (unif(rng) >= rate) ? 1 : 0;
    return m;
}

namespace detail {

inline Eigen::VectorXd feature_vec(const State& s, const Input& u) {
    Eigen::VectorXd z(5);
    z << s.x, s.y, s.theta, u.v, u.omega;
    return z;
}

// Hidden activation with inverted-dropout scaling baked in. keep_scale is
// either all ones (full network) or keep/(1-p).
inline Eigen::VectorXd keep_scale(const ModelParams& p, const DropoutMask* mask) {
    Eigen::VectorXd s = Eigen::VectorXd::Ones(p.hidden_dim);
    if (!mask) return s;
    if (static_cast<int>(mask->keep.size()) != p.hidden_dim)
        throw std::invalid_argument("dropout mask length does not match hidden_dim");
    const double inv = 1.0 / (1.0 - mask->rate);
    for (int j = 0; j < p.hidden_dim; ++j) s[j] = mask->keep[j] ? inv : 0.0;
    return s;
}

inline void check_forward_args(const ModelParams& p, const State& s, const Input& u) {
    p.validate();
    if (!finite(s) || !finite(u)) throw std::invalid_argument("non-finite network input");
}

}  // namespace detail

/// Network forward pass. A null mask means the full network; with a mask the
/// kept hidden units are rescaled by 1/(1-p) so the full network equals the
/// expectation over masks.
inline StateDerivative forward(const ModelParams& p, const DropoutMask* mask, const State& s,
                               const Input& u) {
    detail::check_forward_args(p, s, u);
    const Eigen::VectorXd zn =
        (detail::feature_vec(s, u) - p.input_mean).cwiseQuotient(p.input_std);
    const Eigen::VectorXd h = p.W1 * zn + p.b1;
    Eigen::VectorXd a = (1.0 + (-h.array()).exp()).inverse().matrix();
    a = a.cwiseProduct(detail::keep_scale(p, mask));
    const Eigen::VectorXd yn = p.W2 * a + p.b2;
    const Eigen::Vector3d y =
        (yn.cwiseProduct(p.target_std) + p.target_mean).head<3>();
    return StateDerivative::from_vec(y);
}

/// Exact partial derivatives of forward() with respect to state and input,
/// including the normalization scaling and the dropout mask.
inline std::pair<Eigen::Matrix3d, Matrix32> jacobians(const ModelParams& p,
                                                      const DropoutMask* mask, const State& s,
                                                      const Input& u) {
    detail::check_forward_args(p, s, u);
    const Eigen::VectorXd zn =
        (detail::feature_vec(s, u) - p.input_mean).cwiseQuotient(p.input_std);
    const Eigen::VectorXd h = p.W1 * zn + p.b1;
    const Eigen::VectorXd a = (1.0 + (-h.array()).exp()).inverse().matrix();
    const Eigen::VectorXd ds =
        a.array() * (1.0 - a.array()) * detail::keep_scale(p, mask).array();
    // dy/dz = diag(target_std) W2 diag(ds) W1 diag(1/input_std)
    Eigen::Matrix<double, 3, Eigen::Dynamic> left =
        p.target_std.asDiagonal() * p.W2 * ds.asDiagonal();
    Eigen::Matrix<double, 3, 5> J =
        (left * p.W1 * p.input_std.cwiseInverse().asDiagonal());
    return {J.leftCols<3>(), J.rightCols<2>()};
}

/// Monte-Carlo prediction: M stochastic forward passes with fresh masks at
/// rate params.dropout_rate; returns elementwise mean and population std.
inline std::pair<StateDerivative, StateDerivative> mc_predict(const ModelParams& p,
                                                              const State& s, const Input& u,
                                                              int samples,
                                                              std::mt19937_64& rng) {
    if (samples < 1) throw std::invalid_argument("mc_predict needs at least one sample");
    std::vector<Eigen::Vector3d> ys;
    ys.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        const DropoutMask m = sample_mask(rng, p.dropout_rate, p.hidden_dim);
        ys.push_back(forward(p, &m, s, u).vec());
    }
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& y : ys) mean += y;
    mean /= static_cast<double>(samples);
    return {StateDerivative::from_vec(mean), StateDerivative::from_vec(population_std3(ys))};
}

struct TrainResult {
    ModelParams params;
    std::vector<double> train_mse;  // per epoch, normalized target space
    std::vector<double> test_mse;
    std::vector<int> train_indices;  // the shuffled split actually used
    std::vector<int> test_indices;
    std::vector<std::string> warnings;
};

namespace detail {

// Column-per-sample feature / target matrices.
inline void fill_design(const std::vector<Sample>& data, const std::vector<int>& idx,
                        Eigen::MatrixXd& Z, Eigen::MatrixXd& Y) {
    Z.resize(5, static_cast<Eigen::Index>(idx.size()));
    Y.resize(3, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const Sample& s = data[static_cast<std::size_t>(idx[c])];
        Z.col(static_cast<Eigen::Index>(c)) = feature_vec(s.state, s.input);
        Y.col(static_cast<Eigen::Index>(c)) = s.target.vec();
    }
}

inline double normalized_mse(const ModelParams& p, const Eigen::MatrixXd& Zn,
                             const Eigen::MatrixXd& Yn) {
    const Eigen::MatrixXd A =
        (1.0 + (-((p.W1 * Zn).colwise() + p.b1).array()).exp()).inverse();
    const Eigen::MatrixXd E = ((p.W2 * A.matrix()).colwise() + p.b2) - Yn;
    return E.squaredNorm() / static_cast<double>(E.size());
}

}  // namespace detail

/// Offline training: shuffled split, normalization stats from the training
/// split only, minibatch Adam on the MSE of normalized targets with dropout
/// active. Deterministic given (dataset, cfg, rng state).
inline TrainResult train(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                         std::mt19937_64& rng, int hidden_dim = 30) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (dataset.size() < 2) throw std::invalid_argument("train: need at least 2 samples");

    TrainResult result;
    ModelParams& p = result.params;
    p = ModelParams::with_dims(hidden_dim);
    p.dropout_rate = cfg.dropout_rate;

    // Shuffled train/test split.
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<std::size_t>(dataset.size());
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(cfg.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    result.train_indices.assign(order.begin(), order.begin() + static_cast<long>(n_train));
    result.test_indices.assign(order.begin() + static_cast<long>(n_train), order.end());

    Eigen::MatrixXd Ztr, Ytr, Zte, Yte;
    detail::fill_design(dataset, result.train_indices, Ztr, Ytr);
    detail::fill_design(dataset, result.test_indices, Zte, Yte);

    // Normalization stats on the training split; zero-variance features are
    // clamped to unit std so normalization stays well defined.
    auto stats = [&result](const Eigen::MatrixXd& M, Eigen::VectorXd& mean,
                           Eigen::VectorXd& std_out, const char* what) {
        mean = M.rowwise().mean();
        Eigen::MatrixXd C = M.colwise() - mean;
        std_out = (C.array().square().rowwise().mean()).sqrt();
        for (Eigen::Index i = 0; i < std_out.size(); ++i) {
            if (std_out[i] < 1e-12) {
                std_out[i] = 1.0;
                result.warnings.push_back(std::string(what) + " feature " + std::to_string(i) +
                                          " has zero variance; std clamped to 1");
            }
        }
    };
    stats(Ztr, p.input_mean, p.input_std, "input");
    stats(Ytr, p.target_mean, p.target_std, "target");

    const Eigen::MatrixXd ZtrN = p.input_std.cwiseInverse().asDiagonal() *
                                 (Ztr.colwise() - p.input_mean);
    const Eigen::MatrixXd YtrN = p.target_std.cwiseInverse().asDiagonal() *
                                 (Ytr.colwise() - p.target_mean);
    const Eigen::MatrixXd ZteN = p.input_std.cwiseInverse().asDiagonal() *
                                 (Zte.colwise() - p.input_mean);
    const Eigen::MatrixXd YteN = p.target_std.cwiseInverse().asDiagonal() *
                                 (Yte.colwise() - p.target_mean);

    // Uniform +-1/sqrt(fan_in) init, zero biases.
    std::uniform_real_distribution<double> u1(-1.0 / std::sqrt(5.0), 1.0 / std::sqrt(5.0));
    std::uniform_real_distribution<double> u2(-1.0 / std::sqrt(double(hidden_dim)),
                                              1.0 / std::sqrt(double(hidden_dim)));
    for (Eigen::Index i = 0; i < p.W1.size(); ++i) p.W1.data()[i] = u1(rng);
    for (Eigen::Index i = 0; i < p.W2.size(); ++i) p.W2.data()[i] = u2(rng);

    struct Adam {
        Eigen::MatrixXd mW1, vW1, mW2, vW2;
        Eigen::VectorXd mb1, vb1, mb2, vb2;
        double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        long t = 0;
    } adam;
    adam.mW1 = Eigen::MatrixXd::Zero(hidden_dim, 5);
    adam.vW1 = adam.mW1;
    adam.mW2 = Eigen::MatrixXd::Zero(3, hidden_dim);
    adam.vW2 = adam.mW2;
    adam.mb1 = Eigen::VectorXd::Zero(hidden_dim);
    adam.vb1 = adam.mb1;
    adam.mb2 = Eigen::VectorXd::Zero(3);
    adam.vb2 = adam.mb2;

    auto adam_step = [&](Eigen::Ref<Eigen::MatrixXd> w, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                         const Eigen::MatrixXd& g) {
        m = adam.b1 * m + (1.0 - adam.b1) * g;
        v = adam.b2 * v + (1.0 - adam.b2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(adam.b1, double(adam.t));
        const double c2 = 1.0 - std::pow(adam.b2, double(adam.t));
        w -= (cfg.learning_rate / c1) *
             (m.array() / ((v.array() / c2).sqrt() + adam.eps)).matrix();
    };

    const double p_drop = cfg.dropout_rate;
    const double inv_keep = 1.0 / (1.0 - p_drop);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> perm(n_train);
    std::iota(perm.begin(), perm.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t start = 0; start < n_train;
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const auto bs = static_cast<Eigen::Index>(
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                      n_train - start));
            Eigen::MatrixXd Zb(5, bs), Yb(3, bs);
            for (Eigen::Index c = 0; c < bs; ++c) {
                const int j = perm[start + static_cast<std::size_t>(c)];
                Zb.col(c) = ZtrN.col(j);
                Yb.col(c) = YtrN.col(j);
            }
            // Per-sample Bernoulli masks with inverted scaling.
            Eigen::MatrixXd Dm = Eigen::MatrixXd::Constant(hidden_dim, bs, 1.0);
            if (p_drop > 0.0) {
                for (Eigen::Index c = 0; c < bs; ++c)
                    for (int j = 0; j < hidden_dim; ++j)
                        Dm(j, c) = (unif(rng) >= p_drop) ? inv_keep : 0.0;
            }

            const Eigen::MatrixXd H = (p.W1 * Zb).colwise() + p.b1;
            const Eigen::MatrixXd A = (1.0 + (-H.array()).exp()).inverse();
            const Eigen::MatrixXd D = A.cwiseProduct(Dm);
            const Eigen::MatrixXd Yhat = (p.W2 * D).colwise() + p.b2;

            // MSE over batch entries: L = sum(err^2) / (3 * bs)
            const Eigen::MatrixXd gY = (2.0 / (3.0 * double(bs))) * (Yhat - Yb);
            const Eigen::MatrixXd gW2 = gY * D.transpose();
            const Eigen::VectorXd gb2 = gY.rowwise().sum();
            const Eigen::MatrixXd gD = p.W2.transpose() * gY;
            const Eigen::MatrixXd gH =
                gD.cwiseProduct(Dm).cwiseProduct(A.cwiseProduct((1.0 - A.array()).matrix()));
            const Eigen::MatrixXd gW1 = gH * Zb.transpose();
            const Eigen::VectorXd gb1 = gH.rowwise().sum();

            ++adam.t;
            adam_step(p.W1, adam.mW1, adam.vW1, gW1);
            adam_step(p.W2, adam.mW2, adam.vW2, gW2);
            adam.mb1 = adam.b1 * adam.mb1 + (1.0 - adam.b1) * gb1;
            adam.vb1 = adam.b2 * adam.vb1 + (1.0 - adam.b2) * gb1.cwiseProduct(gb1);
            adam.mb2 = adam.b1 * adam.mb2 + (1.0 - adam.b1) * gb2;
            adam.vb2 = adam.b2 * adam.vb2 + (1.0 - adam.b2) * gb2.cwiseProduct(gb2);
            const double c1 = 1.0 - std::pow(adam.b1, double(adam.t));
            const double c2 = 1.0 - std::pow(adam.b2, double(adam.t));
            p.b1 -= (cfg.learning_rate / c1) *
                    (adam.mb1.array() / ((adam.vb1.array() / c2).sqrt() + adam.eps)).matrix();
            p.b2 -= (cfg.learning_rate / c1) *
                    (adam.mb2.array() / ((adam.vb2.array() / c2).sqrt() + adam.eps)).matrix();
        }
        // Epoch metrics use the deployed (full, no dropout) network.
        result.train_mse.push_back(detail::normalized_mse(p, ZtrN, YtrN));
        result.test_mse.push_back(detail::normalized_mse(p, ZteN, YteN));
    }
    p.validate();
    return result;
}

/// Normalized-space MSE of the full network over a sample list; the value
/// cmd_train prints and the round-trip check re-computes.
inline double evaluate_mse(const ModelParams& p, const std::vector<Sample>& data) {
    if (data.empty()) throw std::invalid_argument("evaluate_mse: empty dataset");
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    Eigen::MatrixXd Z, Y;
    detail::fill_design(data, idx, Z, Y);
    const Eigen::MatrixXd Zn =
        p.input_std.cwiseInverse().asDiagonal() * (Z.colwise() - p.input_mean);
    const Eigen::MatrixXd Yn =
        p.target_std.cwiseInverse().asDiagonal() * (Y.colwise() - p.target_mean);
    return detail::normalized_mse(p, Zn, Yn);
}

}  // namespace dmpc::net
