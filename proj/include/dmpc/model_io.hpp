#pragma once

#include "dmpc/net.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dmpc::net {

inline constexpr const char* kModelFormatTag = "dmpc-model-v1";

namespace detail {

using dmpc::detail::fmt17;

inline void write_vector(std::ostream& os, const char* name, const Eigen::VectorXd& v) {
    os << name;
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << fmt17(v[i]);
    os << '\n';
}

inline void write_matrix(std::ostream& os, const char* name, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        os << name << ' ' << r;
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << fmt17(m(r, c));
        os << '\n';
    }
}

struct LineReader {
    std::istream& is;
    std::string path;
    int line_no = 0;

    std::istringstream next(const std::string& expect_key) {
        std::string line;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string key;
            ls >> key;
            if (key != expect_key)
                throw IoError(path + ":" + std::to_string(line_no) + ": expected '" +
                              expect_key + "', found '" + key + "'");
            return ls;
        }
        throw IoError(path + ": truncated model file, missing '" + expect_key + "'");
    }
};

inline Eigen::VectorXd read_vector(LineReader& lr, const char* name, Eigen::Index size) {
    auto ls = lr.next(name);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i)
        if (!(ls >> v[i]))
            throw IoError(lr.path + ": field '" + name + "' needs " + std::to_string(size) +
                          " values");
    return v;
}

inline Eigen::MatrixXd read_matrix(LineReader& lr, const char* name, Eigen::Index rows,
                                   Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        auto ls = lr.next(name);
        Eigen::Index row_idx = -1;
        if (!(ls >> row_idx) || row_idx != r)
            throw IoError(lr.path + ": field '" + name + "' rows out of order");
        for (Eigen::Index c = 0; c < cols; ++c)
            if (!(ls >> m(r, c)))
                throw IoError(lr.path + ": field '" + name + "' row " + std::to_string(r) +
                              " needs " + std::to_string(cols) + " values");
    }
    return m;
}

}  // namespace detail

/// Fixed field order so files are diffable; every value is written with 17
/// significant digits, which round-trips IEEE doubles exactly.
inline void save_model(const ModelParams& p, std::ostream& os) {
    p.validate();
    os << kModelFormatTag << '\n';
    os << "in_dim " << p.in_dim << '\n';
    os << "hidden_dim " << p.hidden_dim << '\n';
    os << "out_dim " << p.out_dim << '\n';
    os << "dropout_rate " << detail::fmt17(p.dropout_rate) << '\n';
    detail::write_vector(os, "input_mean", p.input_mean);
    detail::write_vector(os, "input_std", p.input_std);
    detail::write_vector(os, "target_mean", p.target_mean);
    detail::write_vector(os, "target_std", p.target_std);
    detail::write_matrix(os, "W1", p.W1);
    detail::write_vector(os, "b1", p.b1);
    detail::write_matrix(os, "W2", p.W2);
    detail::write_vector(os, "b2", p.b2);
    if (!os) throw IoError("failed while writing model stream");
}

inline void save_model(const ModelParams& p, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open model file for writing: " + path);
    save_model(p, f);
    f.flush();
    if (!f) throw IoError("failed while writing model file: " + path);
}

inline ModelParams load_model(std::istream& is, const std::string& path = "<stream>") {
    detail::LineReader lr{is, path};
    {
        std::string line;
        if (!std::getline(is, line)) throw IoError(path + ": empty model file");
        ++lr.line_no;
        if (line != kModelFormatTag)
            throw IoError(path + ": unrecognized model format tag '" + line + "'");
    }
    ModelParams p;
    auto read_int = [&lr](const char* name) {
        auto ls = lr.next(name);
        int v = 0;
        if (!(ls >> v)) throw IoError(lr.path + ": field '" + std::string(name) + "' malformed");
        return v;
    };
    p.in_dim = read_int("in_dim");
    p.hidden_dim = read_int("hidden_dim");
    p.out_dim = read_int("out_dim");
    if (p.in_dim != 5 || p.out_dim != 3 || p.hidden_dim < 1)
        throw IoError(path + ": unsupported model dimensions");
    {
        auto ls = lr.next("dropout_rate");
        if (!(ls >> p.dropout_rate)) throw IoError(path + ": field 'dropout_rate' malformed");
    }
    p.input_mean = detail::read_vector(lr, "input_mean", p.in_dim);
    p.input_std = detail::read_vector(lr, "input_std", p.in_dim);
    p.target_mean = detail::read_vector(lr, "target_mean", p.out_dim);
    p.target_std = detail::read_vector(lr, "target_std", p.out_dim);
    p.W1 = detail::read_matrix(lr, "W1", p.hidden_dim, p.in_dim);
    p.b1 = detail::read_vector(lr, "b1", p.hidden_dim);
    p.W2 = detail::read_matrix(lr, "W2", p.out_dim, p.hidden_dim);
    p.b2 = detail::read_vector(lr, "b2", p.out_dim);
    try {
        p.validate();
    } catch (const ConfigError& e) {
        throw IoError(path + ": invalid model contents: " + e.what());
    }
    return p;
}

inline ModelParams load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open model file: " + path);
    return load_model(f, path);
}

}  // namespace dmpc::net
