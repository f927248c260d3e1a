#pragma once

#include "dmpc/core.hpp"

#include <fstream>
#include <sstream>

namespace dmpc::io {

inline constexpr const char* kDatasetHeader = "x,y,theta,v,omega,xdot,ydot,thetadot";

namespace detail {

inline std::vector<double> parse_row(const std::string& line, std::size_t expected,
                                     const std::string& path, int line_no) {
    std::vector<double> vals;
    vals.reserve(expected);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &pos);
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(line_no) + ": not a number: '" + cell +
                          "'");
        }
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size())
            throw IoError(path + ":" + std::to_string(line_no) + ": trailing junk in '" + cell +
                          "'");
        vals.push_back(v);
    }
    if (vals.size() != expected)
        throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " columns, found " +
                      std::to_string(vals.size()));
    return vals;
}

}  // namespace detail

inline void save_dataset(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open dataset for writing: " + path);
    f << kDatasetHeader << '\n';
    using dmpc::detail::fmt17;
    for (const Sample& s : samples) {
        f << fmt17(s.state.x) << ',' << fmt17(s.state.y) << ',' << fmt17(s.state.theta) << ','
          << fmt17(s.input.v) << ',' << fmt17(s.input.omega) << ',' << fmt17(s.target.xdot)
          << ',' << fmt17(s.target.ydot) << ',' << fmt17(s.target.thetadot) << '\n';
    }
    f.flush();
    if (!f) throw IoError("failed while writing dataset: " + path);
}

inline std::vector<Sample> load_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty dataset file");
    if (line != kDatasetHeader)
        throw IoError(path + ":1: bad dataset header, expected '" + std::string(kDatasetHeader) +
                      "'");
    std::vector<Sample> samples;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto v = detail::parse_row(line, 8, path, line_no);
        Sample s;
        s.state = {v[0], v[1], v[2]};
        s.input = {v[3], v[4]};
        s.target = {v[5], v[6], v[7]};
        samples.push_back(s);
    }
    return samples;
}

/// Per-epoch training/test loss curves as a two-column-plus-index CSV.
inline void save_loss_history(const std::vector<double>& train_mse,
                              const std::vector<double>& test_mse, const std::string& path) {
    if (train_mse.size() != test_mse.size())
        throw std::invalid_argument("loss history lengths differ");
    std::ofstream f(path);
    if (!f) throw IoError("cannot open loss history for writing: " + path);
    f << "epoch,train_mse,test_mse\n";
    using dmpc::detail::fmt17;
    for (std::size_t i = 0; i < train_mse.size(); ++i)
        f << i << ',' << fmt17(train_mse[i]) << ',' << fmt17(test_mse[i]) << '\n';
    f.flush();
    if (!f) throw IoError("failed while writing loss history: " + path);
}

}  // namespace dmpc::io
