#pragma once

#include "triscale/types.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace triscale::jsonio {

using nlohmann::json;

inline json matrix_json(const Eigen::MatrixXd &m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from(const json &j) {
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(j[static_cast<std::size_t>(i)].size()) != cols) throw ConfigError("ragged matrix");
        for (Index k = 0; k < cols; ++k) m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

inline Eigen::VectorXd vector_from(const json &j) {
    Eigen::VectorXd v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

inline json vector_json(const Eigen::VectorXd &v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string &path, const std::string &text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << text << '\n';
}

} // namespace triscale::jsonio
