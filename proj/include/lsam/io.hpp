#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsam/error.hpp"
#include "lsam/markov.hpp"
#include "lsam/matrix.hpp"
#include "lsam/schedule.hpp"
#include "lsam/td.hpp"

namespace lsam::io {

using nlohmann::json;

// Fixed 17-significant-digit formatting keeps CSV bodies byte-identical
// across reruns; shortest-round-trip formatting would too, but this matches
// the documented column contract.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, std::vector<std::string> columns)
        : columns_(std::move(columns)), out_(path, std::ios::binary) {
        if (!out_) throw Error(ErrorCode::IoError, "cannot open " + path);
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns_[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_.size())
            throw Error(ErrorCode::IoError, "column count mismatch in CSV row");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    const std::vector<std::string>& columns() const { return columns_; }

    static std::string num(double v) { return format_number(v); }
    static std::string integer(long v) { return std::to_string(v); }
    static std::string boolean(bool v) { return v ? "1" : "0"; }

  private:
    std::vector<std::string> columns_;
    std::ofstream out_;
};

// ---- JSON decoding of the shared payloads ----

inline Matrix parse_matrix(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw Error(ErrorCode::ConfigInvalid, what + " must be a non-empty array of arrays");
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (j[i].size() != cols)
            throw Error(ErrorCode::ConfigInvalid, what + " has ragged rows");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number())
                throw Error(ErrorCode::ConfigInvalid, what + " has a non-numeric entry");
            m(i, c) = j[i][c].get<double>();
        }
    }
    return m;
}

inline Vector parse_vector(const json& j, const std::string& what) {
    if (!j.is_array()) throw Error(ErrorCode::ConfigInvalid, what + " must be an array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw Error(ErrorCode::ConfigInvalid, what + " has a non-numeric entry");
        v[i] = j[i].get<double>();
    }
    return v;
}

inline markov::MarkovNoiseModel parse_model(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "model must be an object");
    if (!j.contains("transition") || !j.contains("A") || !j.contains("b"))
        throw Error(ErrorCode::ConfigInvalid, "model needs transition, A, and b");
    markov::FiniteChain chain(parse_matrix(j.at("transition"), "model.transition"));
    std::vector<Matrix> a;
    for (const auto& e : j.at("A")) a.push_back(parse_matrix(e, "model.A[i]"));
    std::vector<Vector> b;
    for (const auto& e : j.at("b")) b.push_back(parse_vector(e, "model.b[i]"));
    return markov::MarkovNoiseModel(std::move(chain), std::move(a), std::move(b));
}

inline td::TdProblem parse_problem(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "problem must be an object");
    for (const char* key : {"transition", "rewards", "discount", "features", "lambda"})
        if (!j.contains(key))
            throw Error(ErrorCode::ConfigInvalid, std::string("problem needs ") + key);
    return td::TdProblem(markov::FiniteChain(parse_matrix(j.at("transition"), "problem.transition")),
                         parse_vector(j.at("rewards"), "problem.rewards"),
                         j.at("discount").get<double>(),
                         parse_matrix(j.at("features"), "problem.features"),
                         j.at("lambda").get<double>());
}

inline sim::StepSchedule parse_schedule(const json& j, std::size_t horizon) {
    if (!j.is_object() || !j.contains("kind"))
        throw Error(ErrorCode::ConfigInvalid, "schedule needs a kind");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") return sim::StepSchedule::constant(j.at("epsilon").get<double>());
    if (kind == "sequence")
        return sim::StepSchedule::sequence(parse_vector(j.at("epsilons"), "schedule.epsilons"));
    if (kind == "polynomial")
        return sim::StepSchedule::polynomial(j.at("epsilon0").get<double>(),
                                             j.at("power").get<double>(), horizon);
    throw Error(ErrorCode::ConfigInvalid, "unknown schedule kind '" + kind + "'");
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace lsam::io
