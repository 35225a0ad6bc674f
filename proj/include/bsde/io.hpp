#pragma once

// JSON documents for trees, drivers, terminal conditions and static maps.
// Every document carries "schema_version": 1 and a "kind".

#include "bsde/static2dyn.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bsde::io {

using nlohmann::json;

inline constexpr int schema_version = 1;

inline Error parse_error(const std::string& where, const std::string& what) {
    return Error(ErrorCode::ParseError, where + ": " + what);
}

inline json parse_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw parse_error(source + " byte " + std::to_string(e.byte), e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json load(const std::string& path) { return parse_text(read_file(path), path); }

/// Walks a JSON value while remembering the pointer for error messages.
class Node {
public:
    Node(const json& j, std::string source, std::string pointer = "")
        : j_(&j), source_(std::move(source)), ptr_(std::move(pointer)) {}

    const json& raw() const { return *j_; }
    std::string where() const { return source_ + (ptr_.empty() ? "" : " at " + ptr_); }
    [[noreturn]] void fail(const std::string& what) const { throw parse_error(where(), what); }

    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }
    Node operator[](const std::string& key) const {
        if (!j_->is_object()) fail("expected an object");
        if (!j_->contains(key)) fail("missing field '" + key + "'");
        return Node(j_->at(key), source_, ptr_ + "/" + key);
    }
    Node operator[](std::size_t i) const {
        if (!j_->is_array() || i >= j_->size()) fail("index " + std::to_string(i) + " out of range");
        return Node(j_->at(i), source_, ptr_ + "/" + std::to_string(i));
    }
    std::size_t size() const {
        if (!j_->is_array()) fail("expected an array");
        return j_->size();
    }
    double number() const {
        if (!j_->is_number()) fail("expected a number");
        return j_->get<double>();
    }
    int integer() const {
        if (!j_->is_number_integer()) fail("expected an integer");
        return j_->get<int>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) fail("expected a boolean");
        return j_->get<bool>();
    }
    std::string string() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }
    std::vector<double> numbers() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].number());
        return out;
    }
    std::vector<int> integers() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].integer());
        return out;
    }
    Vector vector() const {
        const auto v = numbers();
        return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    Matrix matrix() const {
        const std::size_t r = size();
        if (r == 0) return Matrix(0, 0);
        const std::size_t c = (*this)[0].size();
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            const auto row = (*this)[i].numbers();
            if (row.size() != c) (*this)[i].fail("ragged matrix row");
            for (std::size_t k = 0; k < c; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
        }
        return m;
    }
    double number_or(const std::string& key, double def) const { return has(key) ? (*this)[key].number() : def; }

    void expect_kind(const std::string& kind) const {
        const int v = (*this)["schema_version"].integer();
        if (v != schema_version) (*this)["schema_version"].fail("unsupported schema_version " + std::to_string(v));
        const std::string k = (*this)["kind"].string();
        if (k != kind) (*this)["kind"].fail("expected kind '" + kind + "', got '" + k + "'");
    }

private:
    const json* j_;
    std::string source_;
    std::string ptr_;
};

inline TreeSpec parse_tree_spec(const Node& n) {
    n.expect_kind("tree");
    TreeSpec spec;
    spec.n_states = n["n_states"].integer();
    spec.horizon = n["horizon"].integer();
    spec.initial_state = n.has("initial_state") ? n["initial_state"].integer() : 0;
    if (n.has("markov_matrix")) {
        const Node m = n["markov_matrix"];
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < m.size(); ++i) rows.push_back(m[i].numbers());
        spec.markov_matrix = rows;
    }
    if (n.has("kernel_rows")) {
        const Node rows = n["kernel_rows"];
        for (std::size_t i = 0; i < rows.size(); ++i) spec.kernel_rows[rows[i]["path"].integers()] = rows[i]["row"].numbers();
    }
    return spec;
}

inline ScenarioTree parse_tree(const Node& n) {
    const TreeSpec spec = parse_tree_spec(n);
    try {
        return build_tree(spec);
    } catch (const Error& e) {
        n.fail(e.what());
    }
}

inline Driver parse_driver(const Node& n, int n_states) {
    n.expect_kind("driver");
    const std::string type = n["type"].string();
    const int dim = n.has("dim") ? n["dim"].integer() : 1;
    if (dim < 1) n["dim"].fail("dimension must be positive");
    const Node p = n.has("params") ? n["params"] : n;
    Driver d;
    try {
        if (type == "zero") {
            d = drivers::zero(dim);
        } else if (type == "linear") {
            drivers::LinearParams lp;
            lp.a = p.has("a") ? p["a"].matrix() : Matrix(Matrix::Zero(dim, dim));
            lp.f = p.has("f") ? p["f"].vector() : Vector(Vector::Zero(dim));
            if (p.has("c")) lp.c = p["c"].numbers();
            d = drivers::linear(std::move(lp));
        } else if (type == "tilt") {
            const std::string side = p.has("side") ? p["side"].string() : "min";
            if (side != "min" && side != "max") p["side"].fail("side must be 'min' or 'max'");
            d = drivers::tilt(dim, p["gamma"].number(), side == "min" ? drivers::TiltKind::Min : drivers::TiltKind::Max);
        } else if (type == "entropic") {
            d = drivers::entropic(dim, p["theta"].number());
        } else if (type == "sine") {
            d = drivers::sine(p["alpha"].vector(), p["f"].vector(), p.number_or("gamma", 0.0));
        } else if (type == "tabular") {
            drivers::TabularParams tp;
            const Node axes = p["axes"];
            for (std::size_t i = 0; i < axes.size(); ++i) tp.axes.push_back(axes[i].numbers());
            tp.values = p["values"].numbers();
            tp.y_independent = p.has("y_independent") && p["y_independent"].boolean();
            tp.normalized = p.has("normalized") && p["normalized"].boolean();
            d = drivers::tabular(std::move(tp), n_states);
        } else {
            n["type"].fail("unknown driver type '" + type + "'");
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) throw;
        n.fail(e.what());
    }
    if (n.has("shift")) d = drivers::shifted(std::move(d), n["shift"].vector());
    if (d.dim != dim && n.has("dim")) n["dim"].fail("dimension disagrees with the parameters");
    return d;
}

/// Terminal (or any-time) slice: "values" lists one entry per atom in lexicographic
/// path order; each entry is a number (K = 1) or an array.
inline Slice parse_slice(const Node& n, const ScenarioTree& tree, int time) {
    const Node values = n["values"];
    const std::size_t expected = tree.level_size(time);
    if (values.size() != expected)
        values.fail("expected " + std::to_string(expected) + " values, got " + std::to_string(values.size()));
    Slice s{time, {}};
    int dim = -1;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Node v = values[i];
        Vector x = v.raw().is_array() ? v.vector() : Vector(Vector::Constant(1, v.number()));
        if (dim >= 0 && x.size() != dim) v.fail("inconsistent value dimension");
        dim = static_cast<int>(x.size());
        s.values.push_back(std::move(x));
    }
    return s;
}

inline Slice parse_terminal(const Node& n, const ScenarioTree& tree) {
    n.expect_kind("terminal");
    return parse_slice(n, tree, tree.horizon());
}

inline StaticExpectation parse_static(const Node& n, const ScenarioTree& tree) {
    n.expect_kind("static");
    const std::string type = n["type"].string();
    StaticParams params;
    StaticKind kind;
    if (type == "expectation") {
        kind = StaticKind::Expectation;
        if (n.has("weights")) params.weights = n["weights"].numbers();
    } else if (type == "essinf") {
        kind = StaticKind::Essinf;
    } else if (type == "mixture") {
        kind = StaticKind::Mixture;
        params.alpha = n["alpha"].number();
    } else if (type == "entropic") {
        kind = StaticKind::Entropic;
        params.gamma = n["gamma"].number();
    } else {
        n["type"].fail("unknown static map '" + type + "'");
    }
    try {
        return builtin_static(tree, kind, params);
    } catch (const Error& e) {
        n.fail(e.what());
    }
}

}  // namespace bsde::io
