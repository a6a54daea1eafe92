#pragma once

// JSON (de)serialization for the on-disk document formats.
//
// Kernel documents:
//   {"P":[lo,hi], "V_inf":v, "delta0":d, "atoms":[[rho1,rho2,w],...],
//    "grid":{"x0":..,"dx":..,"n":..}, "slices":[{"t":..,"values":[...]}]}
// with slice values row-major over grid nodes then ordered pairs in
// atom-index order ((0,1),(0,2),...,(1,2),...). An optional "graph": true
// asserts the atoms lie on an increasing rho1 -> rho2 graph.
//
// Marginal-field documents use the same layout with per-mark values
// (row-major over nodes then atoms) plus a "floor" field.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernel.hpp"
#include "marks.hpp"

namespace gibbstess {

using json = nlohmann::json;

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

inline void save_json(const std::string& path, const json& j, int indent = 1) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(indent) << '\n';
}

namespace detail {

inline const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw std::runtime_error(std::string("missing JSON key \"") + key + '"');
    return *it;
}

inline Grid1D grid_from_json(const json& j) {
    Grid1D g;
    g.x0 = require(j, "x0").get<double>();
    g.dx = require(j, "dx").get<double>();
    g.n = require(j, "n").get<std::size_t>();
    return g;
}

inline json grid_to_json(const Grid1D& g) {
    return json{{"x0", g.x0}, {"dx", g.dx}, {"n", g.n}};
}

inline MarkSet mark_set_from_json(const json& j) {
    const json& P = require(j, "P");
    if (!P.is_array() || P.size() != 2) throw std::runtime_error("\"P\" must be [lo, hi]");
    const json& atoms_j = require(j, "atoms");
    std::vector<Mark> atoms;
    std::vector<double> weights;
    for (const json& a : atoms_j) {
        if (!a.is_array() || a.size() != 3) {
            throw std::runtime_error("each atom must be [rho1, rho2, weight]");
        }
        atoms.push_back(Mark{a[0].get<double>(), a[1].get<double>()});
        weights.push_back(a[2].get<double>());
    }
    const bool graph = j.value("graph", false);
    return make_mark_set(std::move(atoms), std::move(weights), P[0].get<double>(),
                         P[1].get<double>(), graph);
}

inline void mark_set_to_json(const MarkSet& ms, json& j) {
    j["P"] = json::array({ms.P_lo, ms.P_hi});
    json atoms = json::array();
    for (std::size_t i = 0; i < ms.size(); ++i) {
        atoms.push_back(json::array({ms.atoms[i].rho1, ms.atoms[i].rho2, ms.weights[i]}));
    }
    j["atoms"] = std::move(atoms);
    if (ms.graph) j["graph"] = true;
}

inline void slices_from_json(const json& j, std::size_t values_per_slice,
                             std::vector<double>& t_slices,
                             std::vector<std::vector<double>>& values) {
    const json& slices = require(j, "slices");
    t_slices.clear();
    values.clear();
    for (const json& s : slices) {
        t_slices.push_back(require(s, "t").get<double>());
        const json& v = require(s, "values");
        if (v.size() != values_per_slice) {
            std::ostringstream msg;
            msg << "slice at t=" << t_slices.back() << " has " << v.size() << " values, expected "
                << values_per_slice;
            throw std::runtime_error(msg.str());
        }
        values.push_back(v.get<std::vector<double>>());
    }
    if (t_slices.empty()) throw std::runtime_error("document has no slices");
}

inline json slices_to_json(const std::vector<double>& t_slices,
                           const std::vector<std::vector<double>>& values) {
    json slices = json::array();
    for (std::size_t s = 0; s < t_slices.size(); ++s) {
        slices.push_back(json{{"t", t_slices[s]}, {"values", values[s]}});
    }
    return slices;
}

}  // namespace detail

inline Kernel kernel_from_json(const json& j) {
    Kernel k;
    k.marks = detail::mark_set_from_json(j);
    k.V_inf = detail::require(j, "V_inf").get<double>();
    k.delta0 = detail::require(j, "delta0").get<double>();
    k.pairs = PairTable::build(k.marks, k.V_inf);
    k.grid = detail::grid_from_json(detail::require(j, "grid"));
    detail::slices_from_json(j, k.grid.n * k.npairs(), k.t_slices, k.values);
    k.validate();
    return k;
}

inline json kernel_to_json(const Kernel& k) {
    json j;
    detail::mark_set_to_json(k.marks, j);
    j["V_inf"] = k.V_inf;
    j["delta0"] = k.delta0;
    j["grid"] = detail::grid_to_json(k.grid);
    j["slices"] = detail::slices_to_json(k.t_slices, k.values);
    return j;
}

inline Kernel load_kernel(const std::string& path) { return kernel_from_json(load_json(path)); }
inline void save_kernel(const std::string& path, const Kernel& k) {
    save_json(path, kernel_to_json(k));
}

inline MarginalField marginal_from_json(const json& j) {
    MarginalField f;
    f.marks = detail::mark_set_from_json(j);
    f.V_inf = detail::require(j, "V_inf").get<double>();
    f.grid = detail::grid_from_json(detail::require(j, "grid"));
    detail::slices_from_json(j, f.grid.n * f.nmarks(), f.t_slices, f.values);
    f.floor = j.value("floor", 0.0);
    f.validate();
    return f;
}

inline json marginal_to_json(const MarginalField& f) {
    json j;
    detail::mark_set_to_json(f.marks, j);
    j["V_inf"] = f.V_inf;
    j["grid"] = detail::grid_to_json(f.grid);
    j["slices"] = detail::slices_to_json(f.t_slices, f.values);
    j["floor"] = f.floor;
    return j;
}

inline MarginalField load_marginal(const std::string& path) {
    return marginal_from_json(load_json(path));
}
inline void save_marginal(const std::string& path, const MarginalField& f) {
    save_json(path, marginal_to_json(f));
}

}  // namespace gibbstess
