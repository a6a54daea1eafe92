#pragma once

// Marks (cell slope labels), the order a ≺ b, the slope bracket, the triple
// bracket, and finite atomic reference measures.
//
// A mark is a slope vector rho = (rho1, rho2) in [P-, P+]^2 labeling one cell
// of the tessellation. Pairs are ordered by the first component: a ≺ b iff
// b.rho1 > a.rho1. The bracket
//
//     alpha(a, b) = (b.rho2 - a.rho2) / (b.rho1 - a.rho1)
//
// is the slope of the chord between the marks; tessellation edges between the
// cells run parallel to tau = (-alpha, 1), and particles in the dynamics move
// with velocity -alpha. The triple bracket
//
//     sigma(a, m, b) = alpha(m, b) - alpha(a, m)
//
// is the chord convexity defect: sigma >= 0 drives coagulation, sigma < 0
// enables fragmentation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gibbstess {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

struct Mark {
    double rho1 = 0.0;
    double rho2 = 0.0;

    friend bool operator==(const Mark& a, const Mark& b) {
        return a.rho1 == b.rho1 && a.rho2 == b.rho2;
    }
};

// a ≺ b: b lies in the admissible jump region R(a).
inline bool precedes(const Mark& a, const Mark& b) { return b.rho1 > a.rho1; }

// Chord slope [a,b]. Symmetric under argument swap. Degenerate pairs (equal
// first components) have no finite bracket and are rejected.
inline double alpha(const Mark& a, const Mark& b) {
    if (a.rho1 == b.rho1) {
        throw std::invalid_argument("alpha: degenerate pair (equal rho1)");
    }
    return (b.rho2 - a.rho2) / (b.rho1 - a.rho1);
}

// Edge direction tau = (-alpha, 1); orthogonal to b - a by construction and
// never horizontal, so edges always carry an upward time-like arrow.
inline Vec2 tau(const Mark& a, const Mark& b) {
    if (!precedes(a, b)) throw std::invalid_argument("tau: requires a ≺ b");
    return Vec2{-alpha(a, b), 1.0};
}

// Triple bracket sigma(a, m, b) = [m,b] - [a,m] for an ordered triple
// a ≺ m ≺ b.
inline double sigma_triple(const Mark& a, const Mark& m, const Mark& b) {
    if (!precedes(a, m) || !precedes(m, b)) {
        throw std::invalid_argument("sigma_triple: requires a ≺ m ≺ b");
    }
    return alpha(m, b) - alpha(a, m);
}

inline double pos_part(double r) { return r > 0.0 ? r : 0.0; }
inline double neg_part(double r) { return r < 0.0 ? -r : 0.0; }

// Finite atomic reference measure beta = sum_i weights[i] * delta(atoms[i]).
// Atoms are kept sorted by rho1 and must have pairwise distinct rho1, so the
// bracket is finite on every comparable pair and the order ≺ coincides with
// index order.
struct MarkSet {
    std::vector<Mark> atoms;      // sorted ascending by rho1
    std::vector<double> weights;  // strictly positive beta-masses
    double P_lo = 0.0;            // component bounds: all marks in [P_lo, P_hi]^2
    double P_hi = 0.0;
    bool graph = false;  // atoms lie on the graph of an increasing rho1 -> rho2 map

    std::size_t size() const { return atoms.size(); }

    double total_mass() const {
        double m = 0.0;
        for (double w : weights) m += w;
        return m;
    }

    const Mark& mark(std::size_t i) const { return atoms[i]; }
    double weight(std::size_t i) const { return weights[i]; }

    // Index of an atom equal to m (exact comparison), or npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t index_of(const Mark& m) const {
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (atoms[i] == m) return i;
        }
        return npos;
    }
};

// Validating factory. Sorts atoms by rho1 (keeping weights aligned) and
// enforces the invariants: distinct rho1, positive weights, bounds, and the
// graph (monotone rho2) property when requested.
inline MarkSet make_mark_set(std::vector<Mark> atoms, std::vector<double> weights,
                             double P_lo, double P_hi, bool graph = false) {
    if (atoms.empty()) throw std::invalid_argument("mark set: no atoms");
    if (atoms.size() != weights.size()) {
        throw std::invalid_argument("mark set: atoms/weights size mismatch");
    }
    if (!(P_lo < P_hi)) throw std::invalid_argument("mark set: requires P_lo < P_hi");

    std::vector<std::size_t> order(atoms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return atoms[i].rho1 < atoms[j].rho1;
    });

    MarkSet ms;
    ms.P_lo = P_lo;
    ms.P_hi = P_hi;
    ms.graph = graph;
    ms.atoms.reserve(atoms.size());
    ms.weights.reserve(atoms.size());
    for (std::size_t i : order) {
        ms.atoms.push_back(atoms[i]);
        ms.weights.push_back(weights[i]);
    }
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const Mark& m = ms.atoms[i];
        if (!(ms.weights[i] > 0.0)) {
            throw std::invalid_argument("mark set: weights must be positive");
        }
        if (m.rho1 < P_lo || m.rho1 > P_hi || m.rho2 < P_lo || m.rho2 > P_hi) {
            throw std::invalid_argument("mark set: atom outside [P_lo, P_hi]^2");
        }
        if (i > 0) {
            if (ms.atoms[i - 1].rho1 == m.rho1) {
                throw std::invalid_argument("mark set: atoms must have distinct rho1");
            }
            if (graph && ms.atoms[i - 1].rho2 >= m.rho2) {
                throw std::invalid_argument("mark set: graph property needs increasing rho2");
            }
        }
    }
    return ms;
}

// Integration region over the atoms, relative to one or two reference marks:
//   R(rho):    marks strictly above rho    (rho ≺ ·)
//   L(rho):    marks strictly below rho    (· ≺ rho)
//   D(a, b):   marks strictly between      (a ≺ · ≺ b)
struct Region {
    enum Kind { RightOf, LeftOf, Between } kind;
    Mark lo;  // RightOf: the lower mark; LeftOf: the upper mark; Between: lower
    Mark hi;  // Between only

    static Region right_of(const Mark& m) { return Region{RightOf, m, m}; }
    static Region left_of(const Mark& m) { return Region{LeftOf, m, m}; }
    static Region between(const Mark& a, const Mark& b) { return Region{Between, a, b}; }

    bool contains(const Mark& m) const {
        switch (kind) {
            case RightOf: return precedes(lo, m);
            case LeftOf: return precedes(m, lo);
            case Between: return precedes(lo, m) && precedes(m, hi);
        }
        return false;
    }
};

// Exact beta-integral of fn over the atoms in a region (finite weighted sum).
inline double beta_integrate(const MarkSet& ms, const std::function<double(const Mark&)>& fn,
                             const Region& region) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (region.contains(ms.atoms[i])) acc += ms.weights[i] * fn(ms.atoms[i]);
    }
    return acc;
}

// Precomputed bracket table over ordered atom pairs (i < j in rho1 order),
// with cone membership flags:
//   in_cone:      |alpha| <= V_inf          (the support cone of admissible kernels)
//   in_plus_cone: additionally alpha >= 0   (the one-sided cone / R0 support)
// Pairs are enumerated row-major: (0,1), (0,2), ..., (0,m-1), (1,2), ...
struct PairTable {
    std::size_t m = 0;
    double V_inf = 0.0;
    std::vector<double> alpha_;
    std::vector<char> in_cone_;
    std::vector<char> in_plus_cone_;

    static PairTable build(const MarkSet& ms, double V_inf) {
        if (!(V_inf > 0.0)) throw std::invalid_argument("pair table: V_inf must be positive");
        PairTable t;
        t.m = ms.size();
        t.V_inf = V_inf;
        const std::size_t np = t.m * (t.m - 1) / 2;
        t.alpha_.resize(np);
        t.in_cone_.resize(np);
        t.in_plus_cone_.resize(np);
        for (std::size_t i = 0; i < t.m; ++i) {
            for (std::size_t j = i + 1; j < t.m; ++j) {
                const std::size_t p = t.index(i, j);
                const double a = alpha(ms.atoms[i], ms.atoms[j]);
                t.alpha_[p] = a;
                t.in_cone_[p] = std::abs(a) <= V_inf ? 1 : 0;
                t.in_plus_cone_[p] = (t.in_cone_[p] && a >= 0.0) ? 1 : 0;
            }
        }
        return t;
    }

    std::size_t npairs() const { return m * (m - 1) / 2; }

    // Row-major index of the ordered pair (i, j), i < j.
    std::size_t index(std::size_t i, std::size_t j) const {
        if (i >= j || j >= m) throw std::out_of_range("pair table: bad ordered pair");
        return i * m - i * (i + 1) / 2 + (j - i - 1);
    }

    double alpha_of(std::size_t i, std::size_t j) const { return alpha_[index(i, j)]; }
    bool in_cone(std::size_t i, std::size_t j) const { return in_cone_[index(i, j)] != 0; }
    bool in_plus_cone(std::size_t i, std::size_t j) const {
        return in_plus_cone_[index(i, j)] != 0;
    }
};

}  // namespace gibbstess
