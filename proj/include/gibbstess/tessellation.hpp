#pragma once

// Planar tessellation geometry for the particle dynamics.
//
// A trajectory of the interacting particle system sweeps out a tessellation of
// the space-time box [a_lo, a_hi] x [t0, t1]: the first coordinate is the
// spatial position x1, the second is time. Cells are the maximal connected
// regions where the mark profile rho(x1, t) is constant, edges are the
// straight particle paths with direction tau = (-alpha, 1), and interior
// vertices are the coagulation / fragmentation points where three cells meet.
//
// The same structure arises as the Laguerre diagram of a piecewise linear
// convex function g: each mark rho owns the region where the affine function
// x . rho - g*(rho) achieves the maximum. This header provides both
// constructions plus the operations tying them together:
//
//   build_tessellation  trajectory -> cells / edges / vertices
//   validate_generic    geometric invariants (tiling, orthogonality,
//                       orientation, degree-3 vertices)
//   slice               1-d mark profile along a horizontal or vertical line
//   reconstruct_g       integrate the profile back to a height function,
//                       reporting the curl (gradient-consistency) defect
//   legendre_transform  recompute intercepts as a finite Legendre transform
//   hopf_evolve         shift intercepts by -t H(rho) and prune
//   hopf_lax_value      direct variational value sup_y { g(y) - t L((y-x)/t) }
//   laguerre_cells      half-plane clipping of a piecewise linear convex
//                       function into its cell diagram

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "gibbstess/marks.hpp"
#include "gibbstess/sampler.hpp"

namespace gibbstess {

// ---------------------------------------------------------------------------
// Planar primitives
// ---------------------------------------------------------------------------

// Axis-aligned box in the (x1, t) plane.
struct Box2 {
    double x_lo = 0.0;
    double x_hi = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;

    double width() const { return x_hi - x_lo; }
    double height() const { return t_hi - t_lo; }
    double area() const { return width() * height(); }
    double diameter() const { return std::hypot(width(), height()); }

    bool valid() const {
        return std::isfinite(x_lo) && std::isfinite(x_hi) && std::isfinite(t_lo) &&
               std::isfinite(t_hi) && x_lo < x_hi && t_lo < t_hi;
    }

    bool contains(Vec2 p, double tol = 0.0) const {
        return p.x >= x_lo - tol && p.x <= x_hi + tol && p.y >= t_lo - tol && p.y <= t_hi + tol;
    }

    bool on_boundary(Vec2 p, double tol) const {
        if (!contains(p, tol)) return false;
        return std::abs(p.x - x_lo) <= tol || std::abs(p.x - x_hi) <= tol ||
               std::abs(p.y - t_lo) <= tol || std::abs(p.y - t_hi) <= tol;
    }

    std::vector<Vec2> corners() const {
        return {Vec2{x_lo, t_lo}, Vec2{x_hi, t_lo}, Vec2{x_hi, t_hi}, Vec2{x_lo, t_hi}};
    }

    Box2 padded(double pad) const { return Box2{x_lo - pad, x_hi + pad, t_lo - pad, t_hi + pad}; }
};

// Signed area of a polygon (positive for counterclockwise loops).
inline double polygon_area(const std::vector<Vec2>& poly) {
    double twice = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        twice += p.x * q.y - q.x * p.y;
    }
    return 0.5 * twice;
}

inline Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
    const double a = polygon_area(poly);
    if (std::abs(a) < 1e-300) {
        Vec2 c{0.0, 0.0};
        for (const Vec2& p : poly) {
            c.x += p.x;
            c.y += p.y;
        }
        const double n = static_cast<double>(std::max<std::size_t>(poly.size(), 1));
        return Vec2{c.x / n, c.y / n};
    }
    double cx = 0.0, cy = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        const double w = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    return Vec2{cx / (6.0 * a), cy / (6.0 * a)};
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double s = 0.0;
    if (len2 > 0.0) {
        s = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
        s = std::clamp(s, 0.0, 1.0);
    }
    return std::hypot(p.x - (a.x + s * dx), p.y - (a.y + s * dy));
}

inline double point_polygon_boundary_distance(Vec2 p, const std::vector<Vec2>& poly) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
    }
    return best;
}

// Even-odd ray-casting membership test; points within tol of the boundary
// count as inside.
inline bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly, double tol = 0.0) {
    if (poly.size() < 3) return false;
    if (tol > 0.0 && point_polygon_boundary_distance(p, poly) <= tol) return true;
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xcross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < xcross) inside = !inside;
        }
    }
    return inside;
}

// Clips a polygon to the closed half-plane { x : x . normal >= offset }
// (Sutherland-Hodgman step). Returns an empty polygon when nothing survives.
inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, Vec2 normal,
                                        double offset) {
    std::vector<Vec2> out;
    const std::size_t n = poly.size();
    if (n == 0) return out;
    out.reserve(n + 2);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const double ha = dot(a, normal) - offset;
        const double hb = dot(b, normal) - offset;
        if (ha >= 0.0) out.push_back(a);
        if ((ha > 0.0 && hb < 0.0) || (ha < 0.0 && hb > 0.0)) {
            const double s = ha / (ha - hb);
            out.push_back(Vec2{a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)});
        }
    }
    return out;
}

// Removes consecutive duplicate points (within tol) from a closed loop.
inline std::vector<Vec2> dedup_loop(std::vector<Vec2> poly, double tol) {
    std::vector<Vec2> out;
    out.reserve(poly.size());
    for (const Vec2& p : poly) {
        if (!out.empty() && std::abs(out.back().x - p.x) <= tol &&
            std::abs(out.back().y - p.y) <= tol) {
            continue;
        }
        out.push_back(p);
    }
    while (out.size() > 1 && std::abs(out.front().x - out.back().x) <= tol &&
           std::abs(out.front().y - out.back().y) <= tol) {
        out.pop_back();
    }
    return out;
}

// Symmetric vertex-to-boundary distance between two polygons. For the nearly
// identical convex cells this is used on, it agrees with the boundary
// Hausdorff distance to within the tolerance it is tested against.
inline double polygon_hausdorff(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("hausdorff: empty polygon");
    }
    double worst = 0.0;
    for (const Vec2& p : a) worst = std::max(worst, point_polygon_boundary_distance(p, b));
    for (const Vec2& p : b) worst = std::max(worst, point_polygon_boundary_distance(p, a));
    return worst;
}

// ---------------------------------------------------------------------------
// Tessellation data model
// ---------------------------------------------------------------------------

struct TessCell {
    Mark mark;
    std::vector<Vec2> poly;  // counterclockwise, no repeated consecutive points
};

// Interior vertices are classified by what happens as time increases: two
// edges merging into one (coagulation) or one edge splitting (fragmentation).
// Window-boundary endpoints (creations, wall exits, horizon cuts) are labeled
// Boundary and exempt from the degree-3 requirement. Meeting is used for
// vertices of diagrams built without event information.
enum class VertexKind { Coagulation, Fragmentation, Boundary, Meeting };

inline const char* vertex_kind_label(VertexKind k) {
    switch (k) {
        case VertexKind::Coagulation: return "coag";
        case VertexKind::Fragmentation: return "frag";
        case VertexKind::Boundary: return "boundary";
        case VertexKind::Meeting: return "meeting";
    }
    return "?";
}

struct TessVertex {
    Vec2 p;
    std::vector<Mark> marks;  // incident cell marks, ascending rho1
    VertexKind kind = VertexKind::Meeting;
};

// An edge separates the cell of the lower mark (left of the segment) from the
// cell of the upper mark (right). Segments are stored with p0 at the earlier
// time, so the direction p1 - p0 is parallel to tau(lo, hi) = (-alpha, 1).
struct TessEdge {
    Mark lo;  // lo ≺ hi (ties in rho1 broken by rho2 for hand-built diagrams)
    Mark hi;
    Vec2 p0;
    Vec2 p1;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t left_cell = npos;   // index into Tessellation::cells, or npos
    std::size_t right_cell = npos;

    double length() const { return std::hypot(p1.x - p0.x, p1.y - p0.y); }
};

struct Tessellation {
    std::vector<TessCell> cells;
    std::vector<TessEdge> edges;
    std::vector<TessVertex> vertices;
    Box2 window;
};

// ---------------------------------------------------------------------------
// Trajectory -> tessellation
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kGeomTol = 1e-9;

// Growing record of one cell: the bottom extent at birth, then corner points
// pushed onto the left/right boundary whenever the bounding edge changes.
struct OpenCell {
    std::size_t out_index;  // slot reserved in the output cell list
    std::vector<Vec2> bottom;     // birth extent, left to right (1 or 2 points)
    std::vector<Vec2> left_pts;   // corners on the left boundary, bottom to top
    std::vector<Vec2> right_pts;  // corners on the right boundary, bottom to top
};

struct OpenEdge {
    std::size_t lo = 0;  // atom indices of the separated cells
    std::size_t hi = 0;
    Vec2 start;
    std::size_t left_cell = TessEdge::npos;
    std::size_t right_cell = TessEdge::npos;
};

inline std::vector<Vec2> close_cell_polygon(const OpenCell& oc, const std::vector<Vec2>& top,
                                            double tol) {
    std::vector<Vec2> poly = oc.bottom;
    poly.insert(poly.end(), oc.right_pts.begin(), oc.right_pts.end());
    poly.insert(poly.end(), top.rbegin(), top.rend());
    poly.insert(poly.end(), oc.left_pts.rbegin(), oc.left_pts.rend());
    return dedup_loop(std::move(poly), tol);
}

[[noreturn]] inline void corrupt(const std::string& what) {
    throw std::runtime_error("tessellation: trajectory inconsistent across an event (" + what +
                             ")");
}

}  // namespace detail

// Replays a trajectory into the tessellation of its space-time box, clipped to
// `window` when one is given. Cells appear in birth order (initial profile
// left to right, then one per fragmentation / creation); edges in creation
// order; vertices in event order. Throws if the event log does not match the
// recorded states (corrupt or hand-mangled logs).
inline Tessellation build_tessellation(const Trajectory& traj, const MarkSet& ms,
                                       const PairTable& pt, const Box2* window = nullptr) {
    traj.log.validate();
    traj.initial.validate(ms);
    if (traj.log.records.size() != traj.states.size()) {
        detail::corrupt("record/state count mismatch");
    }

    const double a_lo = traj.initial.a_lo;
    const double a_hi = traj.initial.a_hi;
    const double t0 = traj.initial.t;
    const double t1 = traj.last.t;
    const Box2 box{a_lo, a_hi, t0, t1};
    if (!box.valid()) {
        throw std::invalid_argument("tessellation: degenerate space-time box");
    }
    const double scale = std::max({std::abs(a_lo), std::abs(a_hi), std::abs(t0), std::abs(t1),
                                   1.0});
    const double tol = detail::kGeomTol * scale;

    Tessellation out;
    out.window = box;

    // --- replay state ---------------------------------------------------
    ParticleConfig cur = traj.initial;
    std::vector<detail::OpenEdge> oe;
    std::vector<detail::OpenCell> oc;

    auto velocity = [&](const ParticleConfig& q, std::size_t k) {
        return -pt.alpha_of(q.labels[k], q.labels[k + 1]);
    };
    auto advected = [&](const ParticleConfig& q, double t) {
        std::vector<double> z(q.n());
        for (std::size_t k = 0; k < q.n(); ++k) z[k] = q.z[k] + velocity(q, k) * (t - q.t);
        return z;
    };

    auto new_cell = [&](const Mark& mark, std::vector<Vec2> bottom) {
        detail::OpenCell cell;
        cell.out_index = out.cells.size();
        cell.bottom = std::move(bottom);
        out.cells.push_back(TessCell{mark, {}});
        return cell;
    };
    auto close_cell = [&](const detail::OpenCell& cell, const std::vector<Vec2>& top) {
        std::vector<Vec2> poly = detail::close_cell_polygon(cell, top, 1e-12 * scale);
        if (poly.size() >= 3 && std::abs(polygon_area(poly)) > 1e-15 * scale * scale) {
            out.cells[cell.out_index].poly = std::move(poly);
        }
    };
    auto close_edge = [&](const detail::OpenEdge& e, Vec2 end) {
        if (std::hypot(end.x - e.start.x, end.y - e.start.y) <= 1e-12 * scale) return;
        TessEdge edge;
        edge.lo = ms.mark(e.lo);
        edge.hi = ms.mark(e.hi);
        edge.p0 = e.start;
        edge.p1 = end;
        edge.left_cell = e.left_cell;
        edge.right_cell = e.right_cell;
        out.edges.push_back(edge);
    };

    // Initial profile: n particles bound n+1 cells along the bottom side.
    for (std::size_t i = 0; i + 1 < cur.labels.size() + 1; ++i) {
        const double zl = (i == 0) ? a_lo : cur.z[i - 1];
        const double zr = (i == cur.n()) ? a_hi : cur.z[i];
        oc.push_back(new_cell(ms.mark(cur.labels[i]), {Vec2{zl, t0}, Vec2{zr, t0}}));
    }
    for (std::size_t k = 0; k < cur.n(); ++k) {
        oe.push_back(detail::OpenEdge{cur.labels[k], cur.labels[k + 1], Vec2{cur.z[k], t0},
                                      oc[k].out_index, oc[k + 1].out_index});
    }

    // --- event replay -----------------------------------------------------
    for (std::size_t r = 0; r < traj.log.records.size(); ++r) {
        const Event& rec = traj.log.records[r];
        const ParticleConfig& post = traj.states[r];
        const double te = rec.t;
        if (te < cur.t - tol || te > t1 + tol) detail::corrupt("event time outside the box");
        const std::vector<double> z = advected(cur, te);
        std::vector<double> ez = z;  // structural update, checked against the state
        const Vec2 P{rec.z, te};

        switch (rec.kind) {
            case Event::Kind::Fragment: {
                if (rec.marks.size() != 3) detail::corrupt("fragment arity");
                std::size_t k = cur.n();
                for (std::size_t i = 0; i < cur.n(); ++i) {
                    if (cur.labels[i] == rec.marks[0] && cur.labels[i + 1] == rec.marks[2] &&
                        std::abs(z[i] - rec.z) <= tol) {
                        k = i;
                        break;
                    }
                }
                if (k == cur.n()) detail::corrupt("fragment pair not found in the chain");
                close_edge(oe[k], P);
                out.vertices.push_back(TessVertex{
                    P,
                    {ms.mark(rec.marks[0]), ms.mark(rec.marks[1]), ms.mark(rec.marks[2])},
                    VertexKind::Fragmentation});
                detail::OpenCell star = new_cell(ms.mark(rec.marks[1]), {P});
                oc[k].right_pts.push_back(P);
                oc[k + 1].left_pts.push_back(P);
                const detail::OpenEdge left{rec.marks[0], rec.marks[1], P, oc[k].out_index,
                                            star.out_index};
                const detail::OpenEdge right{rec.marks[1], rec.marks[2], P, star.out_index,
                                             oc[k + 1].out_index};
                oe[k] = left;
                oe.insert(oe.begin() + static_cast<std::ptrdiff_t>(k) + 1, right);
                oc.insert(oc.begin() + static_cast<std::ptrdiff_t>(k) + 1, std::move(star));
                ez[k] = rec.z;
                ez.insert(ez.begin() + static_cast<std::ptrdiff_t>(k) + 1, rec.z);
                break;
            }
            case Event::Kind::Coagulate: {
                if (rec.marks.size() != 3) detail::corrupt("coagulation arity");
                std::size_t k = cur.n();
                for (std::size_t i = 0; i + 1 < cur.n(); ++i) {
                    if (cur.labels[i] == rec.marks[0] && cur.labels[i + 1] == rec.marks[1] &&
                        cur.labels[i + 2] == rec.marks[2] && std::abs(z[i] - rec.z) <= tol &&
                        std::abs(z[i + 1] - rec.z) <= tol) {
                        k = i;
                        break;
                    }
                }
                if (k == cur.n()) detail::corrupt("coagulating pair not found in the chain");
                close_edge(oe[k], P);
                close_edge(oe[k + 1], P);
                out.vertices.push_back(TessVertex{
                    P,
                    {ms.mark(rec.marks[0]), ms.mark(rec.marks[1]), ms.mark(rec.marks[2])},
                    VertexKind::Coagulation});
                close_cell(oc[k + 1], {P});
                oc[k].right_pts.push_back(P);
                oc[k + 2].left_pts.push_back(P);
                oe[k] = detail::OpenEdge{rec.marks[0], rec.marks[2], P, oc[k].out_index,
                                         oc[k + 2].out_index};
                oe.erase(oe.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                oc.erase(oc.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                ez[k] = rec.z;
                ez.erase(ez.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                break;
            }
            case Event::Kind::CreateLeft: {
                if (rec.marks.size() != 2 || cur.labels.front() != rec.marks[1] ||
                    std::abs(rec.z - a_lo) > tol) {
                    detail::corrupt("left creation does not extend the chain");
                }
                out.vertices.push_back(
                    TessVertex{P, {ms.mark(rec.marks[0]), ms.mark(rec.marks[1])},
                               VertexKind::Boundary});
                detail::OpenCell star = new_cell(ms.mark(rec.marks[0]), {P});
                oc.front().left_pts.push_back(P);
                oe.insert(oe.begin(), detail::OpenEdge{rec.marks[0], rec.marks[1], P,
                                                       star.out_index, oc.front().out_index});
                oc.insert(oc.begin(), std::move(star));
                ez.insert(ez.begin(), a_lo);
                break;
            }
            case Event::Kind::CreateRight: {
                if (rec.marks.size() != 2 || cur.labels.back() != rec.marks[0] ||
                    std::abs(rec.z - a_hi) > tol) {
                    detail::corrupt("right creation does not extend the chain");
                }
                out.vertices.push_back(
                    TessVertex{P, {ms.mark(rec.marks[0]), ms.mark(rec.marks[1])},
                               VertexKind::Boundary});
                detail::OpenCell star = new_cell(ms.mark(rec.marks[1]), {P});
                oc.back().right_pts.push_back(P);
                oe.push_back(detail::OpenEdge{rec.marks[0], rec.marks[1], P,
                                              oc.back().out_index, star.out_index});
                oc.push_back(std::move(star));
                ez.push_back(a_hi);
                break;
            }
            case Event::Kind::WallExit: {
                if (cur.n() == 0) detail::corrupt("wall exit with no particles");
                const bool left_wall = std::abs(rec.z - a_lo) <= tol;
                const bool right_wall = std::abs(rec.z - a_hi) <= tol;
                if (left_wall == right_wall) detail::corrupt("wall exit off the walls");
                if (left_wall) {
                    if (std::abs(z.front() - a_lo) > tol) detail::corrupt("left exit position");
                    close_edge(oe.front(), P);
                    out.vertices.push_back(
                        TessVertex{P, {ms.mark(cur.labels[0]), ms.mark(cur.labels[1])},
                                   VertexKind::Boundary});
                    close_cell(oc.front(), {P});
                    oc.erase(oc.begin());
                    oe.erase(oe.begin());
                    oc.front().left_pts.push_back(P);
                    ez.erase(ez.begin());
                } else {
                    if (std::abs(z.back() - a_hi) > tol) detail::corrupt("right exit position");
                    close_edge(oe.back(), P);
                    out.vertices.push_back(TessVertex{
                        P,
                        {ms.mark(cur.labels[cur.n() - 1]), ms.mark(cur.labels[cur.n()])},
                        VertexKind::Boundary});
                    close_cell(oc.back(), {P});
                    oc.pop_back();
                    oe.pop_back();
                    oc.back().right_pts.push_back(P);
                    ez.pop_back();
                }
                break;
            }
        }

        // Cross-check the replay against the recorded post-event state, then
        // adopt it verbatim so floating-point drift cannot accumulate.
        if (post.labels.size() != oc.size()) detail::corrupt("label count after event");
        for (std::size_t i = 0; i < oc.size(); ++i) {
            if (out.cells[oc[i].out_index].mark != ms.mark(post.labels[i])) {
                detail::corrupt("label chain after event");
            }
        }
        if (post.z.size() != ez.size()) detail::corrupt("particle count after event");
        for (std::size_t i = 0; i < ez.size(); ++i) {
            if (std::abs(post.z[i] - ez[i]) > tol) detail::corrupt("positions after event");
        }
        if (std::abs(post.t - te) > tol) detail::corrupt("state time after event");
        cur = post;
    }

    // --- horizon ---------------------------------------------------------
    const std::vector<double> z1 = advected(cur, t1);
    for (std::size_t k = 0; k < cur.n(); ++k) close_edge(oe[k], Vec2{z1[k], t1});
    for (std::size_t i = 0; i < oc.size(); ++i) {
        const double zl = (i == 0) ? a_lo : z1[i - 1];
        const double zr = (i == oc.size() - 1) ? a_hi : z1[i];
        close_cell(oc[i], {Vec2{zl, t1}, Vec2{zr, t1}});
    }

    // Drop cells that never acquired a polygon (zero-area lifetimes), fixing
    // up edge references.
    std::vector<std::size_t> remap(out.cells.size(), TessEdge::npos);
    std::vector<TessCell> kept;
    kept.reserve(out.cells.size());
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
        if (out.cells[i].poly.size() >= 3) {
            remap[i] = kept.size();
            kept.push_back(std::move(out.cells[i]));
        }
    }
    out.cells = std::move(kept);
    for (TessEdge& e : out.edges) {
        e.left_cell = (e.left_cell == TessEdge::npos) ? TessEdge::npos : remap[e.left_cell];
        e.right_cell = (e.right_cell == TessEdge::npos) ? TessEdge::npos : remap[e.right_cell];
    }

    // --- optional crop -----------------------------------------------------
    if (window != nullptr) {
        const Box2& w = *window;
        if (!w.valid()) throw std::invalid_argument("tessellation: degenerate window");
        const bool same = std::abs(w.x_lo - box.x_lo) <= tol &&
                          std::abs(w.x_hi - box.x_hi) <= tol &&
                          std::abs(w.t_lo - box.t_lo) <= tol &&
                          std::abs(w.t_hi - box.t_hi) <= tol;
        if (!same) {
            Tessellation cropped;
            cropped.window = Box2{std::max(w.x_lo, box.x_lo), std::min(w.x_hi, box.x_hi),
                                  std::max(w.t_lo, box.t_lo), std::min(w.t_hi, box.t_hi)};
            if (!cropped.window.valid()) {
                throw std::invalid_argument("tessellation: window misses the space-time box");
            }
            std::vector<std::size_t> cmap(out.cells.size(), TessEdge::npos);
            for (std::size_t i = 0; i < out.cells.size(); ++i) {
                std::vector<Vec2> poly = out.cells[i].poly;
                poly = clip_halfplane(poly, Vec2{1.0, 0.0}, cropped.window.x_lo);
                poly = clip_halfplane(poly, Vec2{-1.0, 0.0}, -cropped.window.x_hi);
                poly = clip_halfplane(poly, Vec2{0.0, 1.0}, cropped.window.t_lo);
                poly = clip_halfplane(poly, Vec2{0.0, -1.0}, -cropped.window.t_hi);
                poly = dedup_loop(std::move(poly), 1e-12 * scale);
                if (poly.size() >= 3 && std::abs(polygon_area(poly)) > 1e-15 * scale * scale) {
                    cmap[i] = cropped.cells.size();
                    cropped.cells.push_back(TessCell{out.cells[i].mark, std::move(poly)});
                }
            }
            for (const TessEdge& e : out.edges) {
                // Liang-Barsky style parametric clip of the segment.
                double s0 = 0.0, s1 = 1.0;
                const double dx = e.p1.x - e.p0.x;
                const double dy = e.p1.y - e.p0.y;
                // Keeps the parameter range of { s : s * den >= num }.
                auto cut = [&](double num, double den) {
                    if (den == 0.0) return num <= 0.0;
                    const double s = num / den;
                    if (den > 0.0) {
                        s0 = std::max(s0, s);
                    } else {
                        s1 = std::min(s1, s);
                    }
                    return true;
                };
                const bool ok = cut(cropped.window.x_lo - e.p0.x, dx) &&
                                cut(e.p0.x - cropped.window.x_hi, -dx) &&
                                cut(cropped.window.t_lo - e.p0.y, dy) &&
                                cut(e.p0.y - cropped.window.t_hi, -dy) && s0 <= s1;
                if (!ok) continue;
                TessEdge c = e;
                c.p0 = Vec2{e.p0.x + s0 * dx, e.p0.y + s0 * dy};
                c.p1 = Vec2{e.p0.x + s1 * dx, e.p0.y + s1 * dy};
                if (c.length() <= 1e-12 * scale) continue;
                c.left_cell = (e.left_cell == TessEdge::npos) ? TessEdge::npos
                                                              : cmap[e.left_cell];
                c.right_cell = (e.right_cell == TessEdge::npos) ? TessEdge::npos
                                                                : cmap[e.right_cell];
                cropped.edges.push_back(c);
            }
            for (const TessVertex& v : out.vertices) {
                if (cropped.window.contains(v.p, tol)) cropped.vertices.push_back(v);
            }
            return cropped;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometric validation
// ---------------------------------------------------------------------------

// Outcome of the generic-tessellation checks. `pass()` requires all of:
//   tiling        cell areas sum to the window area (relative defect <= tol)
//   convexity     every cell polygon is convex (normalized cross products)
//   orthogonality every edge runs perpendicular to hi - lo
//   orientation   hi - lo crosses each edge from the lo cell to the hi cell
//   degree-3      interior vertices have exactly three incident marks
// Window-boundary vertices are counted separately and exempt from the degree
// rule (creations, exits, and horizon cuts are legitimately degree-2).
struct GenericityReport {
    double area_defect = 0.0;
    double convexity_defect = 0.0;
    double orthogonality_defect = 0.0;
    std::size_t misoriented_edges = 0;
    std::size_t bad_interior_vertices = 0;
    std::size_t interior_vertices = 0;
    std::size_t boundary_vertices = 0;
    double tol = 0.0;

    bool tiling_ok() const { return area_defect <= tol; }
    bool convex_ok() const { return convexity_defect <= tol; }
    bool orthogonal_ok() const { return orthogonality_defect <= tol; }
    bool oriented_ok() const { return misoriented_edges == 0; }
    bool degree3_ok() const { return bad_interior_vertices == 0; }
    bool pass() const {
        return tiling_ok() && convex_ok() && orthogonal_ok() && oriented_ok() && degree3_ok();
    }
};

inline GenericityReport validate_generic(const Tessellation& tess, double tol = 1e-9) {
    if (!tess.window.valid()) {
        throw std::invalid_argument("validate: degenerate window");
    }
    GenericityReport rep;
    rep.tol = tol;
    const double diam = tess.window.diameter();

    // Tiling: total area against the window.
    double total = 0.0;
    for (const TessCell& c : tess.cells) total += std::abs(polygon_area(c.poly));
    rep.area_defect = std::abs(total - tess.window.area()) / tess.window.area();

    // Convexity: every interior angle of a counterclockwise loop turns left.
    for (const TessCell& c : tess.cells) {
        const std::size_t n = c.poly.size();
        const double orient = polygon_area(c.poly) >= 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = c.poly[i];
            const Vec2& b = c.poly[(i + 1) % n];
            const Vec2& d = c.poly[(i + 2) % n];
            const double ux = b.x - a.x, uy = b.y - a.y;
            const double vx = d.x - b.x, vy = d.y - b.y;
            const double lu = std::hypot(ux, uy), lv = std::hypot(vx, vy);
            if (lu <= 0.0 || lv <= 0.0) continue;
            const double cross = orient * (ux * vy - uy * vx) / (lu * lv);
            rep.convexity_defect = std::max(rep.convexity_defect, -cross);
        }
    }

    // Orthogonality and orientation, edge by edge.
    for (const TessEdge& e : tess.edges) {
        const double tx = e.p1.x - e.p0.x;
        const double ty = e.p1.y - e.p0.y;
        const double dx = e.hi.rho1 - e.lo.rho1;
        const double dy = e.hi.rho2 - e.lo.rho2;
        const double lt = std::hypot(tx, ty);
        const double ld = std::hypot(dx, dy);
        if (lt <= 0.0 || ld <= 0.0) {
            ++rep.misoriented_edges;
            continue;
        }
        rep.orthogonality_defect =
            std::max(rep.orthogonality_defect, std::abs(tx * dx + ty * dy) / (lt * ld));

        // Orientation: among the cells whose boundary carries the segment
        // midpoint, the lo mark must sit on the -(hi - lo) side and the hi
        // mark on the +(hi - lo) side (classified by cell centroid).
        const Vec2 mid{0.5 * (e.p0.x + e.p1.x), 0.5 * (e.p0.y + e.p1.y)};
        const double touch = std::max(tol, detail::kGeomTol) * std::max(diam, 1.0);
        bool wrong_side = false;
        for (const TessCell& c : tess.cells) {
            if (c.mark != e.lo && c.mark != e.hi) continue;
            if (point_polygon_boundary_distance(mid, c.poly) > touch) continue;
            const Vec2 ctr = polygon_centroid(c.poly);
            const double side = ((ctr.x - mid.x) * dx + (ctr.y - mid.y) * dy) / ld;
            if (std::abs(side) <= touch) continue;  // sliver: inconclusive
            if (c.mark == e.lo && side > 0.0) wrong_side = true;
            if (c.mark == e.hi && side < 0.0) wrong_side = true;
        }
        if (wrong_side) ++rep.misoriented_edges;
    }

    // Vertex degrees: merge coincident vertex records (within tol of each
    // other a vertex is a single point), then require exactly three distinct
    // incident marks at interior points.
    const double merge = std::max(tol, detail::kGeomTol) * std::max(diam, 1.0);
    std::vector<TessVertex> merged;
    for (const TessVertex& v : tess.vertices) {
        bool absorbed = false;
        for (TessVertex& m : merged) {
            if (std::hypot(m.p.x - v.p.x, m.p.y - v.p.y) <= merge) {
                for (const Mark& mk : v.marks) {
                    if (std::find(m.marks.begin(), m.marks.end(), mk) == m.marks.end()) {
                        m.marks.push_back(mk);
                    }
                }
                absorbed = true;
                break;
            }
        }
        if (!absorbed) merged.push_back(v);
    }
    for (const TessVertex& v : merged) {
        if (tess.window.on_boundary(v.p, merge)) {
            ++rep.boundary_vertices;
            continue;
        }
        ++rep.interior_vertices;
        if (v.marks.size() != 3) ++rep.bad_interior_vertices;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Slices
// ---------------------------------------------------------------------------

// One-dimensional mark profile along a line: value is values[k] on
// (jumps[k-1], jumps[k]) with the convention jumps[-1] = lo, jumps[n] = hi.
struct StepFunction {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> jumps;
    std::vector<Mark> values;

    const Mark& value_at(double u) const {
        if (values.empty()) throw std::logic_error("step function: empty");
        std::size_t k = 0;
        while (k < jumps.size() && jumps[k] <= u) ++k;
        return values[k];
    }
};

enum class SliceAxis { Horizontal, Vertical };

// Profile along a horizontal line {t = coordinate} (the mark field as a
// function of x1) or a vertical line {x1 = coordinate} (as a function of
// time). Coordinates within 1e-12 of an event time or an event position are
// perturbed by +1e-10 so the slice never passes through a vertex.
inline StepFunction slice(const Trajectory& traj, const MarkSet& ms, const PairTable& pt,
                          SliceAxis axis, double coordinate) {
    const double t0 = traj.initial.t;
    const double t1 = traj.last.t;
    const double a_lo = traj.initial.a_lo;
    const double a_hi = traj.initial.a_hi;
    const double scale = std::max({std::abs(a_lo), std::abs(a_hi), std::abs(t0), std::abs(t1),
                                   1.0});
    const double tie = 1e-12 * scale;

    StepFunction sf;
    if (axis == SliceAxis::Horizontal) {
        if (coordinate < t0 - tie || coordinate > t1 + tie) {
            throw std::out_of_range("slice: time outside the horizon");
        }
        double c = std::clamp(coordinate, t0, t1);
        for (int tries = 0;; ++tries) {
            bool on_event = false;
            for (const Event& rec : traj.log.records) {
                on_event = on_event || std::abs(rec.t - c) <= tie;
            }
            if (!on_event) break;
            if (tries >= 8) throw std::invalid_argument("slice: cannot avoid event times");
            c = std::clamp(c + 1e-10 * scale, t0, t1);
        }
        const ParticleConfig q = traj.at_time(c, pt);
        sf.lo = a_lo;
        sf.hi = a_hi;
        sf.jumps = q.z;
        sf.values.reserve(q.labels.size());
        for (std::size_t i : q.labels) sf.values.push_back(ms.mark(i));
        return sf;
    }

    if (coordinate < a_lo - tie || coordinate > a_hi + tie) {
        throw std::out_of_range("slice: position outside the span");
    }
    double c = std::clamp(coordinate, a_lo, a_hi);

    // Interior events exactly on the line and paths that ride it make the
    // crossing count ambiguous; nudge the line off them. Wall events on the
    // line are legitimate (slices along a wall see them as jumps).
    auto degenerate = [&](double cc) {
        for (const Event& rec : traj.log.records) {
            const bool interior = rec.kind == Event::Kind::Coagulate ||
                                  rec.kind == Event::Kind::Fragment;
            if (interior && std::abs(rec.z - cc) <= tie) return true;
        }
        const ParticleConfig* base = &traj.initial;
        for (std::size_t r = 0; r <= traj.states.size(); ++r) {
            const double s = base->t;
            const double e = (r < traj.states.size()) ? traj.log.records[r].t : t1;
            if (e > s) {
                for (std::size_t k = 0; k < base->n(); ++k) {
                    const double v = -pt.alpha_of(base->labels[k], base->labels[k + 1]);
                    if (std::abs(base->z[k] - cc) <= tie && std::abs(v) * (e - s) <= tie) {
                        return true;
                    }
                }
            }
            if (r < traj.states.size()) base = &traj.states[r];
        }
        return false;
    };
    for (int tries = 0; degenerate(c); ++tries) {
        if (tries >= 8) throw std::invalid_argument("slice: cannot avoid a degenerate line");
        c = std::clamp(c + 1e-10 * scale, a_lo, a_hi);
    }

    // Walk the deterministic slabs between events and solve each particle
    // path for its crossing of {x1 = c}; wall events on the line contribute
    // their own jump times (the boundary mark changes there).
    std::vector<double> cuts;
    for (const Event& rec : traj.log.records) {
        const bool interior =
            rec.kind == Event::Kind::Coagulate || rec.kind == Event::Kind::Fragment;
        if (!interior && std::abs(rec.z - c) <= tie) cuts.push_back(rec.t);
    }
    const ParticleConfig* base = &traj.initial;
    for (std::size_t r = 0; r <= traj.states.size(); ++r) {
        const double s = base->t;
        const double e = (r < traj.states.size()) ? traj.log.records[r].t : t1;
        if (e > s) {
            for (std::size_t k = 0; k < base->n(); ++k) {
                const double v = -pt.alpha_of(base->labels[k], base->labels[k + 1]);
                if (v == 0.0) continue;
                const double tc = s + (c - base->z[k]) / v;
                if (tc >= s && tc < e) cuts.push_back(tc);
            }
        }
        if (r < traj.states.size()) base = &traj.states[r];
    }
    std::sort(cuts.begin(), cuts.end());

    sf.lo = t0;
    sf.hi = t1;
    std::vector<double> pad;
    pad.push_back(t0);
    pad.insert(pad.end(), cuts.begin(), cuts.end());
    pad.push_back(t1);
    for (std::size_t k = 0; k + 1 < pad.size(); ++k) {
        const double mid = 0.5 * (pad[k] + pad[k + 1]);
        const Mark m = ms.mark(traj.profile_at(c, mid, pt));
        if (!sf.values.empty() && sf.values.back() == m) continue;  // phantom cut
        if (!sf.values.empty()) sf.jumps.push_back(pad[k]);
        sf.values.push_back(m);
    }
    return sf;
}

// ---------------------------------------------------------------------------
// Piecewise linear convex functions and their diagrams
// ---------------------------------------------------------------------------

// g(x) = max_i ( x . marks[i] - intercepts[i] ): the height function whose
// gradient field is the mark profile. The intercept table doubles as the
// Legendre transform of g evaluated at the stored marks.
struct PLCFunction {
    std::vector<Mark> marks;
    std::vector<double> intercepts;

    std::size_t size() const { return marks.size(); }

    std::size_t argmax(Vec2 x) const {
        if (marks.empty()) throw std::logic_error("plc: empty function");
        std::size_t best = 0;
        double val = dot(x, Vec2{marks[0].rho1, marks[0].rho2}) - intercepts[0];
        for (std::size_t i = 1; i < marks.size(); ++i) {
            const double v = dot(x, Vec2{marks[i].rho1, marks[i].rho2}) - intercepts[i];
            if (v > val) {
                val = v;
                best = i;
            }
        }
        return best;
    }

    double value(Vec2 x) const {
        const std::size_t i = argmax(x);
        return dot(x, Vec2{marks[i].rho1, marks[i].rho2}) - intercepts[i];
    }
};

inline PLCFunction make_plc(std::vector<Mark> marks, std::vector<double> intercepts) {
    if (marks.empty()) throw std::invalid_argument("plc: no marks");
    if (marks.size() != intercepts.size()) {
        throw std::invalid_argument("plc: marks/intercepts size mismatch");
    }
    for (std::size_t i = 0; i < marks.size(); ++i) {
        if (!std::isfinite(marks[i].rho1) || !std::isfinite(marks[i].rho2) ||
            !std::isfinite(intercepts[i])) {
            throw std::invalid_argument("plc: non-finite entry");
        }
        for (std::size_t j = i + 1; j < marks.size(); ++j) {
            if (marks[i] == marks[j]) throw std::invalid_argument("plc: duplicate mark");
        }
    }
    PLCFunction g;
    g.marks = std::move(marks);
    g.intercepts = std::move(intercepts);
    return g;
}

// Laguerre diagram of a piecewise linear convex function over a window: mark
// i owns { x : x . (rho_i - rho_j) >= b_i - b_j for all j }. Cells are
// produced by half-plane clipping of the window rectangle (O(n^2) in the
// number of marks), edges by intersecting neighboring cells, and vertices by
// merging coincident cell corners (tolerance 1e-9 relative to the window).
inline Tessellation laguerre_cells(const PLCFunction& g, const Box2& window) {
    if (g.marks.empty()) throw std::invalid_argument("laguerre: empty function");
    if (!window.valid()) {
        throw std::invalid_argument("laguerre: window is empty or degenerate");
    }
    const double diam = window.diameter();
    const double merge = detail::kGeomTol * std::max(diam, 1.0);

    Tessellation out;
    out.window = window;

    std::vector<std::vector<Vec2>> polys(g.size());
    std::vector<std::size_t> cell_of(g.size(), TessEdge::npos);
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::vector<Vec2> poly = window.corners();
        for (std::size_t j = 0; j < g.size() && !poly.empty(); ++j) {
            if (j == i) continue;
            const Vec2 n{g.marks[i].rho1 - g.marks[j].rho1, g.marks[i].rho2 - g.marks[j].rho2};
            poly = clip_halfplane(poly, n, g.intercepts[i] - g.intercepts[j]);
        }
        poly = dedup_loop(std::move(poly), 1e-12 * std::max(diam, 1.0));
        if (poly.size() >= 3 && std::abs(polygon_area(poly)) > 1e-12 * window.area()) {
            cell_of[i] = out.cells.size();
            out.cells.push_back(TessCell{g.marks[i], std::move(poly)});
            polys[i] = out.cells.back().poly;
        }
    }
    if (out.cells.empty()) {
        throw std::invalid_argument("laguerre: no mark survives on the window");
    }

    // Edges: the shared face of two live cells lies on the bisector line
    // x . (rho_i - rho_j) = b_i - b_j; collect each polygon's vertices on that
    // line and keep the extreme pair.
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (cell_of[i] == TessEdge::npos) continue;
        for (std::size_t j = i + 1; j < g.size(); ++j) {
            if (cell_of[j] == TessEdge::npos) continue;
            const Vec2 n{g.marks[j].rho1 - g.marks[i].rho1, g.marks[j].rho2 - g.marks[i].rho2};
            const double off = g.intercepts[j] - g.intercepts[i];
            const double ln = std::hypot(n.x, n.y);
            if (ln <= 0.0) continue;
            // Each polygon meets the bisector line in a parameter interval;
            // the shared face is the intersection of the two intervals.
            const Vec2 dir{-n.y / ln, n.x / ln};
            double s_lo = -std::numeric_limits<double>::infinity();
            double s_hi = std::numeric_limits<double>::infinity();
            Vec2 p_lo{}, p_hi{};
            bool alive = true;
            for (const std::vector<Vec2>* poly : {&polys[i], &polys[j]}) {
                double lo = std::numeric_limits<double>::infinity();
                double hi = -std::numeric_limits<double>::infinity();
                Vec2 plo{}, phi{};
                for (const Vec2& p : *poly) {
                    if (std::abs(dot(p, n) - off) / ln > merge) continue;
                    const double s = dot(p, dir);
                    if (s < lo) {
                        lo = s;
                        plo = p;
                    }
                    if (s > hi) {
                        hi = s;
                        phi = p;
                    }
                }
                if (!(lo < hi)) {
                    alive = false;
                    break;
                }
                if (lo > s_lo) {
                    s_lo = lo;
                    p_lo = plo;
                }
                if (hi < s_hi) {
                    s_hi = hi;
                    p_hi = phi;
                }
            }
            if (!alive || s_hi - s_lo <= merge) continue;
            TessEdge e;
            const bool i_low = (g.marks[i].rho1 < g.marks[j].rho1) ||
                               (g.marks[i].rho1 == g.marks[j].rho1 &&
                                g.marks[i].rho2 < g.marks[j].rho2);
            const std::size_t lo_idx = i_low ? i : j;
            const std::size_t hi_idx = i_low ? j : i;
            e.lo = g.marks[lo_idx];
            e.hi = g.marks[hi_idx];
            e.left_cell = cell_of[lo_idx];
            e.right_cell = cell_of[hi_idx];
            if (p_lo.y < p_hi.y || (p_lo.y == p_hi.y && p_lo.x <= p_hi.x)) {
                e.p0 = p_lo;
                e.p1 = p_hi;
            } else {
                e.p0 = p_hi;
                e.p1 = p_lo;
            }
            out.edges.push_back(e);
        }
    }

    // Vertices: merge coincident cell corners and record the incident marks.
    struct Corner {
        Vec2 p;
        std::vector<Mark> marks;
    };
    std::vector<Corner> corners;
    for (const TessCell& c : out.cells) {
        for (const Vec2& p : c.poly) {
            bool absorbed = false;
            for (Corner& k : corners) {
                if (std::hypot(k.p.x - p.x, k.p.y - p.y) <= merge) {
                    if (std::find(k.marks.begin(), k.marks.end(), c.mark) == k.marks.end()) {
                        k.marks.push_back(c.mark);
                    }
                    absorbed = true;
                    break;
                }
            }
            if (!absorbed) corners.push_back(Corner{p, {c.mark}});
        }
    }
    for (Corner& k : corners) {
        if (k.marks.size() < 2) continue;  // plain window corner of one cell
        std::sort(k.marks.begin(), k.marks.end(), [](const Mark& a, const Mark& b) {
            return a.rho1 < b.rho1 || (a.rho1 == b.rho1 && a.rho2 < b.rho2);
        });
        TessVertex v;
        v.p = k.p;
        v.marks = std::move(k.marks);
        if (out.window.on_boundary(v.p, merge)) {
            v.kind = VertexKind::Boundary;
        } else if (v.marks.size() == 3) {
            // Between the extreme marks the middle cell dies moving up
            // (coagulation) or is born (fragmentation); infer from where its
            // cell sits relative to the vertex.
            const Mark& mid = v.marks[1];
            v.kind = VertexKind::Meeting;
            for (const TessCell& c : out.cells) {
                if (c.mark == mid) {
                    const Vec2 ctr = polygon_centroid(c.poly);
                    v.kind = (ctr.y < v.p.y) ? VertexKind::Coagulation
                                             : VertexKind::Fragmentation;
                    break;
                }
            }
        } else {
            v.kind = VertexKind::Meeting;
        }
        out.vertices.push_back(v);
    }
    return out;
}

// Removes marks whose cell carries no area on the window.
inline PLCFunction prune(const PLCFunction& g, const Box2& window) {
    const Tessellation tess = laguerre_cells(g, window);
    PLCFunction out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (const TessCell& c : tess.cells) {
            if (c.mark == g.marks[i]) {
                out.marks.push_back(g.marks[i]);
                out.intercepts.push_back(g.intercepts[i]);
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Height-function reconstruction
// ---------------------------------------------------------------------------

struct ReconstructionResult {
    PLCFunction g;
    Tessellation tess;       // the tessellation the profile was read from
    double curl_defect = 0.0;     // worst gradient-consistency defect (in g units)
    double convexity_defect = 0.0;  // worst violation of the midpoint monotonicity test
    bool convex = true;
};

// Integrates the mark profile of a trajectory back to its height function.
// Affine pieces are stitched across shared edges (continuity fixes the
// intercept differences); redundant paths around loops, intercept variation
// along edges, and repeated-mark mismatches all feed the curl defect. A curl
// defect above `curl_tol` means the profile is not a gradient and is an
// error. Convexity is diagnosed (midpoint test across every edge) but not
// enforced.
inline ReconstructionResult reconstruct_g(const Trajectory& traj, const MarkSet& ms,
                                          const PairTable& pt, double base_value = 0.0,
                                          double curl_tol = 1e-6) {
    ReconstructionResult out;
    out.tess = build_tessellation(traj, ms, pt);
    const Tessellation& tess = out.tess;
    if (tess.cells.empty()) throw std::invalid_argument("reconstruct: no cells");
    const double diam = tess.window.diameter();

    // Intercepts per cell via breadth-first stitching across edges.
    const std::size_t nc = tess.cells.size();
    std::vector<double> b(nc, 0.0);
    std::vector<char> known(nc, 0);

    // Anchor: the cell at the bottom-left corner carries g(corner) = base.
    const Vec2 corner{tess.window.x_lo, tess.window.t_lo};
    const Vec2 probe{corner.x + 1e-7 * diam, corner.y + 1e-7 * diam};
    std::size_t anchor = nc;
    for (std::size_t i = 0; i < nc; ++i) {
        if (point_in_polygon(probe, tess.cells[i].poly, 1e-12 * diam)) {
            anchor = i;
            break;
        }
    }
    if (anchor == nc) throw std::logic_error("reconstruct: no cell at the window corner");
    const Mark& am = tess.cells[anchor].mark;
    b[anchor] = dot(corner, Vec2{am.rho1, am.rho2}) - base_value;
    known[anchor] = 1;

    std::vector<std::size_t> queue{anchor};
    while (!queue.empty()) {
        const std::size_t i = queue.back();
        queue.pop_back();
        for (const TessEdge& e : tess.edges) {
            if (e.left_cell == TessEdge::npos || e.right_cell == TessEdge::npos) continue;
            std::size_t j = nc;
            double sign = 0.0;
            if (e.left_cell == i) {
                j = e.right_cell;
                sign = 1.0;
            } else if (e.right_cell == i) {
                j = e.left_cell;
                sign = -1.0;
            } else {
                continue;
            }
            const Vec2 mid{0.5 * (e.p0.x + e.p1.x), 0.5 * (e.p0.y + e.p1.y)};
            const Vec2 drho{e.hi.rho1 - e.lo.rho1, e.hi.rho2 - e.lo.rho2};
            const double step = sign * dot(mid, drho);
            // Intercept variation along the edge is exactly the failure of
            // orthogonality, measured in g units.
            const double along = std::abs(dot(Vec2{e.p1.x - e.p0.x, e.p1.y - e.p0.y}, drho));
            out.curl_defect = std::max(out.curl_defect, along);
            if (!known[j]) {
                b[j] = b[i] + step;
                known[j] = 1;
                queue.push_back(j);
            } else {
                out.curl_defect = std::max(out.curl_defect, std::abs(b[j] - (b[i] + step)));
            }
        }
    }
    for (std::size_t i = 0; i < nc; ++i) {
        if (!known[i]) {
            throw std::logic_error("reconstruct: tessellation is not edge-connected");
        }
    }

    // Convexity: probing the two affine pieces at midpoint +- delta * normal,
    // g(mid) <= (g(mid - delta n) + g(mid + delta n)) / 2 holds exactly when
    // the gradient jump hi - lo points across the edge toward the hi cell, so
    // the defect is the negative part of that projection.
    for (const TessEdge& e : tess.edges) {
        if (e.left_cell == TessEdge::npos || e.right_cell == TessEdge::npos) continue;
        const double tx = e.p1.x - e.p0.x;
        const double ty = e.p1.y - e.p0.y;
        const double lt = std::hypot(tx, ty);
        if (lt <= 0.0) continue;
        Vec2 n{ty / lt, -tx / lt};
        const Vec2 mid{0.5 * (e.p0.x + e.p1.x), 0.5 * (e.p0.y + e.p1.y)};
        const std::size_t hi_cell =
            (tess.cells[e.right_cell].mark == e.hi) ? e.right_cell : e.left_cell;
        const Vec2 ctr = polygon_centroid(tess.cells[hi_cell].poly);
        const double side = (ctr.x - mid.x) * n.x + (ctr.y - mid.y) * n.y;
        if (side == 0.0) continue;  // degenerate sliver: inconclusive
        if (side < 0.0) n = Vec2{-n.x, -n.y};  // now points into the hi cell
        const double jump = (e.hi.rho1 - e.lo.rho1) * n.x + (e.hi.rho2 - e.lo.rho2) * n.y;
        if (jump < 0.0) out.convexity_defect = std::max(out.convexity_defect, -jump);
    }
    out.convex = out.convexity_defect <= detail::kGeomTol;

    // Collapse cells onto distinct marks; repeated marks must agree on the
    // intercept or the field was not a gradient.
    for (std::size_t i = 0; i < nc; ++i) {
        const Mark& m = tess.cells[i].mark;
        bool found = false;
        for (std::size_t k = 0; k < out.g.marks.size(); ++k) {
            if (out.g.marks[k] == m) {
                out.curl_defect =
                    std::max(out.curl_defect, std::abs(out.g.intercepts[k] - b[i]));
                found = true;
                break;
            }
        }
        if (!found) {
            out.g.marks.push_back(m);
            out.g.intercepts.push_back(b[i]);
        }
    }
    if (out.curl_defect > curl_tol) {
        throw std::runtime_error("reconstruct: profile is not a gradient (curl defect " +
                                 std::to_string(out.curl_defect) + ")");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Legendre transform
// ---------------------------------------------------------------------------

// Recomputes the intercept table of g as the Legendre transform
// g*(rho) = sup_x { x . rho - g(x) } over the window. For a piecewise linear
// convex g the concave objective attains its sup at a vertex of the cell
// diagram, so the computation is exact up to clipping arithmetic. On pruned
// functions this is the identity on the intercepts (transforming twice
// returns the original table).
inline std::vector<double> legendre_transform(const PLCFunction& g, const Box2& window) {
    const Tessellation tess = laguerre_cells(g, window);
    std::vector<Vec2> sites;
    for (const TessCell& c : tess.cells) {
        sites.insert(sites.end(), c.poly.begin(), c.poly.end());
    }
    std::vector<double> star(g.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec2 rho{g.marks[i].rho1, g.marks[i].rho2};
        for (const Vec2& x : sites) {
            star[i] = std::max(star[i], dot(x, rho) - g.value(x));
        }
    }
    return star;
}

// ---------------------------------------------------------------------------
// Hopf evolution and the Hopf-Lax oracle
// ---------------------------------------------------------------------------

// Quadratic Hamiltonian rho -> c0 + c1 rho1 + c2 rho2 + c11 rho1^2
// + c12 rho1 rho2 + c22 rho2^2, wide enough for every flux used here while
// staying trivially serializable.
struct HamiltonianSpec {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double c11 = 0.0;
    double c12 = 0.0;
    double c22 = 0.0;

    double operator()(const Mark& m) const {
        return c0 + c1 * m.rho1 + c2 * m.rho2 + c11 * m.rho1 * m.rho1 +
               c12 * m.rho1 * m.rho2 + c22 * m.rho2 * m.rho2;
    }
    double at(double r1, double r2) const { return (*this)(Mark{r1, r2}); }
};

// Exact evolution of a piecewise linear convex initial condition: every
// intercept moves by -t H(mark), and marks whose cell vanishes from the
// window are pruned. Requires t >= 0.
inline PLCFunction hopf_evolve(const PLCFunction& g, const HamiltonianSpec& H, double t,
                               const Box2& window) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("hopf: time must be finite and >= 0");
    }
    PLCFunction moved = g;
    for (std::size_t i = 0; i < moved.size(); ++i) {
        moved.intercepts[i] -= t * H(moved.marks[i]);
    }
    return prune(moved, window);
}

struct HopfLaxResult {
    double value = 0.0;
    Vec2 argmax;
    bool boundary_attained = false;  // sup reached on the search-box boundary:
                                     // the window was too small to be conclusive
};

// Direct variational solution
//     u(x, t) = sup_y { g(y) - t L((y - x) / t) },    L = H*,
// with the Legendre transform restricted to a finite slope grid, so that
//     t L((y - x) / t) = max_rho { rho . (y - x) - t H(rho) }
// needs no division by t and degenerates gracefully to u = g at t = 0. The
// sup over y is a dense grid search (ny x ny points over y_box); when it is
// attained on the boundary of y_box the result is flagged inconclusive.
inline HopfLaxResult hopf_lax_value(const PLCFunction& g, const HamiltonianSpec& H, Vec2 x,
                                    double t, const Box2& slope_box, const Box2& y_box,
                                    std::size_t slope_n = 101, std::size_t ny = 401) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("hopf-lax: time must be finite and >= 0");
    }
    if (!slope_box.valid() || !y_box.valid()) {
        throw std::invalid_argument("hopf-lax: degenerate search box");
    }
    if (slope_n < 2 || ny < 2) throw std::invalid_argument("hopf-lax: grid too coarse");

    std::vector<double> r1s(slope_n), r2s(slope_n);
    for (std::size_t i = 0; i < slope_n; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(slope_n - 1);
        r1s[i] = slope_box.x_lo + slope_box.width() * s;
        r2s[i] = slope_box.t_lo + slope_box.height() * s;
    }
    // t L(q / t) = max over the slope grid of { rho . q - t H(rho) }. For each
    // fixed rho2 the maximand is a quadratic in rho1, so the scan over the rho1
    // axis collapses to at most four exact candidates: both ends, plus the two
    // grid points bracketing the vertex when the quadratic is concave. This
    // matches the full grid scan value for value.
    const double r1_step = (r1s.back() - r1s.front()) / static_cast<double>(slope_n - 1);
    auto tL = [&](Vec2 q) {
        double best = -std::numeric_limits<double>::infinity();
        const double A = -t * H.c11;
        for (std::size_t j = 0; j < slope_n; ++j) {
            const double r2 = r2s[j];
            const double B = q.x - t * (H.c1 + H.c12 * r2);
            const double C = r2 * q.y - t * (H.c0 + H.c2 * r2 + H.c22 * r2 * r2);
            std::size_t cand[4] = {0, slope_n - 1, 0, slope_n - 1};
            if (A < 0.0) {
                const double vertex = (-B / (2.0 * A) - r1s.front()) / r1_step;
                if (vertex > 0.0) {
                    const double fl = std::floor(vertex);
                    cand[2] = static_cast<std::size_t>(
                        std::min(fl, static_cast<double>(slope_n - 1)));
                    cand[3] = std::min(cand[2] + 1, slope_n - 1);
                }
            }
            for (std::size_t k : cand) {
                const double r1 = r1s[k];
                best = std::max(best, (A * r1 + B) * r1 + C);
            }
        }
        return best;
    };

    HopfLaxResult res;
    res.value = -std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < ny; ++i) {
        const double yx = y_box.x_lo +
                          y_box.width() * static_cast<double>(i) / static_cast<double>(ny - 1);
        for (std::size_t j = 0; j < ny; ++j) {
            const double yt = y_box.t_lo + y_box.height() * static_cast<double>(j) /
                                               static_cast<double>(ny - 1);
            const Vec2 y{yx, yt};
            const double val = g.value(y) - tL(Vec2{y.x - x.x, y.y - x.y});
            if (val > res.value) {
                res.value = val;
                res.argmax = y;
                best_i = i;
                best_j = j;
            }
        }
    }
    res.boundary_attained =
        best_i == 0 || best_j == 0 || best_i == ny - 1 || best_j == ny - 1;
    return res;
}

}  // namespace gibbstess
