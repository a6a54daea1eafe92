#pragma once

// Piecewise-deterministic particle system on an interval [a_lo, a_hi].
//
// A configuration holds n ordered particle positions z_1 <= ... <= z_n and a
// strictly increasing chain of n+1 marks: labels[0] is the mark left of z_1,
// labels[k] the mark between z_k and z_{k+1}, labels[n] the mark right of
// z_n. Particle k separates labels[k-1] | labels[k] (0-based: labels[k] |
// labels[k+1]) and travels at the constant velocity -alpha of that pair, so
// the profile x -> mark is a right-continuous step function.
//
// Between stochastic jumps the state follows a deterministic flow: free
// linear motion, wall exits that drop the outermost mark, and pairwise
// collisions. A collision squeezes out the interval between the two
// particles, so the merge drops the middle mark and the survivor moves with
// the coagulated pair's velocity. Co-located pairs are resolved by the sign
// of the chord defect sigma: nonnegative defect merges immediately (sticky),
// negative defect separates instantaneously (the gap grows at rate -sigma).
//
// Stochastic jumps insert marks at the exponential clock times of the total
// particle rate: creations at either wall (rate densities c- and c+) and
// fragmentations of interior particles (rate density proportional to the
// negative part of the defect). A fragmentation momentarily leaves the
// sticky-admissible set -- its newborn co-located pair has sigma < 0 -- and
// the flow re-enters the interior immediately.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kernel.hpp"
#include "rng.hpp"

namespace gibbstess {

// One record of the event log. `marks` lists the atom indices involved in
// chain order: {new, old bottom} for a left creation, {old top, new} for a
// right creation, {lower, middle, upper} triples for fragmentation and
// coagulation, and the flanking pair of the exiting particle for a wall
// exit. `sigma` is the triple chord defect, meaningful for fragmentation
// (< 0) and coagulation (>= 0) only.
struct Event {
    enum class Kind { CreateLeft, CreateRight, Fragment, Coagulate, WallExit };
    Kind kind = Kind::Coagulate;
    double t = 0.0;
    double z = 0.0;
    std::vector<std::size_t> marks;
    double sigma = 0.0;
};

inline const char* kind_label(Event::Kind k) {
    switch (k) {
        case Event::Kind::CreateLeft: return "create-";
        case Event::Kind::CreateRight: return "create+";
        case Event::Kind::Fragment: return "frag";
        case Event::Kind::Coagulate: return "coag";
        case Event::Kind::WallExit: return "exit";
    }
    return "?";
}

struct EventLog {
    std::vector<Event> records;

    // Time ordering and sign discipline. Stochastic jump times are almost
    // surely distinct; ties are legitimate only for simultaneous
    // deterministic events, which are processed left to right, so the hard
    // requirement is nondecreasing.
    void validate() const {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const Event& e = records[i];
            if (i > 0 && e.t < records[i - 1].t) {
                throw std::logic_error("event log: times must be nondecreasing");
            }
            if (e.kind == Event::Kind::Fragment && !(e.sigma < 0.0)) {
                throw std::logic_error("event log: fragmentation requires a negative defect");
            }
            if (e.kind == Event::Kind::Coagulate && !(e.sigma >= 0.0)) {
                throw std::logic_error("event log: coagulation requires a nonnegative defect");
            }
        }
    }
};

struct ParticleConfig {
    double a_lo = 0.0;  // walls, a_lo < a_hi
    double a_hi = 0.0;
    double t = 0.0;                   // current time
    std::vector<double> z;            // particle positions, sorted, size n
    std::vector<std::size_t> labels;  // mark chain, strictly increasing, size n + 1

    std::size_t n() const { return z.size(); }

    // Velocity of particle k: minus the bracket of its flanking pair.
    double velocity(const PairTable& pt, std::size_t k) const {
        return -pt.alpha_of(labels[k], labels[k + 1]);
    }

    // Membership in the state space: ordered walls, sorted positions inside
    // them, and a strictly increasing label chain (atoms are sorted by rho1,
    // so index order is the mark order). Co-located pairs of either defect
    // sign are members -- the flow resolves both.
    void validate(const MarkSet& ms) const {
        if (!(a_lo < a_hi)) throw std::invalid_argument("particle config: requires a_lo < a_hi");
        if (!std::isfinite(t)) throw std::invalid_argument("particle config: time must be finite");
        if (labels.size() != z.size() + 1) {
            throw std::invalid_argument("particle config: needs exactly n + 1 labels");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= ms.size()) {
                throw std::invalid_argument("particle config: label is not an atom index");
            }
            if (i > 0 && labels[i] <= labels[i - 1]) {
                throw std::invalid_argument(
                    "particle config: label chain must be strictly increasing");
            }
        }
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (!std::isfinite(z[k]) || z[k] < a_lo || z[k] > a_hi) {
                throw std::invalid_argument("particle config: position outside [a_lo, a_hi]");
            }
            if (k > 0 && z[k] < z[k - 1]) {
                throw std::invalid_argument("particle config: positions must be sorted");
            }
        }
    }

    // Sticky admissibility: every co-located pair has nonnegative defect.
    // States violate this only at the instant of a fragmentation, whose
    // newborn pair separates immediately.
    bool sticky_admissible(const PairTable& pt) const {
        for (std::size_t k = 0; k + 1 < z.size(); ++k) {
            if (z[k] == z[k + 1]) {
                const double defect = pt.alpha_of(labels[k + 1], labels[k + 2]) -
                                      pt.alpha_of(labels[k], labels[k + 1]);
                if (defect < 0.0) return false;
            }
        }
        return true;
    }
};

namespace detail {

inline constexpr double kRateTol = 1e-10;  // adaptive Simpson tolerance for rate integrals
inline constexpr double kTimeTol = 1e-10;  // bisection tolerance for clock inversions
inline constexpr double kTieTol = 1e-12;   // simultaneity window for deterministic events

inline double simpson_rec(const std::function<double(double)>& fn, double a, double b,
                          double fa, double fm, double fb, double whole, double tol,
                          int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = fn(lm);
    const double frm = fn(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson_rec(fn, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(fn, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& fn, double a, double b,
                               double tol) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = fn(a);
    const double fm = fn(m);
    const double fb = fn(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(fn, a, b, fa, fm, fb, whole, tol, 40);
}

// Smallest s in [a, b] with integral of fn over [a, s] equal to target,
// assuming the cumulative reaches target by b. Bisection on the monotone
// cumulative; the returned point has positive local intensity because the
// cumulative strictly increases into it.
inline double invert_cumulative(const std::function<double(double)>& fn, double a, double b,
                                double target) {
    double lo = a;
    double hi = b;
    while (hi - lo > kTimeTol) {
        const double mid = 0.5 * (lo + hi);
        if (adaptive_simpson(fn, a, mid, kRateTol) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// Row jump intensity lambda(x, t, rho_i) = sum over marks above i of f w.
inline double row_intensity(const Kernel& f, double x, double t, std::size_t i) {
    double lam = 0.0;
    for (std::size_t j = i + 1; j < f.marks.size(); ++j) {
        lam += f.marks.weight(j) * kernel_eval(f, x, t, i, j);
    }
    return lam;
}

}  // namespace detail

// Creation rate density at the lower wall: a new mark a below the current
// bottom mark b arrives at rate
//     c-(t, a, b) = [alpha(a,b)]^- * ell(a_lo, t, a) * f(a_lo, t, a, b) / ell(a_lo, t, b).
// The marginal of the bottom mark must be positive wherever the numerator is.
inline double creation_rate_left(const Kernel& f, const MarginalField& ell, double a_lo,
                                 double t, std::size_t a, std::size_t b) {
    const double neg = neg_part(f.pairs.alpha_of(a, b));
    if (neg == 0.0) return 0.0;
    const double num = neg * marginal_eval(ell, a_lo, t, a) * kernel_eval(f, a_lo, t, a, b);
    if (num == 0.0) return 0.0;
    const double den = marginal_eval(ell, a_lo, t, b);
    if (den <= 0.0) {
        throw std::domain_error(
            "creation rate: boundary marginal vanishes for the bottom mark");
    }
    return num / den;
}

// Creation rate density at the upper wall: a new mark b above the current
// top mark a arrives at rate c+(t, a, b) = [alpha(a,b)]^+ * f(a_hi, t, a, b).
inline double creation_rate_right(const Kernel& f, double a_hi, double t, std::size_t a,
                                  std::size_t b) {
    const double pos = pos_part(f.pairs.alpha_of(a, b));
    return pos == 0.0 ? 0.0 : pos * kernel_eval(f, a_hi, t, a, b);
}

// Fragmentation rate density of the middle mark m splitting the pair (a, b):
//     fr(z, t, a, m, b) = [sigma(a,m,b)]^- * f(z,t,a,m) * f(z,t,m,b) / f(z,t,a,b),
// positive only where the chord defect is negative. A vanishing denominator
// under a positive numerator is a degenerate rate: the pair (a, b) cannot
// exist in the dynamics driven by f.
inline double fragmentation_rate(const Kernel& f, double z, double t, std::size_t a,
                                 std::size_t m, std::size_t b) {
    const double defect = f.pairs.alpha_of(m, b) - f.pairs.alpha_of(a, m);
    const double neg = neg_part(defect);
    if (neg == 0.0) return 0.0;
    const double num = neg * kernel_eval(f, z, t, a, m) * kernel_eval(f, z, t, m, b);
    if (num == 0.0) return 0.0;
    const double den = kernel_eval(f, z, t, a, b);
    if (den <= 0.0) {
        throw std::domain_error(
            "fragmentation rate: kernel vanishes on an existing pair (degenerate rate)");
    }
    return num / den;
}

// The particle rate of a configuration at time t, decomposed by channel:
// the beta-integrated creation rates at both walls and the beta-integrated
// fragmentation rate of every particle. Positions are taken from q as given,
// so callers integrating along free motion advance them consistently.
struct RateBreakdown {
    double create_left = 0.0;
    std::vector<double> fragment;  // one entry per particle
    double create_right = 0.0;
    double total = 0.0;
};

inline RateBreakdown total_rate(const ParticleConfig& q, const Kernel& f,
                                const MarginalField& ell, double t) {
    const MarkSet& ms = f.marks;
    RateBreakdown r;
    r.fragment.assign(q.n(), 0.0);
    const std::size_t bottom = q.labels.front();
    for (std::size_t j = 0; j < bottom; ++j) {
        r.create_left += ms.weight(j) * creation_rate_left(f, ell, q.a_lo, t, j, bottom);
    }
    for (std::size_t k = 0; k < q.n(); ++k) {
        const std::size_t a = q.labels[k];
        const std::size_t b = q.labels[k + 1];
        double acc = 0.0;
        for (std::size_t m = a + 1; m < b; ++m) {
            acc += ms.weight(m) * fragmentation_rate(f, q.z[k], t, a, m, b);
        }
        r.fragment[k] = acc;
    }
    const std::size_t top = q.labels.back();
    for (std::size_t j = top + 1; j < ms.size(); ++j) {
        r.create_right += ms.weight(j) * creation_rate_right(f, q.a_hi, t, top, j);
    }
    r.total = r.create_left + r.create_right;
    for (double v : r.fragment) r.total += v;
    return r;
}

// Draws a configuration from the boundary law at time t0 on [a_lo, a_hi]:
// the bottom mark from the density ell0 (with respect to the reference
// weights), then a Markov jump process along x with intensity
// lambda(x, t0, rho) and jump law f w / lambda, each jump location becoming
// a particle. Exponential clocks are inverted against the cumulative
// intensity by bisection; zero intensity simply yields no further jumps.
inline ParticleConfig sample_boundary(const Kernel& f, const std::vector<double>& ell0,
                                      double t0, double a_lo, double a_hi, RngStream& rng) {
    const MarkSet& ms = f.marks;
    if (ell0.size() != ms.size()) {
        throw std::invalid_argument("sample boundary: initial law size mismatch");
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < ell0.size(); ++i) {
        if (!(ell0[i] >= 0.0)) {
            throw std::invalid_argument("sample boundary: initial law must be nonnegative");
        }
        mass += ell0[i] * ms.weight(i);
    }
    if (std::abs(mass - 1.0) > 1e-9) {
        throw std::invalid_argument("sample boundary: initial law must have unit beta-mass");
    }
    if (!(a_lo < a_hi)) throw std::invalid_argument("sample boundary: requires a_lo < a_hi");
    const double gtol = 1e-9 * f.grid.dx;
    if (a_lo < f.grid.x0 - gtol || a_hi > f.grid.x_max() + gtol) {
        throw std::invalid_argument("sample boundary: span not covered by the kernel grid");
    }

    std::vector<double> bottom_w(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) bottom_w[i] = ell0[i] * ms.weight(i);

    ParticleConfig q;
    q.a_lo = a_lo;
    q.a_hi = a_hi;
    q.t = t0;
    std::size_t cur = rng.discrete(bottom_w);
    q.labels = {cur};

    double x = a_lo;
    std::vector<double> jump_w(ms.size());
    while (true) {
        auto lam = [&](double u) { return detail::row_intensity(f, u, t0, cur); };
        const double target = rng.exponential();
        const double total = detail::adaptive_simpson(lam, x, a_hi, detail::kRateTol);
        if (total < target) break;  // the next clock rings beyond the upper wall
        const double y = detail::invert_cumulative(lam, x, a_hi, target);
        std::fill(jump_w.begin(), jump_w.end(), 0.0);
        for (std::size_t j = cur + 1; j < ms.size(); ++j) {
            jump_w[j] = ms.weight(j) * kernel_eval(f, y, t0, cur, j);
        }
        const std::size_t nxt = rng.discrete(jump_w);
        q.z.push_back(y);
        q.labels.push_back(nxt);
        x = y;
        cur = nxt;
    }
    return q;
}

namespace detail {

// The earliest deterministic event of the free motion started at q: a wall
// exit of the outermost particles or a pairwise collision. Co-located pairs
// with nonnegative defect fire immediately (sticky merge); separating ones
// (defect < 0) are not events. Candidates within the simultaneity window are
// ordered boundary-first (lower wall, upper wall) then left to right, but
// the firing time is the minimum over the window so positions never
// overshoot.
struct NextEvent {
    bool any = false;
    double dt = std::numeric_limits<double>::infinity();
    enum What { WallLo, WallHi, Collide } what = Collide;
    std::size_t index = 0;  // left particle of a colliding pair
    std::size_t rank = 0;
};

inline NextEvent scan_next(const ParticleConfig& q, const PairTable& pt) {
    NextEvent ev;
    const std::size_t n = q.z.size();
    if (n == 0) return ev;
    auto consider = [&ev](double dt, NextEvent::What what, std::size_t idx, std::size_t rank) {
        if (dt < 0.0) dt = 0.0;
        if (!ev.any) {
            ev = NextEvent{true, dt, what, idx, rank};
            return;
        }
        if (dt < ev.dt - kTieTol) {
            ev = NextEvent{true, dt, what, idx, rank};  // strictly earlier
        } else if (dt <= ev.dt + kTieTol) {
            // same instant: the lower rank wins, firing at the earlier time
            const double fire = std::min(dt, ev.dt);
            if (rank < ev.rank) {
                ev = NextEvent{true, fire, what, idx, rank};
            } else {
                ev.dt = fire;
            }
        }
    };
    const double v_first = q.velocity(pt, 0);
    if (v_first < 0.0) consider((q.z.front() - q.a_lo) / (-v_first), NextEvent::WallLo, 0, 0);
    const double v_last = q.velocity(pt, n - 1);
    if (v_last > 0.0) consider((q.a_hi - q.z.back()) / v_last, NextEvent::WallHi, n - 1, 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double gap = q.z[k + 1] - q.z[k];
        const double defect =
            pt.alpha_of(q.labels[k + 1], q.labels[k + 2]) - pt.alpha_of(q.labels[k], q.labels[k + 1]);
        if (gap <= 0.0) {
            if (defect >= 0.0) consider(0.0, NextEvent::Collide, k, 2 + k);
        } else if (defect > 0.0) {
            consider(gap / defect, NextEvent::Collide, k, 2 + k);
        }
    }
    return ev;
}

// Free linear motion for dt, with a rounding repair pass that keeps the
// state inside the walls and sorted (event times are computed to land
// exactly; drift is at most an ulp).
inline void advance_free(ParticleConfig& q, const PairTable& pt, double dt) {
    if (dt == 0.0) return;
    for (std::size_t k = 0; k < q.z.size(); ++k) q.z[k] += q.velocity(pt, k) * dt;
    q.t += dt;
    for (std::size_t k = 0; k < q.z.size(); ++k) {
        if (q.z[k] < q.a_lo) q.z[k] = q.a_lo;
        if (q.z[k] > q.a_hi) q.z[k] = q.a_hi;
        if (k > 0 && q.z[k] < q.z[k - 1]) q.z[k] = q.z[k - 1];
    }
}

}  // namespace detail

// Relative time of the first deterministic event of the free motion started
// at q (infinity if the motion is event-free).
inline double first_event_dt(const ParticleConfig& q, const PairTable& pt) {
    return detail::scan_next(q, pt).dt;
}

// Deterministic flow over a duration dt: free motion punctuated by wall
// exits (drop the outermost particle and mark) and sticky collisions (merge,
// dropping the squeezed middle mark). Events exactly at the end of the
// interval are processed (the flow is right-continuous). Returns the final
// state, the event records, and the state right after each event.
struct FlowResult {
    ParticleConfig q;
    std::vector<Event> events;
    std::vector<ParticleConfig> states;
};

inline FlowResult flow_deterministic(ParticleConfig q, double dt, const MarkSet& ms,
                                     const PairTable& pt) {
    if (!(dt >= 0.0) || !std::isfinite(dt)) {
        throw std::invalid_argument("flow: dt must be finite and >= 0");
    }
    q.validate(ms);
    FlowResult out;
    const double t_end = q.t + dt;
    while (true) {
        const detail::NextEvent ev = detail::scan_next(q, pt);
        if (!ev.any || q.t + ev.dt > t_end) break;
        detail::advance_free(q, pt, ev.dt);
        Event rec;
        rec.t = q.t;
        switch (ev.what) {
            case detail::NextEvent::WallLo: {
                rec.kind = Event::Kind::WallExit;
                rec.z = q.a_lo;
                rec.marks = {q.labels[0], q.labels[1]};
                q.z.erase(q.z.begin());
                q.labels.erase(q.labels.begin());
                break;
            }
            case detail::NextEvent::WallHi: {
                rec.kind = Event::Kind::WallExit;
                rec.z = q.a_hi;
                rec.marks = {q.labels[q.n() - 1], q.labels[q.n()]};
                q.z.pop_back();
                q.labels.pop_back();
                break;
            }
            case detail::NextEvent::Collide: {
                const std::size_t k = ev.index;
                rec.kind = Event::Kind::Coagulate;
                rec.z = q.z[k];
                rec.marks = {q.labels[k], q.labels[k + 1], q.labels[k + 2]};
                rec.sigma = pt.alpha_of(q.labels[k + 1], q.labels[k + 2]) -
                            pt.alpha_of(q.labels[k], q.labels[k + 1]);
                q.z.erase(q.z.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                q.labels.erase(q.labels.begin() + static_cast<std::ptrdiff_t>(k) + 1);
                break;
            }
        }
        out.events.push_back(std::move(rec));
        out.states.push_back(q);
    }
    detail::advance_free(q, pt, t_end - q.t);
    q.t = t_end;
    out.q = std::move(q);
    return out;
}

// A full run: the initial state, every event (deterministic and stochastic)
// in time order, the state right after each event, and the state at the end
// of the horizon. Between consecutive records the motion is free, so any
// intermediate state reconstructs exactly by linear advance.
struct Trajectory {
    ParticleConfig initial;
    EventLog log;
    std::vector<ParticleConfig> states;  // one per log record
    ParticleConfig last;

    // Configuration at any time inside the horizon.
    ParticleConfig at_time(double t, const PairTable& pt) const {
        const double tol = 1e-12 * (1.0 + std::abs(last.t));
        if (t < initial.t - tol || t > last.t + tol) {
            throw std::out_of_range("trajectory: time outside the horizon");
        }
        t = std::clamp(t, initial.t, last.t);
        const ParticleConfig* base = &initial;
        for (std::size_t k = 0; k < states.size(); ++k) {
            if (log.records[k].t <= t) {
                base = &states[k];
            } else {
                break;
            }
        }
        ParticleConfig out = *base;
        detail::advance_free(out, pt, t - out.t);
        out.t = t;
        return out;
    }

    // The mark prevailing at (x, t): the right-continuous step profile.
    std::size_t profile_at(double x, double t, const PairTable& pt) const {
        const ParticleConfig q = at_time(t, pt);
        if (x < q.a_lo || x > q.a_hi) {
            throw std::out_of_range("trajectory: x outside the span");
        }
        std::size_t i = 0;
        while (i < q.n() && q.z[i] <= x) ++i;
        return q.labels[i];
    }
};

// Runs the particle system from q0 up to time t1: deterministic flow
// punctuated by stochastic jumps whose times solve
//     integral of r(theta, flowed state) d theta = Exp(1),
// integrated piecewise between deterministic events (adaptive Simpson) and
// inverted by bisection. At each jump the channel (left creation,
// fragmentation of particle k, right creation) is drawn proportionally to
// its rate and the inserted mark by inverse-CDF over the atoms. Everything
// is logged; identical streams reproduce bit-identical logs. More than
// max_jumps stochastic jumps is treated as a runaway and throws.
inline Trajectory simulate(const ParticleConfig& q0, const Kernel& f, const MarginalField& ell,
                           double t1, RngStream& rng, std::size_t max_jumps = 1000000) {
    const MarkSet& ms = f.marks;
    const PairTable& pt = f.pairs;
    q0.validate(ms);
    if (ell.nmarks() != ms.size()) {
        throw std::invalid_argument("simulate: marginal/kernel mark count mismatch");
    }
    if (!(t1 >= q0.t)) {
        throw std::invalid_argument("simulate: horizon ends before the start time");
    }
    const double ttol = 1e-9 * (1.0 + std::abs(t1 - q0.t));
    if (q0.t < f.t_min() - ttol || t1 > f.t_max() + ttol) {
        throw std::invalid_argument("simulate: horizon not covered by the kernel slices");
    }
    if (q0.t < ell.t_min() - ttol || t1 > ell.t_max() + ttol) {
        throw std::invalid_argument("simulate: horizon not covered by the marginal slices");
    }
    const double gtol = 1e-9 * f.grid.dx;
    if (q0.a_lo < f.grid.x0 - gtol || q0.a_hi > f.grid.x_max() + gtol) {
        throw std::invalid_argument("simulate: span not covered by the kernel grid");
    }
    const double mtol = 1e-9 * ell.grid.dx;
    if (q0.a_lo < ell.grid.x0 - mtol || q0.a_lo > ell.grid.x_max() + mtol) {
        throw std::invalid_argument("simulate: lower wall not covered by the marginal grid");
    }

    Trajectory tr;
    tr.initial = q0;
    ParticleConfig q = q0;
    std::size_t jumps = 0;
    double clock = rng.exponential();

    auto absorb_flow = [&tr](FlowResult&& fr) {
        for (std::size_t i = 0; i < fr.events.size(); ++i) {
            tr.log.records.push_back(std::move(fr.events[i]));
            tr.states.push_back(std::move(fr.states[i]));
        }
        return std::move(fr.q);
    };

    while (q.t < t1) {
        const double dt_det = first_event_dt(q, pt);
        if (dt_det == 0.0) {
            // Boundary-state normalization: instantaneous merges and exits.
            q = absorb_flow(flow_deterministic(q, 0.0, ms, pt));
            continue;
        }
        const double t_next = std::min(t1, dt_det == std::numeric_limits<double>::infinity()
                                               ? t1
                                               : q.t + dt_det);

        // The particle rate along the free motion of this segment.
        ParticleConfig probe = q;
        auto rate_at = [&](double th) {
            for (std::size_t k = 0; k < q.z.size(); ++k) {
                double y = q.z[k] + q.velocity(pt, k) * (th - q.t);
                probe.z[k] = std::clamp(y, q.a_lo, q.a_hi);
            }
            probe.t = th;
            return total_rate(probe, f, ell, th).total;
        };
        const double burned = detail::adaptive_simpson(rate_at, q.t, t_next, detail::kRateTol);
        if (burned < clock) {
            clock -= burned;
            q = absorb_flow(flow_deterministic(q, t_next - q.t, ms, pt));
            continue;
        }

        // The clock rings inside this segment: locate the jump time, move
        // there, and insert the sampled mark.
        const double ts = detail::invert_cumulative(rate_at, q.t, t_next, clock);
        detail::advance_free(q, pt, ts - q.t);
        q.t = ts;
        const RateBreakdown rb = total_rate(q, f, ell, ts);
        std::vector<double> channel(q.n() + 2, 0.0);
        channel.front() = rb.create_left;
        for (std::size_t k = 0; k < q.n(); ++k) channel[1 + k] = rb.fragment[k];
        channel.back() = rb.create_right;
        const std::size_t ch = rng.discrete(channel);

        Event rec;
        rec.t = ts;
        std::vector<double> atom_w(ms.size(), 0.0);
        if (ch == 0) {
            const std::size_t bottom = q.labels.front();
            for (std::size_t j = 0; j < bottom; ++j) {
                atom_w[j] = ms.weight(j) * creation_rate_left(f, ell, q.a_lo, ts, j, bottom);
            }
            const std::size_t star = rng.discrete(atom_w);
            rec.kind = Event::Kind::CreateLeft;
            rec.z = q.a_lo;
            rec.marks = {star, bottom};
            q.z.insert(q.z.begin(), q.a_lo);
            q.labels.insert(q.labels.begin(), star);
        } else if (ch == q.n() + 1) {
            const std::size_t top = q.labels.back();
            for (std::size_t j = top + 1; j < ms.size(); ++j) {
                atom_w[j] = ms.weight(j) * creation_rate_right(f, q.a_hi, ts, top, j);
            }
            const std::size_t star = rng.discrete(atom_w);
            rec.kind = Event::Kind::CreateRight;
            rec.z = q.a_hi;
            rec.marks = {top, star};
            q.z.push_back(q.a_hi);
            q.labels.push_back(star);
        } else {
            const std::size_t k = ch - 1;
            const std::size_t a = q.labels[k];
            const std::size_t b = q.labels[k + 1];
            for (std::size_t m = a + 1; m < b; ++m) {
                atom_w[m] = ms.weight(m) * fragmentation_rate(f, q.z[k], ts, a, m, b);
            }
            const std::size_t star = rng.discrete(atom_w);
            rec.kind = Event::Kind::Fragment;
            rec.z = q.z[k];
            rec.marks = {a, star, b};
            rec.sigma = pt.alpha_of(star, b) - pt.alpha_of(a, star);
            const double zk = q.z[k];
            q.z.insert(q.z.begin() + static_cast<std::ptrdiff_t>(k), zk);
            q.labels.insert(q.labels.begin() + static_cast<std::ptrdiff_t>(k) + 1, star);
        }
        q.validate(ms);
        tr.log.records.push_back(std::move(rec));
        tr.states.push_back(q);
        if (++jumps > max_jumps) {
            throw std::runtime_error("simulate: more than " + std::to_string(max_jumps) +
                                     " stochastic jumps (runaway)");
        }
        clock = rng.exponential();
    }
    tr.last = std::move(q);
    return tr;
}

}  // namespace gibbstess
