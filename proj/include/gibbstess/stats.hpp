#pragma once

// Statistical checks shared by the verification experiments: per-cell z
// scores against Poisson expectations, Pearson goodness-of-fit with cell
// pooling, a Fisher-z test for serial correlation, and a deterministic
// ordered reduction for replica-parallel estimates.
//
// Thresholds used by the experiments are pre-registered by the callers
// (|z| <= 4 per cell with at most 50 cells compared, chi-square p >= 1e-3);
// this header only supplies the machinery.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gibbstess {

inline double chi_square_sf(double stat, double dof) {
    if (!(dof > 0.0)) throw std::invalid_argument("chi_square_sf: dof must be positive");
    if (stat <= 0.0) return 1.0;
    boost::math::chi_squared dist(dof);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double chi_square_quantile(double p, double dof) {
    boost::math::chi_squared dist(dof);
    return boost::math::quantile(dist, p);
}

inline double normal_sf(double z) {
    boost::math::normal dist;
    return boost::math::cdf(boost::math::complement(dist, z));
}

// Two-sided p-value of a standard-normal score.
inline double normal_two_sided_p(double z) { return 2.0 * normal_sf(std::abs(z)); }

// Poisson-count z score: (observed - expected) / sqrt(expected).
inline double poisson_z(double observed, double expected) {
    if (!(expected > 0.0)) throw std::invalid_argument("poisson_z: expected must be positive");
    return (observed - expected) / std::sqrt(expected);
}

// One compared cell of an experiment, kept for reporting.
struct CellCheck {
    std::string label;
    double observed = 0.0;
    double expected = 0.0;
    double z = 0.0;
};

// Build per-cell z scores, pooling adjacent low-expectation cells (in index
// order) until each compared cell has expected >= min_expected. A trailing
// remainder below the threshold is merged into the previous cell. Labels of
// pooled cells are joined with '+'.
inline std::vector<CellCheck> z_cells(const std::vector<double>& observed,
                                      const std::vector<double>& expected,
                                      const std::vector<std::string>& labels,
                                      double min_expected = 10.0) {
    if (observed.size() != expected.size() || observed.size() != labels.size()) {
        throw std::invalid_argument("z_cells: size mismatch");
    }
    std::vector<CellCheck> cells;
    CellCheck acc;
    bool open = false;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!open) {
            acc = CellCheck{labels[i], observed[i], expected[i], 0.0};
            open = true;
        } else {
            acc.label += "+" + labels[i];
            acc.observed += observed[i];
            acc.expected += expected[i];
        }
        if (acc.expected >= min_expected) {
            cells.push_back(acc);
            open = false;
        }
    }
    if (open) {
        if (!cells.empty()) {
            cells.back().label += "+" + acc.label;
            cells.back().observed += acc.observed;
            cells.back().expected += acc.expected;
        } else if (acc.expected > 0.0) {
            cells.push_back(acc);
        }
    }
    for (CellCheck& c : cells) c.z = poisson_z(c.observed, c.expected);
    return cells;
}

inline double max_abs_z(const std::vector<CellCheck>& cells) {
    double m = 0.0;
    for (const CellCheck& c : cells) m = std::max(m, std::abs(c.z));
    return m;
}

struct ChiSquareResult {
    double stat = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
    std::size_t cells_used = 0;  // after pooling
};

// Pearson goodness-of-fit against fixed expectations (no fitted parameters:
// dof = cells - 1 when the totals are matched, cells otherwise). Cells are
// pooled in index order until expected >= min_expected, Cochran's rule.
inline ChiSquareResult chi_square_gof(const std::vector<double>& observed,
                                      const std::vector<double>& expected,
                                      double min_expected = 5.0,
                                      bool totals_matched = true) {
    if (observed.size() != expected.size() || observed.empty()) {
        throw std::invalid_argument("chi_square_gof: size mismatch or empty");
    }
    std::vector<std::string> labels(observed.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = std::to_string(i);
    const std::vector<CellCheck> cells = z_cells(observed, expected, labels, min_expected);
    ChiSquareResult r;
    r.cells_used = cells.size();
    for (const CellCheck& c : cells) {
        const double d = c.observed - c.expected;
        r.stat += d * d / c.expected;
    }
    const std::size_t sub = totals_matched ? 1 : 0;
    if (cells.size() <= sub) {
        // Everything pooled into one cell: no goodness-of-fit information.
        r.dof = 0.0;
        r.p_value = 1.0;
        return r;
    }
    r.dof = static_cast<double>(cells.size() - sub);
    r.p_value = chi_square_sf(r.stat, r.dof);
    return r;
}

// Fisher-z test for lag-1 serial correlation in a sequence. Under
// independence, atanh(r) * sqrt(n - 3) is approximately standard normal,
// where r is the sample correlation of (x_k, x_{k+1}) pairs.
inline double lag1_fisher_z(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 8) throw std::invalid_argument("lag1_fisher_z: needs at least 8 points");
    const std::size_t m = n - 1;
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        mx += xs[k];
        my += xs[k + 1];
    }
    mx /= static_cast<double>(m);
    my /= static_cast<double>(m);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double a = xs[k] - mx;
        const double b = xs[k + 1] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;  // constant sequence: no evidence
    double r = sxy / std::sqrt(sxx * syy);
    // Clamp away from the poles of atanh for numerical safety.
    r = std::max(-0.999999, std::min(0.999999, r));
    return std::atanh(r) * std::sqrt(static_cast<double>(m) - 3.0);
}

// Deterministic replica-parallel evaluation: runs fn(i) for i in [0, n) on a
// fixed-size thread pool, storing results in per-replica slots, so any later
// sequential reduction over the returned vector is independent of thread
// scheduling.
template <typename T>
std::vector<T> parallel_map_ordered(std::size_t n, const std::function<T(std::size_t)>& fn,
                                    unsigned nthreads = 0) {
    if (nthreads == 0) {
        nthreads = std::thread::hardware_concurrency();
        if (nthreads == 0) nthreads = 1;
    }
    std::vector<T> slots(n);
    if (n == 0) return slots;
    nthreads = static_cast<unsigned>(std::min<std::size_t>(nthreads, n));
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_lock;
    std::atomic<std::size_t> next{0};
    pool.reserve(nthreads);
    for (unsigned w = 0; w < nthreads; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    slots[i] = fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> g(error_lock);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return slots;
}

}  // namespace gibbstess
