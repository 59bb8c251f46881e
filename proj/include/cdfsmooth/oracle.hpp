#pragma once

// Brute-force reference implementations. Slow on purpose: every answer is
// recomputed from scratch with a plain two-pass least-squares fit, so these
// routines can check the incremental machinery in core_model.hpp and the
// greedy selection in smoothing.hpp.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdfsmooth/core_model.hpp"
#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/sorted_key_set.hpp"

namespace cdfsmooth::oracle {

inline constexpr std::uint64_t kMaxBruteForceSpread = 100'000;
inline constexpr std::size_t kMaxExhaustiveCandidates = 30;
inline constexpr std::size_t kMaxExhaustiveBudget = 6;

/// A point of the (key, rank) scatter with a possibly real-valued key.
struct Point {
    long double key;
    long double rank;
};

struct NaiveFit {
    long double slope = 0.0L;
    long double intercept = 0.0L;
    long double sse = 0.0L;
};

/// Two-pass least squares over arbitrary points; keys are shifted by
/// `origin` before fitting.
[[nodiscard]] inline NaiveFit naive_fit(std::span<const Point> pts, long double origin = 0.0L) {
    const long double n = static_cast<long double>(pts.size());
    long double mk = 0, my = 0;
    for (const auto& p : pts) {
        mk += p.key - origin;
        my += p.rank;
    }
    mk /= n;
    my /= n;
    long double cov = 0, var = 0;
    for (const auto& p : pts) {
        cov += (p.key - origin - mk) * (p.rank - my);
        var += (p.key - origin - mk) * (p.key - origin - mk);
    }
    NaiveFit f;
    f.slope = cov / var;
    f.intercept = my - f.slope * mk;
    for (const auto& p : pts) {
        const long double e = f.slope * (p.key - origin) + f.intercept - p.rank;
        f.sse += e * e;
    }
    f.intercept -= f.slope * origin;
    return f;
}

/// Sum over i of (model(keys[i]) - i)^2, evaluated term by term.
[[nodiscard]] inline double direct_sse(std::span<const Key> keys, const LinearModel& model) {
    long double sse = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const long double e = static_cast<long double>(model.slope) * static_cast<long double>(keys[i]) +
                              static_cast<long double>(model.intercept) - static_cast<long double>(i);
        sse += e * e;
    }
    return static_cast<double>(sse);
}

/// Scatter of `keys` with one extra point at real-valued `x`, inserted at
/// `rank`; keys at or after `rank` have their rank shifted by one.
[[nodiscard]] inline std::vector<Point> with_point(std::span<const Key> keys, long double x, std::size_t rank) {
    std::vector<Point> pts;
    pts.reserve(keys.size() + 1);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const std::size_t r = i < rank ? i : i + 1;
        pts.push_back({static_cast<long double>(keys[i]), static_cast<long double>(r)});
    }
    pts.push_back({x, static_cast<long double>(rank)});
    return pts;
}

/// Least-squares fit of the merged, sorted set keys ∪ extra (ranks recomputed).
[[nodiscard]] inline NaiveFit fit_union(std::span<const Key> keys, std::span<const Key> extra) {
    std::vector<Key> merged;
    merged.reserve(keys.size() + extra.size());
    std::merge(keys.begin(), keys.end(), extra.begin(), extra.end(), std::back_inserter(merged));
    std::vector<Point> pts(merged.size());
    for (std::size_t i = 0; i < merged.size(); ++i) {
        pts[i] = {static_cast<long double>(merged[i] - merged.front()), static_cast<long double>(i)};
    }
    return naive_fit(pts);
}

/// Every integer strictly inside (min, max) that is not a key, ascending.
[[nodiscard]] inline std::vector<Key> legal_candidates(std::span<const Key> keys) {
    std::vector<Key> out;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        for (Key v = keys[i] + 1; v < keys[i + 1]; ++v) out.push_back(v);
    }
    return out;
}

struct BruteForceResult {
    CandidatePoint best;
    std::size_t evaluations = 0;
    bool found = false;
};

/// Refits from scratch for every legal candidate and returns the minimum-SSE
/// one (smallest key on ties). Refuses key spreads above kMaxBruteForceSpread.
[[nodiscard]] inline BruteForceResult brute_force_best_candidate(std::span<const Key> keys) {
    if (keys.size() < 2) throw InvalidInput("brute force needs at least two keys");
    if (keys.back() - keys.front() > kMaxBruteForceSpread) {
        throw OracleLimitExceeded("key spread too large for brute force");
    }
    BruteForceResult res;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        for (Key v = keys[i] + 1; v < keys[i + 1]; ++v) {
            const Key single[1] = {v};
            const double sse = static_cast<double>(fit_union(keys, single).sse);
            ++res.evaluations;
            if (!res.found || sse < res.best.sse) {
                res.best = {v, i + 1, sse};
                res.found = true;
            }
        }
    }
    return res;
}

struct OracleReport {
    std::vector<Key> best_subset;
    double best_sse = 0.0;
    std::size_t evaluations = 0;
    std::chrono::nanoseconds wall_time{0};
};

/// Tries every subset of at most `budget` legal candidates (lexicographic
/// order, smaller subsets first) and returns the global SSE minimum over
/// keys ∪ subset. First minimum found wins ties.
[[nodiscard]] inline OracleReport exhaustive_smooth(std::span<const Key> keys, std::size_t budget) {
    if (keys.size() < 2) throw InvalidInput("exhaustive smoothing needs at least two keys");
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Key> cands = legal_candidates(keys);
    if (cands.size() > kMaxExhaustiveCandidates || budget > kMaxExhaustiveBudget) {
        throw OracleLimitExceeded("exhaustive smoothing limited to " +
                                  std::to_string(kMaxExhaustiveCandidates) + " candidates and budget " +
                                  std::to_string(kMaxExhaustiveBudget));
    }
    OracleReport rep;
    rep.best_sse = static_cast<double>(fit_union(keys, {}).sse);
    rep.evaluations = 1;

    std::vector<std::size_t> idx;
    std::vector<Key> subset;
    const std::size_t p = cands.size();
    for (std::size_t size = 1; size <= std::min(budget, p); ++size) {
        idx.resize(size);
        for (std::size_t i = 0; i < size; ++i) idx[i] = i;
        while (true) {
            subset.clear();
            for (std::size_t i : idx) subset.push_back(cands[i]);
            const double sse = static_cast<double>(fit_union(keys, subset).sse);
            ++rep.evaluations;
            if (sse < rep.best_sse) {
                rep.best_sse = sse;
                rep.best_subset = subset;
            }
            // Next combination in lexicographic order.
            std::size_t pos = size;
            while (pos > 0 && idx[pos - 1] == p - size + pos - 1) --pos;
            if (pos == 0) break;
            ++idx[pos - 1];
            for (std::size_t j = pos; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    rep.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
    return rep;
}

}  // namespace cdfsmooth::oracle
