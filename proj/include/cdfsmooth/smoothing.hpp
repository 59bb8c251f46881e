#pragma once

// Greedy CDF smoothing of a single linear model: insert up to a budget of
// virtual points, one per round, each time choosing the candidate that
// lowers the total SSE the most.
//
// Candidates are integers strictly between adjacent keys. All candidates in
// one gap share an insertion rank, and along a gap the loss is unimodal, so
// each gap is reduced to one winner using the sign of the loss derivative at
// its two endpoints and an integer bisection when the signs differ.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cdfsmooth/core_model.hpp"
#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/sorted_key_set.hpp"

namespace cdfsmooth {

/// Integer candidates lo_key..hi_key inside one gap; all insert at `rank`.
struct Subsequence {
    Key lo_key = 0;
    Key hi_key = 0;
    std::size_t rank = 0;

    [[nodiscard]] std::uint64_t width() const noexcept { return hi_key - lo_key + 1; }
    friend bool operator==(const Subsequence&, const Subsequence&) = default;
};

struct SmoothingConfig {
    std::optional<double> alpha;
    std::optional<std::size_t> lambda;
    static constexpr bool require_strict_improvement = true;

    static SmoothingConfig with_alpha(double a) {
        SmoothingConfig c;
        c.alpha = a;
        return c;
    }
    static SmoothingConfig with_budget(std::size_t l) {
        SmoothingConfig c;
        c.lambda = l;
        return c;
    }

    /// lambda = floor(alpha * n) unless an explicit budget is set.
    [[nodiscard]] std::size_t budget(std::size_t n) const {
        if (lambda) return *lambda;
        if (!alpha) return 0;
        if (*alpha < 0.0 || !std::isfinite(*alpha)) throw InvalidInput("alpha must be finite and >= 0");
        return static_cast<std::size_t>(std::floor(*alpha * static_cast<double>(n)));
    }
};

struct VirtualPoint {
    Key key = 0;
    std::size_t rank = 0;  // rank at the time of insertion
    friend bool operator==(const VirtualPoint&, const VirtualPoint&) = default;
};

struct VirtualPointSet {
    std::vector<VirtualPoint> points;
    std::vector<double> sse_trace;  // base SSE first, then one entry per accepted point
    LinearModel final_model;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] double initial_sse() const noexcept { return sse_trace.front(); }
    [[nodiscard]] double final_sse() const noexcept { return sse_trace.back(); }

    [[nodiscard]] std::vector<Key> sorted_keys() const {
        std::vector<Key> out;
        out.reserve(points.size());
        for (const auto& p : points) out.push_back(p.key);
        std::sort(out.begin(), out.end());
        return out;
    }
};

/// One subsequence per gap of width >= 2 between adjacent keys.
[[nodiscard]] inline std::vector<Subsequence> enumerate_subsequences(std::span<const Key> keys) {
    std::vector<Subsequence> out;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (keys[i + 1] - keys[i] >= 2) out.push_back({keys[i] + 1, keys[i + 1] - 1, i + 1});
    }
    return out;
}

[[nodiscard]] inline std::vector<Subsequence> enumerate_subsequences(const SortedKeySet& keys) {
    return enumerate_subsequences(keys.keys());
}

namespace detail {

inline constexpr int kMaxBisectionSteps = 64;

[[nodiscard]] inline double clamp_loss(long double v) noexcept {
    return static_cast<double>(std::max(0.0L, v));
}

// Lower SSE wins; equal SSE keeps the smaller key.
[[nodiscard]] inline CandidatePoint better(const CandidatePoint& a, const CandidatePoint& b) noexcept {
    if (b.sse < a.sse) return b;
    if (a.sse < b.sse) return a;
    return a.key <= b.key ? a : b;
}

}  // namespace detail

/// Minimum-SSE candidate of one subsequence.
[[nodiscard]] inline CandidatePoint best_in_subsequence(const Subsequence& sub, const FitAggregates& agg) {
    const GapEvaluator gap = agg.gap(sub.rank);
    const auto at = [&](Key k) {
        return CandidatePoint{k, sub.rank, detail::clamp_loss(gap.loss(agg.offset(k)))};
    };
    if (sub.width() <= 2) return detail::better(at(sub.lo_key), at(sub.hi_key));

    std::uint64_t lo = agg.offset(sub.lo_key);
    std::uint64_t hi = agg.offset(sub.hi_key);
    const long double d_lo = gap.derivative(lo);
    const long double d_hi = gap.derivative(hi);
    if (!(d_lo < 0.0L && d_hi > 0.0L)) {
        // No interior minimum: it sits at an endpoint.
        return detail::better(at(sub.lo_key), at(sub.hi_key));
    }
    // Invariant: derivative(lo) < 0 <= derivative(hi).
    for (int step = 0; step < detail::kMaxBisectionSteps && hi - lo > 1; ++step) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (gap.derivative(mid) < 0.0L) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return detail::better(at(agg.origin() + lo), at(agg.origin() + hi));
}

/// Best candidate over every gap of the current base set, if any gap exists.
[[nodiscard]] inline std::optional<CandidatePoint> best_candidate(const FitAggregates& agg) {
    std::optional<CandidatePoint> best;
    const auto keys = agg.keys();
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (keys[i + 1] - keys[i] < 2) continue;
        const CandidatePoint c = best_in_subsequence({keys[i] + 1, keys[i + 1] - 1, i + 1}, agg);
        // Gaps are visited in ascending key order, so a strict comparison
        // keeps the smaller key on ties.
        if (!best || c.sse < best->sse) best = c;
    }
    return best;
}

/// Relative margin a candidate must beat the current SSE by; absorbs
/// rounding noise so that a numerically zero gain is not accepted.
inline constexpr double kImprovementMargin = 1e-12;

/// Greedy smoothing with early stop when no candidate lowers the SSE.
[[nodiscard]] inline VirtualPointSet smooth(const SortedKeySet& keys, const SmoothingConfig& cfg) {
    if (keys.size() < 2) throw InvalidInput("smoothing needs at least two keys");
    const std::size_t budget = cfg.budget(keys.size());
    FitAggregates agg = FitAggregates::build(keys);

    VirtualPointSet out;
    double current = detail::clamp_loss(agg.base_loss());
    out.sse_trace.push_back(current);
    while (out.points.size() < budget) {
        const auto best = best_candidate(agg);
        if (!best) break;
        const double threshold = current - kImprovementMargin * std::max(current, 1.0);
        if (!(best->sse < threshold)) break;
        agg.commit(*best);
        out.points.push_back({best->key, best->rank});
        out.sse_trace.push_back(best->sse);
        current = best->sse;
    }
    out.final_model = agg.base_model();
    return out;
}

}  // namespace cdfsmooth
