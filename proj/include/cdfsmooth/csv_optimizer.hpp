#pragma once

// Bottom-up subtree merging driven by CDF smoothing.
//
// For every node that has descendants, starting near the bottom of the tree
// and moving up to `stop_level`, the keys of the node's subtree are collected
// and smoothed, and a replacement node is built over keys plus virtual
// points. The replacement is installed only if it passes the mode's gate:
//
// exact:  the subtree gets strictly shorter, its total model SSE strictly
//         drops, and no key ends up deeper than before.
// gapped: the per-key expected query cost changes by less than threshold_c,
//         with cost = search_constant * (1 + log2(1 + |predicted - actual|))
//                   + traversal_constant * level.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdfsmooth/core_model.hpp"
#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/index.hpp"
#include "cdfsmooth/smoothing.hpp"

namespace cdfsmooth {

struct CostModelParams {
    double search_constant = 8.0;      // ns per in-node probe
    double traversal_constant = 25.0;  // ns per level
    double threshold_c = -1.0;         // ns per key; must be negative

    void validate() const {
        if (!(search_constant > 0.0) || !(traversal_constant > 0.0)) {
            throw InvalidInput("cost constants must be positive");
        }
        if (!(threshold_c < 0.0)) throw InvalidInput("threshold_c must be below 0");
    }
};

struct OptimizerOptions {
    std::optional<std::size_t> start_level_offset;  // default: 1 in exact mode, 0 in gapped mode
    std::size_t stop_level = 2;
    std::size_t max_subtree_keys = 8192;  // larger subtrees are not smoothed
    std::size_t max_passes = 16;          // passes repeat until nothing is merged
};

struct MergeDecision {
    bool accepted = false;
    std::size_t level = 0;
    Key lo_key = 0;
    Key hi_key = 0;
    std::size_t keys = 0;
    std::size_t budget = 0;
    std::size_t virtual_points = 0;
    double cost_delta = 0.0;
    double realized_cost_delta = std::numeric_limits<double>::quiet_NaN();
    double sse_before = 0.0;
    double sse_after = 0.0;
    std::size_t height_before = 0;
    std::size_t height_after = 0;
    std::size_t slots_before = 0;
    std::size_t slots_after = 0;
    bool demotes = false;
};

struct Promotion {
    Key key = 0;
    std::size_t old_level = 0;
    std::size_t new_level = 0;
};

struct OptimizationReport {
    std::vector<Promotion> promoted;
    std::vector<MergeDecision> decisions;
    std::size_t merges_accepted = 0;
    std::size_t skipped_large = 0;
    std::size_t passes = 0;
    std::size_t promotable_keys = 0;  // keys at level >= 3 before optimizing
    std::size_t nodes_before = 0;
    std::size_t nodes_after = 0;
    std::size_t slots_before = 0;
    std::size_t slots_after = 0;
    std::size_t virtual_slots_added = 0;
    std::size_t budget_total = 0;         // sum of floor(alpha * n_subtree) over accepted merges
    std::size_t reallocation_slack = 0;   // non-virtual slot growth of accepted rebuilds
    std::chrono::nanoseconds wall_time{0};

    [[nodiscard]] long long slots_added() const noexcept {
        return static_cast<long long>(slots_after) - static_cast<long long>(slots_before);
    }
    [[nodiscard]] long long nodes_removed() const noexcept {
        return static_cast<long long>(nodes_before) - static_cast<long long>(nodes_after);
    }
};

/// Keys of `node` and all its descendants, ascending.
[[nodiscard]] inline SortedKeySet collect_subtree_keys(const Node& node) {
    if (!has_subtree(node)) throw InvalidInput("collect_subtree_keys needs a node with descendants");
    std::vector<Record> recs;
    collect_records(node, recs);
    std::vector<Key> keys(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) keys[i] = recs[i].key;
    return SortedKeySet(std::move(keys));
}

namespace detail {

[[nodiscard]] inline double expected_searches(std::size_t predicted, std::size_t actual) noexcept {
    const double d = predicted > actual ? static_cast<double>(predicted - actual) : static_cast<double>(actual - predicted);
    return 1.0 + std::log2(1.0 + d);
}

[[nodiscard]] inline double subtree_sse(const Node& node) {
    double s = 0.0;
    const auto rec = [&](auto& self, const Node& n) -> void {
        s += n.fit_sse;
        for (const auto& slot : n.slots) {
            if (const auto* c = std::get_if<std::unique_ptr<Node>>(&slot)) self(self, **c);
        }
        for (const auto& c : n.children) self(self, *c);
    };
    rec(rec, node);
    return s;
}

// Per-key (level, expected searches) of a detached node, in key order.
inline void key_costs(const Node& node, bool gapped, std::vector<std::size_t>& levels, std::vector<double>& searches) {
    const auto rec = [&](auto& self, const Node& n) -> void {
        if (!n.slots.empty()) {
            for (const auto& s : n.slots) {
                if (std::holds_alternative<Record>(s)) {
                    levels.push_back(n.level);
                    searches.push_back(0.0);
                } else if (const auto* c = std::get_if<std::unique_ptr<Node>>(&s)) {
                    self(self, **c);
                }
            }
        } else if (n.gapped_inner()) {
            for (const auto& c : n.children) self(self, *c);
        } else {
            for (std::size_t i = 0; i < n.keys.size(); ++i) {
                if (!n.occupied[i]) continue;
                levels.push_back(n.level);
                searches.push_back(gapped ? expected_searches(n.model.slot(n.keys[i], n.keys.size()), i) : 0.0);
            }
        }
    };
    rec(rec, node);
}

template <class F>
void for_each_node(const Node& node, F&& f) {
    const auto rec = [&](auto& self, const Node& n) -> void {
        f(n);
        for (const auto& s : n.slots) {
            if (const auto* c = std::get_if<std::unique_ptr<Node>>(&s)) self(self, **c);
        }
        for (const auto& c : n.children) self(self, *c);
    };
    rec(rec, node);
}

[[nodiscard]] inline std::size_t newest_stamp(const Node& node) {
    std::size_t s = 0;
    for_each_node(node, [&](const Node& n) { s = std::max(s, n.stamp); });
    return s;
}

inline void set_stamp(Node& node, std::size_t stamp) {
    node.stamp = stamp;
    for (auto& s : node.slots) {
        if (auto* c = std::get_if<std::unique_ptr<Node>>(&s)) set_stamp(**c, stamp);
    }
    for (auto& c : node.children) set_stamp(*c, stamp);
}

struct KeyCosts {
    std::vector<std::size_t> levels;
    std::vector<double> searches;
};

// Levels and expected searches of `recs` as the live index resolves them.
[[nodiscard]] inline KeyCosts live_costs(const Index& idx, std::span<const Record> recs) {
    const bool gapped = idx.config().mode == IndexMode::gapped;
    KeyCosts c;
    c.levels.reserve(recs.size());
    c.searches.reserve(recs.size());
    for (const auto& r : recs) {
        const auto t = idx.lookup(r.key);
        c.levels.push_back(t.depth);
        c.searches.push_back(gapped ? expected_searches(t.predicted, t.actual) : 0.0);
    }
    return c;
}

[[nodiscard]] inline double mean_cost_delta(const KeyCosts& before, const std::vector<std::size_t>& levels_after,
                                            const std::vector<double>& searches_after, const CostModelParams& p) {
    if (before.levels.empty()) return 0.0;
    long double total = 0.0L;
    for (std::size_t i = 0; i < before.levels.size(); ++i) {
        total += p.search_constant * (searches_after[i] - before.searches[i]) +
                 p.traversal_constant *
                     (static_cast<double>(levels_after[i]) - static_cast<double>(before.levels[i]));
    }
    return static_cast<double>(total / static_cast<long double>(before.levels.size()));
}

struct MergePlan {
    MergeDecision decision;
    std::unique_ptr<Node> rebuilt;
};

[[nodiscard]] inline MergePlan plan_merge(const Index& idx, const Node& node, std::span<const Record> recs,
                                          const KeyCosts& before, const VirtualPointSet& smoothed, std::size_t budget,
                                          const CostModelParams& params) {
    MergePlan plan;
    auto& d = plan.decision;
    d.level = node.level;
    d.keys = recs.size();
    d.budget = budget;
    d.lo_key = recs.empty() ? 0 : recs.front().key;
    d.hi_key = recs.empty() ? 0 : recs.back().key;
    d.height_before = subtree_height(node);
    d.sse_before = subtree_sse(node);
    d.slots_before = subtree_slots(node);
    if (!has_subtree(node) || recs.size() < 2) return plan;

    const auto virt = smoothed.sorted_keys();
    plan.rebuilt = idx.build_subtree(recs, virt, node.level);
    d.virtual_points = plan.rebuilt->virtual_points;
    d.height_after = subtree_height(*plan.rebuilt);
    d.sse_after = subtree_sse(*plan.rebuilt);
    d.slots_after = subtree_slots(*plan.rebuilt);

    const bool gapped = idx.config().mode == IndexMode::gapped;
    std::vector<std::size_t> levels_after;
    std::vector<double> searches_after;
    key_costs(*plan.rebuilt, gapped, levels_after, searches_after);
    for (std::size_t i = 0; i < levels_after.size(); ++i) {
        if (levels_after[i] > before.levels[i]) d.demotes = true;
    }
    d.cost_delta = mean_cost_delta(before, levels_after, searches_after, params);

    if (smoothed.points.empty()) return plan;
    if (gapped) {
        d.accepted = d.cost_delta < params.threshold_c;
    } else {
        d.accepted = d.height_after < d.height_before && d.sse_after < d.sse_before && !d.demotes;
    }
    return plan;
}

}  // namespace detail

/// Gate decision for replacing `node` by a rebuild over its subtree keys plus
/// `smoothed` virtual points. Does not modify the index.
[[nodiscard]] inline MergeDecision evaluate_merge(const Index& idx, const Node& node, const VirtualPointSet& smoothed,
                                                  const CostModelParams& params, std::size_t budget = 0) {
    std::vector<Record> recs;
    collect_records(node, recs);
    const auto before = detail::live_costs(idx, recs);
    return detail::plan_merge(idx, node, recs, before, smoothed, budget, params).decision;
}

[[nodiscard]] inline OptimizationReport optimize(Index& idx, const SmoothingConfig& cfg, const CostModelParams& params,
                                                 const OptimizerOptions& opts = {}) {
    params.validate();
    if (opts.stop_level < 2) throw InvalidInput("stop_level must be >= 2");
    const auto t0 = std::chrono::steady_clock::now();
    const bool gapped = idx.config().mode == IndexMode::gapped;
    const std::size_t offset = opts.start_level_offset.value_or(gapped ? 0 : 1);

    OptimizationReport rep;
    std::vector<Record> original;
    std::vector<std::size_t> original_levels;
    idx.for_each([&](const Record& r, std::size_t level) {
        original.push_back(r);
        original_levels.push_back(level);
        if (level >= 3) ++rep.promotable_keys;
    });
    const auto st0 = idx.stats();
    rep.nodes_before = st0.node_count;
    rep.slots_before = st0.total_slots;

    for (std::size_t pass = 0; pass < opts.max_passes; ++pass) {
        std::size_t deepest = 0;
        idx.visit_nodes([&](const Node& n) {
            if (has_subtree(n)) deepest = std::max(deepest, n.level);
        });
        const std::size_t start = pass == 0 ? (deepest >= opts.stop_level + offset ? deepest - offset : 0) : deepest;
        if (start < opts.stop_level) break;
        ++rep.passes;
        std::size_t accepted = 0;
        for (std::size_t level = start;; --level) {
            std::vector<Node*> parents;
            idx.visit_nodes([&](Node& n) {
                if (n.level == level && has_subtree(n)) parents.push_back(&n);
            });
            for (Node* node : parents) {
                if (pass > 0 && detail::newest_stamp(*node) < pass) continue;
                std::vector<Record> recs;
                collect_records(*node, recs);
                if (recs.size() > opts.max_subtree_keys) {
                    ++rep.skipped_large;
                    continue;
                }
                std::vector<Key> keys(recs.size());
                for (std::size_t i = 0; i < recs.size(); ++i) keys[i] = recs[i].key;
                const SortedKeySet ks(std::move(keys));
                const std::size_t budget = cfg.budget(ks.size());
                const auto smoothed = budget > 0 ? smooth(ks, cfg) : VirtualPointSet{{}, {0.0}, {}};
                const auto before = detail::live_costs(idx, recs);
                auto plan = detail::plan_merge(idx, *node, recs, before, smoothed, budget, params);
                if (plan.decision.accepted) {
                    detail::set_stamp(*plan.rebuilt, pass + 1);
                    Index::replace_node(*node, std::move(plan.rebuilt));
                    const auto after = detail::live_costs(idx, recs);
                    plan.decision.realized_cost_delta = detail::mean_cost_delta(before, after.levels, after.searches, params);
                    ++accepted;
                    ++rep.merges_accepted;
                    rep.virtual_slots_added += plan.decision.virtual_points;
                    rep.budget_total += budget;
                    const std::size_t grown = plan.decision.slots_after > plan.decision.slots_before
                                                  ? plan.decision.slots_after - plan.decision.slots_before
                                                  : 0;
                    rep.reallocation_slack += grown > plan.decision.virtual_points ? grown - plan.decision.virtual_points : 0;
                }
                rep.decisions.push_back(plan.decision);
            }
            if (level == opts.stop_level) break;
        }
        if (accepted == 0) break;
    }

    std::size_t i = 0;
    idx.for_each([&](const Record& r, std::size_t level) {
        if (r.key == original[i].key && level < original_levels[i]) {
            rep.promoted.push_back({r.key, original_levels[i], level});
        }
        ++i;
    });
    const auto st1 = idx.stats();
    rep.nodes_after = st1.node_count;
    rep.slots_after = st1.total_slots;
    rep.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);
    return rep;
}

// Calibration ---------------------------------------------------------------

/// Returns the mean time in ns of `reps` lookups of `key` and fills `trace`.
using LookupTimer = std::function<double(const Index&, Key, std::size_t, LookupTrace&)>;

[[nodiscard]] inline double steady_clock_timer(const Index& idx, Key key, std::size_t reps, LookupTrace& trace) {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t sink = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        trace = idx.lookup(key);
        sink += trace.search_steps;
    }
    const auto t1 = std::chrono::steady_clock::now();
    volatile std::size_t keep = sink;
    (void)keep;
    return std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(std::max<std::size_t>(reps, 1));
}

struct CalibrationResult {
    CostModelParams params;
    bool calibrated = false;
    std::size_t samples = 0;
    double intercept = 0.0;
    std::string note;
};

inline constexpr std::size_t kMinCalibrationSamples = 100;

/// Least-squares fit of lookup time on [1, depth, search_steps]. Falls back
/// to `defaults` when there are too few samples, the design is rank
/// deficient, or a fitted constant is not positive. When no lookup searches
/// at all (exact mode), only the traversal constant is fitted.
[[nodiscard]] inline CalibrationResult calibrate_cost_constants(const Index& idx, std::span<const Key> sample_keys,
                                                                std::size_t repetitions,
                                                                const CostModelParams& defaults = {},
                                                                const LookupTimer& timer = steady_clock_timer) {
    if (repetitions < 1) throw InvalidInput("repetitions must be >= 1");
    CalibrationResult res;
    res.params = defaults;
    res.samples = sample_keys.size();
    if (sample_keys.size() < kMinCalibrationSamples) {
        res.note = "calibration failed: fewer than " + std::to_string(kMinCalibrationSamples) + " samples";
        return res;
    }
    const auto rows = static_cast<Eigen::Index>(sample_keys.size());
    Eigen::VectorXd y(rows), depth(rows), steps(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        LookupTrace t;
        y(i) = timer(idx, sample_keys[static_cast<std::size_t>(i)], repetitions, t);
        depth(i) = static_cast<double>(t.depth);
        steps(i) = static_cast<double>(t.search_steps);
    }
    const bool searches = steps.cwiseAbs().maxCoeff() > 0.0;
    Eigen::MatrixXd x(rows, searches ? 3 : 2);
    x.col(0).setOnes();
    x.col(1) = depth;
    if (searches) x.col(2) = steps;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.rows(), x.cols());
    qr.setThreshold(1e-9);
    qr.compute(x);
    if (qr.rank() < x.cols()) {
        res.note = "calibration failed: degenerate samples (no variance in depth or steps)";
        return res;
    }
    const Eigen::VectorXd beta = qr.solve(y);
    const double traversal = beta(1);
    const double search = searches ? beta(2) : defaults.search_constant;
    if (!(traversal > 0.0) || !(search > 0.0) || !std::isfinite(traversal) || !std::isfinite(search)) {
        res.note = "calibration failed: non-positive fitted constant";
        return res;
    }
    res.params.traversal_constant = traversal;
    res.params.search_constant = search;
    res.intercept = beta(0);
    res.calibrated = true;
    res.note = searches ? "fitted traversal and search constants" : "no searching lookups; fitted traversal constant only";
    return res;
}

}  // namespace cdfsmooth
