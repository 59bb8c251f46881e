#pragma once

// Benchmark building blocks shared by the command-line tool: timed query
// runs with per-level aggregation, the batched insertion series, and a
// quick self-check suite built on the brute-force oracles.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdfsmooth/csv_optimizer.hpp"
#include "cdfsmooth/index.hpp"
#include "cdfsmooth/oracle.hpp"
#include "cdfsmooth/smoothing.hpp"
#include "cdfsmooth/workloads.hpp"

namespace cdfsmooth::bench {

struct QuerySample {
    Key key = 0;
    bool found = false;
    std::size_t depth = 0;
    std::size_t steps = 0;
    double ns = 0.0;
};

/// Times every query with `timer` (each averaged over `repetitions` runs).
[[nodiscard]] inline std::vector<QuerySample> run_queries(const Index& idx, std::span<const Key> queries,
                                                          std::size_t repetitions,
                                                          const LookupTimer& timer = steady_clock_timer) {
    if (repetitions < 1) throw InvalidInput("repetitions must be >= 1");
    std::vector<QuerySample> out;
    out.reserve(queries.size());
    for (Key q : queries) {
        LookupTrace t;
        const double ns = timer(idx, q, repetitions, t);
        out.push_back({q, t.found, t.depth, t.search_steps, ns});
    }
    return out;
}

/// Times the same queries on two indexes, interleaved per query with the
/// order alternating, so cache warm-up does not favour either side.
[[nodiscard]] inline std::pair<std::vector<QuerySample>, std::vector<QuerySample>> run_queries_paired(
    const Index& a, const Index& b, std::span<const Key> queries, std::size_t repetitions,
    const LookupTimer& timer = steady_clock_timer) {
    if (repetitions < 1) throw InvalidInput("repetitions must be >= 1");
    std::pair<std::vector<QuerySample>, std::vector<QuerySample>> out;
    out.first.reserve(queries.size());
    out.second.reserve(queries.size());
    const auto one = [&](const Index& idx, Key q) {
        LookupTrace t;
        const double ns = timer(idx, q, repetitions, t);
        return QuerySample{q, t.found, t.depth, t.search_steps, ns};
    };
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (i % 2 == 0) {
            out.first.push_back(one(a, queries[i]));
            out.second.push_back(one(b, queries[i]));
        } else {
            out.second.push_back(one(b, queries[i]));
            out.first.push_back(one(a, queries[i]));
        }
    }
    return out;
}

struct LevelRow {
    std::size_t level = 0;
    std::size_t queries = 0;
    double mean_ns = 0.0;
    double mean_steps = 0.0;
};

struct QueryProfile {
    std::size_t queries = 0;
    std::size_t found = 0;
    double mean_depth = 0.0;
    double mean_steps = 0.0;
    double mean_ns = 0.0;
    double total_ns = 0.0;
    std::vector<LevelRow> levels;  // one row per level reached by at least one query
};

[[nodiscard]] inline QueryProfile profile(std::span<const QuerySample> samples) {
    QueryProfile p;
    p.queries = samples.size();
    std::vector<LevelRow> by_level;
    for (const auto& s : samples) {
        p.found += s.found;
        p.mean_depth += static_cast<double>(s.depth);
        p.mean_steps += static_cast<double>(s.steps);
        p.total_ns += s.ns;
        if (by_level.size() < s.depth + 1) by_level.resize(s.depth + 1);
        auto& row = by_level[s.depth];
        row.level = s.depth;
        ++row.queries;
        row.mean_ns += s.ns;
        row.mean_steps += static_cast<double>(s.steps);
    }
    if (p.queries > 0) {
        const auto q = static_cast<double>(p.queries);
        p.mean_depth /= q;
        p.mean_steps /= q;
        p.mean_ns = p.total_ns / q;
    }
    for (auto& row : by_level) {
        if (row.queries == 0) continue;
        row.mean_ns /= static_cast<double>(row.queries);
        row.mean_steps /= static_cast<double>(row.queries);
        p.levels.push_back(row);
    }
    return p;
}

/// Promoted keys counted against the promotable set (keys at level >= 3).
struct PromotionSummary {
    std::size_t promotable = 0;
    std::size_t promoted = 0;
    std::size_t unpromoted = 0;
    double promoted_pct = 0.0;
};

[[nodiscard]] inline PromotionSummary summarize_promotions(const OptimizationReport& rep) {
    PromotionSummary s;
    s.promotable = rep.promotable_keys;
    for (const auto& p : rep.promoted) s.promoted += p.old_level >= 3;
    s.unpromoted = s.promotable - s.promoted;
    s.promoted_pct = s.promotable == 0 ? 0.0 : 100.0 * static_cast<double>(s.promoted) / static_cast<double>(s.promotable);
    return s;
}

[[nodiscard]] inline double percent_change(std::size_t before, std::size_t after) {
    if (before == 0) return 0.0;
    return 100.0 * (static_cast<double>(after) - static_cast<double>(before)) / static_cast<double>(before);
}

// Insertion series ----------------------------------------------------------

struct BatchRow {
    std::size_t batch = 0;  // 0 is the state right after the initial build
    std::size_t inserted = 0;
    std::size_t consumed_virtual = 0;
    std::size_t structural_changes = 0;
    std::size_t key_count = 0;
    std::size_t height = 0;
    std::size_t total_slots = 0;
    std::size_t keys_level3_plus = 0;
    double mean_depth = 0.0;
    double insert_ns_per_key = 0.0;
    double query_ns = 0.0;
    std::vector<std::size_t> keys_per_level;
    bool all_found = true;
};

struct InsertSeries {
    bool optimized = false;
    std::optional<OptimizationReport> optimization;
    std::vector<BatchRow> rows;
    std::size_t inserted_total = 0;
    std::size_t consumed_total = 0;
    Index index;

    [[nodiscard]] double gap_reuse_fraction() const noexcept {
        return inserted_total == 0 ? 0.0 : static_cast<double>(consumed_total) / static_cast<double>(inserted_total);
    }
};

struct InsertBenchOptions {
    std::size_t query_sample = 1000;
    std::size_t repetitions = 10;
    std::uint64_t seed = 42;
    bool check_all = true;  // look up every resident key after each batch
};

namespace detail {

inline void fill_shape(BatchRow& row, const Index& idx) {
    const auto st = idx.stats();
    row.key_count = st.key_count;
    row.height = st.height;
    row.total_slots = st.total_slots;
    row.keys_per_level = st.keys_per_level;
    row.keys_level3_plus = st.keys_at_or_below(3);
    row.mean_depth = st.mean_depth();
}

}  // namespace detail

/// Builds on `split.build`, optionally optimizes, then inserts every batch and
/// records the shape of the index after each one.
[[nodiscard]] inline InsertSeries run_insert_series(const ReadWriteSplit& split, const IndexConfig& cfg,
                                                    const std::optional<SmoothingConfig>& smoothing,
                                                    const CostModelParams& params, const InsertBenchOptions& opt = {}) {
    InsertSeries s;
    s.index = bulk_build(split.build, cfg);
    if (smoothing) {
        s.optimized = true;
        s.optimization = optimize(s.index, *smoothing, params);
    }
    std::vector<Key> resident(split.build.begin(), split.build.end());
    std::mt19937_64 rng(opt.seed);

    const auto measure = [&](BatchRow& row) {
        detail::fill_shape(row, s.index);
        if (opt.check_all) {
            for (Key k : resident) {
                const auto t = s.index.lookup(k);
                if (!t.found || *t.payload != k) {
                    row.all_found = false;
                    break;
                }
            }
        }
        if (opt.query_sample > 0 && !resident.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, resident.size() - 1);
            std::vector<Key> qs(opt.query_sample);
            for (auto& q : qs) q = resident[pick(rng)];
            row.query_ns = profile(run_queries(s.index, qs, opt.repetitions)).mean_ns;
        }
    };

    BatchRow initial;
    measure(initial);
    s.rows.push_back(std::move(initial));
    for (std::size_t b = 0; b < split.batches.size(); ++b) {
        BatchRow row;
        row.batch = b + 1;
        const auto t0 = std::chrono::steady_clock::now();
        for (Key k : split.batches[b]) {
            const auto out = s.index.insert(k);
            row.consumed_virtual += out.consumed_virtual_gap;
            row.structural_changes += out.structural_change;
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.inserted = split.batches[b].size();
        row.insert_ns_per_key = row.inserted == 0 ? 0.0
                                                  : std::chrono::duration<double, std::nano>(t1 - t0).count() /
                                                        static_cast<double>(row.inserted);
        resident.insert(resident.end(), split.batches[b].begin(), split.batches[b].end());
        s.inserted_total += row.inserted;
        s.consumed_total += row.consumed_virtual;
        measure(row);
        s.rows.push_back(std::move(row));
    }
    return s;
}

// Self-check suite ----------------------------------------------------------

struct Check {
    std::string name;
    bool passed = true;
    std::size_t cases = 0;
    std::string detail;
};

namespace detail {

[[nodiscard]] inline bool close(double a, double b, double rel, double abs_floor) {
    const double d = std::fabs(a - b);
    return d <= abs_floor || d <= rel * std::max(std::fabs(a), std::fabs(b));
}

[[nodiscard]] inline SortedKeySet random_set(std::mt19937_64& rng, std::size_t count, Key spread) {
    spread = std::max<Key>(spread, 2 * count);
    std::uniform_int_distribution<Key> d(0, spread);
    std::vector<Key> v;
    while (v.size() < count) {
        v.push_back(d(rng));
        if (v.size() == count) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
    }
    return SortedKeySet(std::move(v));
}

inline void fail(Check& c, std::string what) {
    if (c.passed) c.detail = std::move(what);
    c.passed = false;
}

}  // namespace detail

/// Small-scale cross-checks of every layer against a brute-force reference.
[[nodiscard]] inline std::vector<Check> verify_suite(std::uint64_t seed) {
    std::vector<Check> out;
    std::mt19937_64 rng(seed);

    {
        Check c;
        c.name = "incremental refit matches direct refit";
        for (int t = 0; t < 100; ++t) {
            const auto keys = detail::random_set(rng, 4 + rng() % 61, 2 + rng() % 10'000);
            const auto agg = aggregates_build(keys);
            auto cands = oracle::legal_candidates(keys.keys());
            if (cands.size() > 1000) cands.resize(1000);
            for (Key v : cands) {
                const Key extra[1] = {v};
                const auto direct = oracle::fit_union(keys.keys(), extra);
                const auto cand = agg.candidate(v);
                const auto m = refit_with_candidate(agg, cand);
                ++c.cases;
                if (!detail::close(m.slope, static_cast<double>(direct.slope), 1e-9, 1e-15) ||
                    !detail::close(loss_with_candidate(agg, cand), static_cast<double>(direct.sse), 1e-9, 1e-9)) {
                    detail::fail(c, "mismatch at candidate " + std::to_string(v));
                }
            }
        }
        out.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "loss derivative matches central differences";
        while (c.cases < 200) {
            const auto keys = detail::random_set(rng, 3 + rng() % 60, 1'000'000);
            const std::size_t i = rng() % (keys.size() - 1);
            if (keys[i + 1] - keys[i] < 3) continue;
            const Key v = keys[i] + 1 + rng() % (keys[i + 1] - keys[i] - 1);
            const auto agg = aggregates_build(keys);
            const auto cand = agg.candidate(v);
            const long double h = 1e-3L;
            const auto lp = oracle::naive_fit(oracle::with_point(keys.keys(), v + h, cand.rank), keys.front()).sse;
            const auto lm = oracle::naive_fit(oracle::with_point(keys.keys(), v - h, cand.rank), keys.front()).sse;
            const double fd = static_cast<double>((lp - lm) / (2 * h));
            ++c.cases;
            if (!detail::close(loss_derivative(agg, cand), fd, 1e-6, 1e-9)) {
                detail::fail(c, "derivative mismatch at candidate " + std::to_string(v));
            }
        }
        out.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "greedy round picks the brute-force minimum";
        for (int t = 0; t < 100; ++t) {
            const auto keys = detail::random_set(rng, 4 + rng() % 60, 2 + rng() % 10'000);
            const auto vps = smooth(keys, SmoothingConfig::with_budget(5));
            std::vector<Key> cur(keys.begin(), keys.end());
            for (std::size_t r = 0; r < vps.points.size(); ++r) {
                const auto bf = oracle::brute_force_best_candidate(cur);
                ++c.cases;
                if (!detail::close(bf.best.sse, vps.sse_trace[r + 1], 1e-9, 1e-9)) {
                    detail::fail(c, "round " + std::to_string(r) + " is not the minimum");
                }
                cur.insert(std::lower_bound(cur.begin(), cur.end(), vps.points[r].key), vps.points[r].key);
            }
        }
        out.push_back(std::move(c));
    }
    {
        Check c;
        c.name = "greedy lies between exhaustive optimum and original";
        while (c.cases < 10) {
            const auto keys = detail::random_set(rng, 10, 30);
            if (oracle::legal_candidates(keys.keys()).size() > oracle::kMaxExhaustiveCandidates) continue;
            const auto ex = oracle::exhaustive_smooth(keys.keys(), 5);
            const auto gr = smooth(keys, SmoothingConfig::with_budget(5));
            ++c.cases;
            if (gr.final_sse() < ex.best_sse - 1e-9 || gr.final_sse() > gr.initial_sse() + 1e-9) {
                detail::fail(c, "greedy SSE out of bounds");
            }
        }
        out.push_back(std::move(c));
    }
    for (auto mode : {IndexMode::exact, IndexMode::gapped}) {
        Check c;
        c.name = "optimize keeps every key retrievable (" + std::string(to_string(mode)) + ")";
        const auto keys = gen_synthetic({Distribution::lognormal, 20'000, seed, {}});
        IndexConfig cfg;
        cfg.mode = mode;
        auto idx = bulk_build(keys, cfg);
        CostModelParams params;
        params.threshold_c = -0.001;
        const auto first = optimize(idx, SmoothingConfig::with_alpha(0.1), params);
        for (Key k : keys) {
            const auto t = idx.lookup(k);
            ++c.cases;
            if (!t.found || *t.payload != k) detail::fail(c, "key " + std::to_string(k) + " lost");
        }
        if (idx.lookup(keys.back() + 1).found) detail::fail(c, "absent key reported as found");
        if (first.virtual_slots_added > first.budget_total) detail::fail(c, "virtual slots exceed budget");
        const auto second = optimize(idx, SmoothingConfig::with_alpha(0.1), params);
        if (!second.promoted.empty()) detail::fail(c, "second optimize promoted keys");
        out.push_back(std::move(c));
    }
    for (auto mode : {IndexMode::exact, IndexMode::gapped}) {
        Check c;
        c.name = "inserted keys are retrievable (" + std::string(to_string(mode)) + ")";
        const auto keys = gen_synthetic({Distribution::clustered, 5000, seed, {}});
        IndexConfig cfg;
        cfg.mode = mode;
        InsertBenchOptions opt;
        opt.query_sample = 0;
        const auto s = run_insert_series(split_read_write(keys, seed), cfg, SmoothingConfig::with_alpha(0.1),
                                         CostModelParams{}, opt);
        for (const auto& row : s.rows) {
            ++c.cases;
            if (!row.all_found) detail::fail(c, "lookup failed after batch " + std::to_string(row.batch));
        }
        if (s.index.size() != keys.size()) detail::fail(c, "size mismatch after all batches");
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace cdfsmooth::bench
