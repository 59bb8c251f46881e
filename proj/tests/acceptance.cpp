#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

#include "cdfsmooth/bench.hpp"
#include "cdfsmooth/core_model.hpp"
#include "cdfsmooth/csv_optimizer.hpp"
#include "cdfsmooth/index.hpp"
#include "cdfsmooth/oracle.hpp"
#include "cdfsmooth/smoothing.hpp"
#include "cdfsmooth/workloads.hpp"

using namespace cdfsmooth;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool near_rel(double a, double b, double rel, double abs_floor) {
    const double d = std::fabs(a - b);
    return d <= abs_floor || d <= rel * std::max(std::fabs(a), std::fabs(b));
}

SortedKeySet random_set(std::mt19937_64& rng, std::size_t count, Key spread) {
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

// Plain two-pass least squares of 0-based rank on position.
struct RefFit {
    long double slope = 0.0L;
    long double sse = 0.0L;
};

RefFit ref_fit(const std::vector<long double>& xs) {
    const auto n = static_cast<long double>(xs.size());
    long double mx = 0.0L, my = 0.0L;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += static_cast<long double>(i);
    }
    mx /= n;
    my /= n;
    long double sxx = 0.0L, sxy = 0.0L;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (static_cast<long double>(i) - my);
    }
    RefFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0L;
    const long double b = my - f.slope * mx;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const long double r = f.slope * xs[i] + b - static_cast<long double>(i);
        f.sse += r * r;
    }
    return f;
}

std::vector<long double> with_extra(std::span<const Key> keys, long double x, std::size_t rank) {
    std::vector<long double> xs;
    xs.reserve(keys.size() + 1);
    const long double o = static_cast<long double>(keys.front());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (i == rank) xs.push_back(x - o);
        xs.push_back(static_cast<long double>(keys[i]) - o);
    }
    if (rank == keys.size()) xs.push_back(x - o);
    return xs;
}

struct Outcome {
    int id;
    bool pass;
    std::string what;
    std::string detail;
    double seconds;
};

std::vector<Outcome> results;

void report(int id, bool pass, const std::string& what, const std::string& detail, double secs) {
    results.push_back({id, pass, what, detail, secs});
    std::printf("C%d %s  %s | %s (%.1f s)\n", id, pass ? "PASS" : "FAIL", what.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const SortedKeySet& lognormal_1m() {
    static const SortedKeySet keys = gen_synthetic({Distribution::lognormal, 1'000'000, 42, {}});
    return keys;
}

IndexConfig mode_cfg(IndexMode m) {
    IndexConfig c;
    c.mode = m;
    return c;
}

void criterion1() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::size_t checked = 0, mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t size = 4 + rng() % 253;
        const Key spread = static_cast<Key>(std::exp(std::uniform_real_distribution<double>(
            std::log(2.0 * static_cast<double>(size)), std::log(1e6))(rng)));
        const auto keys = random_set(rng, size, spread);
        const auto agg = aggregates_build(keys);
        std::vector<Key> cands;
        for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
            for (Key v = keys[i] + 1; v < keys[i + 1]; ++v) cands.push_back(v);
        }
        if (cands.size() > 10'000) {
            std::shuffle(cands.begin(), cands.end(), rng);
            cands.resize(10'000);
        }
        for (Key v : cands) {
            const std::size_t rank = keys.rank_of(v);
            const auto ref = ref_fit(with_extra(keys.keys(), static_cast<long double>(v), rank));
            const auto c = agg.candidate(v);
            const auto m = refit_with_candidate(agg, c);
            const double loss = loss_with_candidate(agg, c);
            ++checked;
            if (!near_rel(m.slope, static_cast<double>(ref.slope), 1e-9, 1e-18) ||
                !near_rel(loss, static_cast<double>(ref.sse), 1e-9, 1e-9)) {
                ++mismatches;
            }
        }
    }
    const double secs = seconds_since(t0);
    report(1, mismatches == 0 && secs < 60.0, "incremental refit/loss equal direct refit within 1e-9 rel",
           fmt("%zu candidates over 1000 sets, %zu mismatches, limit 60 s", checked, mismatches), secs);
}

void criterion2() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::size_t checked = 0, mismatches = 0;
    double worst = 0.0;
    while (checked < 1000) {
        const auto keys = random_set(rng, 3 + rng() % 254, 2 + rng() % 1'000'000);
        const std::size_t i = rng() % (keys.size() - 1);
        if (keys[i + 1] - keys[i] < 3) continue;
        const Key v = keys[i] + 1 + rng() % (keys[i + 1] - keys[i] - 1);
        const auto agg = aggregates_build(keys);
        const auto c = agg.candidate(v);
        const double analytic = loss_derivative(agg, c);
        const long double h = 1e-3L;
        const auto lp = ref_fit(with_extra(keys.keys(), static_cast<long double>(v) + h, c.rank)).sse;
        const auto lm = ref_fit(with_extra(keys.keys(), static_cast<long double>(v) - h, c.rank)).sse;
        const double fd = static_cast<double>((lp - lm) / (2 * h));
        ++checked;
        if (!near_rel(analytic, fd, 1e-6, 1e-9)) ++mismatches;
        if (std::fabs(fd) > 1e-9) worst = std::max(worst, std::fabs(analytic - fd) / std::fabs(fd));
    }
    const double secs = seconds_since(t0);
    report(2, mismatches == 0 && secs < 30.0, "loss derivative equals central differences within 1e-6 rel",
           fmt("%zu pairs, %zu mismatches, worst rel err %.2e, limit 30 s", checked, mismatches, worst), secs);
}

void criterion3() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(303);
    std::size_t rounds = 0, stops = 0, mismatches = 0;
    for (int t = 0; t < 500; ++t) {
        const std::size_t size = 4 + rng() % 125;
        const auto keys = random_set(rng, size, 2 * size + rng() % (10'000 - 2 * size));
        const auto vps = smooth(keys, SmoothingConfig::with_budget(5));
        std::vector<Key> cur(keys.begin(), keys.end());
        const auto scan_min = [&] {
            long double best = -1.0L;
            for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
                for (Key v = cur[i] + 1; v < cur[i + 1]; ++v) {
                    const auto f = ref_fit(with_extra(cur, static_cast<long double>(v), i + 1));
                    if (best < 0 || f.sse < best) best = f.sse;
                }
            }
            return best;
        };
        for (std::size_t r = 0; r < vps.points.size(); ++r) {
            ++rounds;
            if (!near_rel(vps.sse_trace[r + 1], static_cast<double>(scan_min()), 1e-9, 1e-9)) ++mismatches;
            cur.insert(std::lower_bound(cur.begin(), cur.end(), vps.points[r].key), vps.points[r].key);
        }
        if (vps.points.size() < 5) {
            const long double best = scan_min();
            ++stops;
            if (best >= 0 && static_cast<double>(best) < vps.final_sse() * (1.0 - 1e-9) - 1e-9) ++mismatches;
        }
    }
    report(3, mismatches == 0, "greedy round SSE equals full-scan minimum",
           fmt("%zu rounds and %zu early stops over 500 sets, %zu mismatches", rounds, stops, mismatches), seconds_since(t0));
}

void criterion4() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(404);
    std::vector<double> ratios;
    bool never_below = true, never_above_original = true;
    double greedy_ns = 0.0, exhaustive_ns = 0.0;
    while (ratios.size() < 50) {
        std::vector<Key> pool(40);
        for (Key i = 0; i < pool.size(); ++i) pool[i] = i;
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(10);
        const auto keys = SortedKeySet::from_unsorted(pool);
        const auto tg = Clock::now();
        const auto gr = smooth(keys, SmoothingConfig::with_budget(5));
        greedy_ns += std::chrono::duration<double, std::nano>(Clock::now() - tg).count();
        const auto ex = oracle::exhaustive_smooth(keys.keys(), 5);
        exhaustive_ns += static_cast<double>(ex.wall_time.count());
        const double g = gr.final_sse(), e = ex.best_sse, o = gr.initial_sse();
        if (g < e - 1e-9) never_below = false;
        if (g > o + 1e-9) never_above_original = false;
        ratios.push_back(e <= 1e-12 ? (g <= 1e-9 ? 1.0 : INFINITY) : g / e);
    }
    std::nth_element(ratios.begin(), ratios.begin() + 25, ratios.end());
    const double upper = ratios[25];
    const double lower = *std::max_element(ratios.begin(), ratios.begin() + 25);
    const double median = 0.5 * (upper + lower);
    const double speed = exhaustive_ns / std::max(greedy_ns, 1.0);
    const double secs = seconds_since(t0);
    const bool pass = never_below && never_above_original && median <= 1.25 && speed >= 100.0 && secs < 300.0;
    report(4, pass, "greedy vs exhaustive on 50 ten-key sets, budget 5",
           fmt("greedy>=exhaustive %s, greedy<=original %s, median ratio %.4f (<=1.25), exhaustive/greedy time %.0fx "
               "(>=100x)",
               never_below ? "always" : "NOT always", never_above_original ? "always" : "NOT always", median, speed),
           secs);
}

void criterion5() {
    const auto t0 = Clock::now();
    const auto& keys = lognormal_1m();
    const auto cfg = mode_cfg(IndexMode::exact);
    const auto baseline = bulk_build(keys, cfg);
    auto idx = bulk_build(keys, cfg);
    const auto rep = optimize(idx, SmoothingConfig::with_alpha(0.1), CostModelParams{});

    std::size_t missing = 0;
    for (Key k : keys) {
        const auto t = idx.lookup(k);
        if (!t.found || *t.payload != k) ++missing;
    }
    std::vector<Key> promoted;
    for (const auto& p : rep.promoted) promoted.push_back(p.key);
    double before = 0.0, after = 0.0;
    for (Key k : promoted) {
        before += static_cast<double>(baseline.lookup(k).depth);
        after += static_cast<double>(idx.lookup(k).depth);
    }
    if (!promoted.empty()) {
        before /= static_cast<double>(promoted.size());
        after /= static_cast<double>(promoted.size());
    }
    const auto again = optimize(idx, SmoothingConfig::with_alpha(0.1), CostModelParams{});
    const double secs = seconds_since(t0);
    const bool pass = missing == 0 && !promoted.empty() && after < before && again.promoted.empty() && secs < 600.0;
    report(5, pass, "exact mode, lognormal 1e6, alpha 0.1: safe, promotes, idempotent",
           fmt("missing %zu, promoted %zu of %zu promotable, promoted mean depth %.4f -> %.4f, second run promoted %zu",
               missing, promoted.size(), rep.promotable_keys, before, after, again.promoted.size()),
           secs);
}

void criterion6() {
    const auto t0 = Clock::now();
    const auto& keys = lognormal_1m();
    bool bound_ok = true, monotone = true;
    std::string series;
    std::string exact_info;
    for (auto mode : {IndexMode::gapped, IndexMode::exact}) {
        double prev = -INFINITY;
        for (double a : {0.05, 0.1, 0.2, 0.4}) {
            auto idx = bulk_build(keys, mode_cfg(mode));
            const auto before = idx.stats().total_slots;
            const auto rep = optimize(idx, SmoothingConfig::with_alpha(a), CostModelParams{});
            const auto after = idx.stats().total_slots;
            const long long added = static_cast<long long>(after) - static_cast<long long>(before);
            if (added > static_cast<long long>(rep.budget_total + rep.reallocation_slack)) bound_ok = false;
            if (rep.virtual_slots_added > rep.budget_total) bound_ok = false;
            const double pct = 100.0 * static_cast<double>(added) / static_cast<double>(before);
            if (mode == IndexMode::gapped) {
                if (!(pct > prev)) monotone = false;
                prev = pct;
                series += fmt("%s%.3f%%", series.empty() ? "" : ", ", pct);
            } else {
                exact_info += fmt("%s%.3f%%", exact_info.empty() ? "" : ", ", pct);
            }
        }
    }
    report(6, bound_ok && monotone, "storage increase within budget and monotone in alpha (gapped mode)",
           fmt("gapped storage %% at alpha 0.05/0.1/0.2/0.4: %s; bound %s; exact mode (merges free child slots): %s",
               series.c_str(), bound_ok ? "held" : "VIOLATED", exact_info.c_str()),
           seconds_since(t0));
}

// Mean per-key change of search * E + traversal * level, recomputed from raw
// lookup traces.
double test_cost_delta(const std::vector<LookupTrace>& before, const std::vector<LookupTrace>& after,
                       const CostModelParams& p) {
    const auto e = [](const LookupTrace& t) {
        const double d = t.predicted > t.actual ? static_cast<double>(t.predicted - t.actual)
                                                : static_cast<double>(t.actual - t.predicted);
        return 1.0 + std::log2(1.0 + d);
    };
    double s = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        s += p.search_constant * (e(after[i]) - e(before[i])) +
             p.traversal_constant * (static_cast<double>(after[i].depth) - static_cast<double>(before[i].depth));
    }
    return s / static_cast<double>(before.size());
}

void criterion7() {
    const auto t0 = Clock::now();
    const auto keys = gen_synthetic({Distribution::lognormal, 200'000, 42, {}});
    const auto cfg = mode_cfg(IndexMode::gapped);
    bool sound = true;
    std::size_t checked = 0, strict_merges = 0, loosest = 0, max_stricter = 0;
    std::string counts;
    for (double c : {-1000.0, -100.0, -10.0, -1.0, -0.1, -0.001}) {
        auto idx = bulk_build(keys, cfg);
        CostModelParams p;
        p.threshold_c = c;
        const auto rep = optimize(idx, SmoothingConfig::with_alpha(0.1), p);
        for (const auto& d : rep.decisions) {
            if (!d.accepted) continue;
            ++checked;
            if (!(d.realized_cost_delta < c)) sound = false;
        }
        if (c == -1000.0) strict_merges = rep.merges_accepted;
        if (c == -0.001) {
            loosest = rep.merges_accepted;
        } else {
            max_stricter = std::max(max_stricter, rep.merges_accepted);
        }
        counts += fmt("%s%g:%zu", counts.empty() ? "" : " ", c, rep.merges_accepted);
    }

    // Single-level run, each merge recomputed from lookups on the untouched
    // and the final index.
    std::size_t recomputed = 0;
    {
        const auto base = bulk_build(keys, cfg);
        std::size_t deepest = 0;
        base.visit_nodes([&](const Node& n) {
            if (has_subtree(n)) deepest = std::max(deepest, n.level);
        });
        auto idx = bulk_build(keys, cfg);
        CostModelParams p;
        p.threshold_c = -0.001;
        OptimizerOptions o;
        o.stop_level = std::max<std::size_t>(deepest, 2);
        o.max_passes = 1;
        const auto rep = optimize(idx, SmoothingConfig::with_alpha(0.1), p, o);
        for (const auto& d : rep.decisions) {
            if (!d.accepted) continue;
            std::vector<LookupTrace> b, a;
            for (auto it = keys.begin() + static_cast<std::ptrdiff_t>(keys.rank_of(d.lo_key)); it != keys.end() && *it <= d.hi_key; ++it) {
                b.push_back(base.lookup(*it));
                a.push_back(idx.lookup(*it));
            }
            const double delta = test_cost_delta(b, a, p);
            ++recomputed;
            if (!(delta < p.threshold_c) || !near_rel(delta, d.realized_cost_delta, 1e-9, 1e-9)) sound = false;
        }
    }
    const bool pass = sound && strict_merges == 0 && loosest >= max_stricter && checked > 0;
    report(7, pass, "gapped cost gate: accepted merges recompute below c, strict c accepts none",
           fmt("merges per c {%s}; %zu accepted merges rechecked, %zu recomputed from raw lookups; gate %s", counts.c_str(),
               checked, recomputed, sound ? "sound" : "VIOLATED"),
           seconds_since(t0));
}

void criterion8() {
    const auto t0 = Clock::now();
    const auto& keys = lognormal_1m();
    const auto split = split_read_write(keys, 7);
    const double allowed = 0.001 * static_cast<double>(keys.size());
    bool pass = true;
    std::string detail;
    for (auto mode : {IndexMode::exact, IndexMode::gapped}) {
        bench::InsertBenchOptions opt;
        opt.query_sample = 0;
        opt.check_all = false;
        const auto base = bench::run_insert_series(split, mode_cfg(mode), std::nullopt, CostModelParams{}, opt);
        const auto smoothed =
            bench::run_insert_series(split, mode_cfg(mode), SmoothingConfig::with_alpha(0.1), CostModelParams{}, opt);
        std::size_t missing = 0;
        for (Key k : keys) {
            const auto t = smoothed.index.lookup(k);
            if (!t.found || *t.payload != k) ++missing;
            if (!base.index.lookup(k).found) ++missing;
        }
        long long excess = 0;
        for (std::size_t b = 0; b < base.rows.size(); ++b) {
            excess = std::max(excess, static_cast<long long>(smoothed.rows[b].keys_level3_plus) -
                                          static_cast<long long>(base.rows[b].keys_level3_plus));
        }
        std::size_t deep = 0;
        smoothed.index.for_each([&](const Record&, std::size_t level) { deep += level >= 3; });
        const bool reconciles = deep == smoothed.rows.back().keys_level3_plus;
        const bool ok = missing == 0 && smoothed.consumed_total > 0 && static_cast<double>(excess) <= allowed && reconciles;
        pass = pass && ok;
        detail += fmt("%s%s: missing %zu, gap reuse %zu/%zu, max level>=3 excess %lld (allowed %.0f)%s",
                      detail.empty() ? "" : "; ", std::string(to_string(mode)).c_str(), missing,
                      smoothed.consumed_total, smoothed.inserted_total, excess, allowed,
                      reconciles ? "" : ", level counts do not reconcile");
    }
    report(8, pass, "read-write: inserts stay correct, reuse gaps, no deeper than baseline", detail, seconds_since(t0));
}

void criterion9() {
    const auto t0 = Clock::now();
    const auto keys = gen_synthetic({Distribution::lognormal, 200'000, 9, {}});
    const auto idx = bulk_build(keys, mode_cfg(IndexMode::gapped));
    const auto sample = sample_queries(keys, 5000, QueryKind::random, 3).queries;
    const double a = 31.7, b = 6.3;
    const LookupTimer fake = [&](const Index& ix, Key k, std::size_t, LookupTrace& t) {
        t = ix.lookup(k);
        return a * static_cast<double>(t.depth) + b * static_cast<double>(t.search_steps);
    };
    const auto res = calibrate_cost_constants(idx, sample, 1, CostModelParams{}, fake);
    const double ea = std::fabs(res.params.traversal_constant - a) / a;
    const double eb = std::fabs(res.params.search_constant - b) / b;
    report(9, res.calibrated && ea <= 0.01 && eb <= 0.01, "calibration recovers injected clock constants",
           fmt("fitted traversal %.6f (true %.1f), search %.6f (true %.1f), rel err %.1e / %.1e", res.params.traversal_constant,
               a, res.params.search_constant, b, ea, eb),
           seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
    void (*const criteria[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                  criterion6, criterion7, criterion8, criterion9};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    for (int id = 1; id <= 9; ++id) {
        if (selected.empty() || std::find(selected.begin(), selected.end(), id) != selected.end()) criteria[id - 1]();
    }
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.pass;
    std::printf("acceptance: %zu/%zu criteria passed\n", passed, results.size());
    return passed == results.size() ? 0 : 1;
}
