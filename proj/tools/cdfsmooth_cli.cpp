#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdfsmooth/bench.hpp"
#include "cdfsmooth/csv_optimizer.hpp"
#include "cdfsmooth/index.hpp"
#include "cdfsmooth/smoothing.hpp"
#include "cdfsmooth/workloads.hpp"

using namespace cdfsmooth;
using json = nlohmann::ordered_json;

namespace {

struct Options {
    std::string mode = "exact";
    double alpha = 0.1;
    double cost_threshold = -1.0;
    double slots_per_key = 2.0;
    std::uint64_t seed = 42;
    std::size_t n = 1'000'000;
    std::string dist = "lognormal";
    std::size_t queries = 10'000;
    double zipf_s = 1.0;
    std::size_t repetitions = 100;
    std::string out;
    std::string data;
    std::string kind = "random";
    bool calibrate = false;
};

void add_common(CLI::App& sub, Options& o) {
    sub.add_option("--mode", o.mode, "node policy: exact | gapped")->check(CLI::IsMember({"exact", "gapped"}));
    sub.add_option("--alpha", o.alpha, "smoothing threshold; budget = floor(alpha * subtree keys)")
        ->check(CLI::NonNegativeNumber);
    sub.add_option("--cost-threshold", o.cost_threshold, "gapped-mode merge gate in ns per key (negative)");
    sub.add_option("--slots-per-key", o.slots_per_key, "exact-mode slot allocation per key")
        ->check(CLI::PositiveNumber);
    sub.add_option("--seed", o.seed, "seed for data, queries and splits");
    sub.add_option("--n", o.n, "synthetic dataset size")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 32));
    sub.add_option("--dist", o.dist, "uniform | lognormal | clustered | piecewise-outlier");
    sub.add_option("--data", o.data, "binary key file (u64 count, then u64 keys, little endian)")
        ->check(CLI::ExistingFile);
    sub.add_option("--queries", o.queries, "query sample size");
    sub.add_option("--zipf-s", o.zipf_s, "zipf exponent over key ranks")->check(CLI::NonNegativeNumber);
    sub.add_option("--repetitions", o.repetitions, "timed repetitions per query")
        ->check(CLI::Range(std::size_t{1}, std::size_t{1'000'000}));
    sub.add_option("--out", o.out, "report directory (dataset path for generate)");
}

IndexConfig index_config(const Options& o) {
    IndexConfig c;
    c.mode = parse_mode(o.mode);
    c.slots_per_key = o.slots_per_key;
    c.seed = o.seed;
    c.validate();
    return c;
}

CostModelParams cost_params(const Options& o) {
    CostModelParams p;
    p.threshold_c = o.cost_threshold;
    p.validate();
    return p;
}

SortedKeySet load_keys(const Options& o) {
    if (!o.data.empty()) return load_dataset(o.data);
    return gen_synthetic({parse_distribution(o.dist), o.n, o.seed, {}});
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

class Reporter {
public:
    explicit Reporter(const Options& o) : dir_(o.out) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    json& root() { return root_; }

    void csv(const std::string& name, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
        if (dir_.empty()) return;
        std::ofstream f(dir_ / (name + ".csv"));
        if (!f) throw FormatError("cannot write " + (dir_ / (name + ".csv")).string());
        for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
        f << '\n';
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
            f << '\n';
        }
        files_.push_back(name + ".csv");
    }

    void finish(const std::string& command) {
        root_["files"] = files_;
        if (dir_.empty()) {
            std::cout << root_.dump(2) << '\n';
            return;
        }
        const auto path = dir_ / (command + ".json");
        std::ofstream f(path);
        if (!f) throw FormatError("cannot write " + path.string());
        f << root_.dump(2) << '\n';
        std::cerr << "wrote " << path.string() << " and " << files_.size() << " csv file(s)\n";
    }

private:
    std::filesystem::path dir_;
    json root_;
    std::vector<std::string> files_;
};

template <class T>
std::string str(T v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

json config_echo(const Options& o, const std::string& command) {
    json c;
    c["command"] = command;
    c["mode"] = o.mode;
    c["alpha"] = o.alpha;
    c["cost_threshold"] = o.cost_threshold;
    c["slots_per_key"] = o.slots_per_key;
    c["seed"] = o.seed;
    c["dataset"] = o.data.empty() ? json(o.dist) : json(o.data);
    c["n"] = o.n;
    c["queries"] = o.queries;
    c["query_kind"] = o.kind;
    c["zipf_s"] = o.zipf_s;
    c["repetitions"] = o.repetitions;
    c["calibrate"] = o.calibrate;
    return c;
}

json stats_json(const IndexStats& s) {
    return {{"key_count", s.key_count},     {"node_count", s.node_count},         {"height", s.height},
            {"total_slots", s.total_slots}, {"data_slots", s.data_slots},         {"pointer_slots", s.pointer_slots},
            {"virtual_gaps", s.virtual_gaps}, {"total_sse", s.total_sse},         {"mean_depth", s.mean_depth()},
            {"keys_per_level", s.keys_per_level}, {"nodes_per_level", s.nodes_per_level}};
}

json profile_json(const bench::QueryProfile& p) {
    json levels = json::array();
    for (const auto& l : p.levels) {
        levels.push_back({{"level", l.level}, {"queries", l.queries}, {"mean_ns", l.mean_ns}, {"mean_steps", l.mean_steps}});
    }
    return {{"queries", p.queries},       {"found", p.found},     {"mean_depth", p.mean_depth},
            {"mean_steps", p.mean_steps}, {"mean_ns", p.mean_ns}, {"total_ns", p.total_ns},
            {"levels", levels}};
}

std::vector<std::vector<std::string>> level_rows(const IndexStats& before, const IndexStats& after) {
    std::vector<std::vector<std::string>> rows;
    const auto depth = std::max(before.keys_per_level.size(), after.keys_per_level.size());
    const auto at = [](const std::vector<std::size_t>& v, std::size_t i) { return i < v.size() ? v[i] : 0; };
    for (std::size_t i = 0; i < depth; ++i) {
        rows.push_back({str(i + 1), str(at(before.keys_per_level, i)), str(at(after.keys_per_level, i)),
                        str(at(before.nodes_per_level, i)), str(at(after.nodes_per_level, i))});
    }
    return rows;
}

struct OptimizedRun {
    Index baseline;
    Index optimized;
    OptimizationReport report;
    CostModelParams params;
    std::optional<CalibrationResult> calibration;
};

OptimizedRun build_and_optimize(const Options& o, const SortedKeySet& keys) {
    const auto cfg = index_config(o);
    OptimizedRun r;
    r.baseline = bulk_build(keys, cfg);
    r.optimized = bulk_build(keys, cfg);
    r.params = cost_params(o);
    if (o.calibrate) {
        const auto sample = sample_queries(keys, std::min<std::size_t>(o.queries, keys.size()), QueryKind::random, o.seed);
        r.calibration = calibrate_cost_constants(r.baseline, sample.queries, o.repetitions, r.params);
        r.params = r.calibration->params;
    }
    r.report = optimize(r.optimized, SmoothingConfig::with_alpha(o.alpha), r.params);
    return r;
}

json optimization_json(const OptimizedRun& r, const IndexStats& before, const IndexStats& after) {
    const auto& rep = r.report;
    const auto promo = bench::summarize_promotions(rep);
    json j;
    j["promotable_keys"] = promo.promotable;
    j["promoted_keys"] = promo.promoted;
    j["unpromoted_keys"] = promo.unpromoted;
    j["promoted_pct"] = promo.promoted_pct;
    j["storage_increase_pct"] = bench::percent_change(rep.slots_before, rep.slots_after);
    j["node_reduction_pct"] = -bench::percent_change(rep.nodes_before, rep.nodes_after);
    j["slots_before"] = rep.slots_before;
    j["slots_after"] = rep.slots_after;
    j["slots_added"] = rep.slots_added();
    j["virtual_slots_added"] = rep.virtual_slots_added;
    j["budget_total"] = rep.budget_total;
    j["reallocation_slack"] = rep.reallocation_slack;
    j["nodes_before"] = rep.nodes_before;
    j["nodes_after"] = rep.nodes_after;
    j["merges_evaluated"] = rep.decisions.size();
    j["merges_accepted"] = rep.merges_accepted;
    j["skipped_large_subtrees"] = rep.skipped_large;
    j["passes"] = rep.passes;
    j["preprocessing_ms"] = std::chrono::duration<double, std::milli>(rep.wall_time).count();
    j["cost_model"] = {{"search_constant", r.params.search_constant},
                       {"traversal_constant", r.params.traversal_constant},
                       {"threshold_c", r.params.threshold_c}};
    if (r.calibration) {
        j["calibration"] = {{"calibrated", r.calibration->calibrated},
                            {"samples", r.calibration->samples},
                            {"intercept", r.calibration->intercept},
                            {"note", r.calibration->note}};
    }
    j["before"] = stats_json(before);
    j["after"] = stats_json(after);
    return j;
}

void emit_optimize(const Options& o, Reporter& rp, const OptimizedRun& r) {
    const auto before = r.baseline.stats();
    const auto after = r.optimized.stats();
    rp.root()["optimize"] = optimization_json(r, before, after);
    rp.csv("optimize_levels", {"level", "keys_before", "keys_after", "nodes_before", "nodes_after"},
           level_rows(before, after));
    std::vector<std::vector<std::string>> merges;
    for (const auto& d : r.report.decisions) {
        merges.push_back({str(d.level), str(d.lo_key), str(d.hi_key), str(d.keys), str(d.budget), str(d.virtual_points),
                          d.accepted ? "1" : "0", str(d.cost_delta), str(d.realized_cost_delta), str(d.height_before),
                          str(d.height_after), str(d.slots_before), str(d.slots_after)});
    }
    rp.csv("optimize_merges",
           {"level", "lo_key", "hi_key", "keys", "budget", "virtual_points", "accepted", "cost_delta",
            "realized_cost_delta", "height_before", "height_after", "slots_before", "slots_after"},
           merges);
    const auto promo = bench::summarize_promotions(r.report);
    std::cerr << "optimize: mode=" << o.mode << " promoted=" << promo.promoted << "/" << promo.promotable
              << " slots_added=" << r.report.slots_added() << " merges=" << r.report.merges_accepted << '\n';
}

void emit_queries(const Options& o, Reporter& rp, const OptimizedRun& r, const SortedKeySet& keys, QueryKind kind,
                  const std::string& label) {
    std::vector<Key> promoted_keys;
    for (const auto& p : r.report.promoted) promoted_keys.push_back(p.key);
    const auto w = sample_queries(keys, o.queries, kind, o.seed, o.zipf_s, promoted_keys);

    const auto [base, opt] = bench::run_queries_paired(r.baseline, r.optimized, w.queries, o.repetitions);
    const auto pb = bench::profile(base);
    const auto po = bench::profile(opt);

    std::vector<bench::QuerySample> base_promoted, opt_promoted;
    const SortedKeySet promoted_set = SortedKeySet::from_unsorted(promoted_keys);
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (promoted_set.contains(base[i].key)) {
            base_promoted.push_back(base[i]);
            opt_promoted.push_back(opt[i]);
        }
    }
    const auto ppb = bench::profile(base_promoted);
    const auto ppo = bench::profile(opt_promoted);

    json j;
    j["kind"] = std::string(to_string(kind));
    j["baseline"] = profile_json(pb);
    j["optimized"] = profile_json(po);
    j["total_time_saved_ns"] = pb.total_ns - po.total_ns;
    j["relative_query_time"] = pb.mean_ns > 0 ? po.mean_ns / pb.mean_ns : 0.0;
    j["promoted_queries"] = ppb.queries;
    j["promoted_relative_query_time"] = ppb.mean_ns > 0 ? ppo.mean_ns / ppb.mean_ns : 0.0;
    j["promoted_mean_depth_before"] = ppb.mean_depth;
    j["promoted_mean_depth_after"] = ppo.mean_depth;
    rp.root()["queries"][label] = j;

    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, p] : {std::pair{"baseline", &pb}, std::pair{"optimized", &po}}) {
        for (const auto& l : p->levels) {
            rows.push_back({name, str(l.level), str(l.queries), str(l.mean_ns), str(l.mean_steps)});
        }
    }
    rp.csv("query_levels_" + label, {"index", "level", "queries", "mean_ns", "mean_steps"}, rows);
    rp.csv("query_summary_" + label,
           {"index", "queries", "mean_depth", "mean_steps", "mean_ns", "total_ns", "promoted_mean_ns"},
           {{"baseline", str(pb.queries), str(pb.mean_depth), str(pb.mean_steps), str(pb.mean_ns), str(pb.total_ns),
             str(ppb.mean_ns)},
            {"optimized", str(po.queries), str(po.mean_depth), str(po.mean_steps), str(po.mean_ns), str(po.total_ns),
             str(ppo.mean_ns)}});
    const char* change = po.mean_depth < pb.mean_depth ? "decreased" : po.mean_depth > pb.mean_depth ? "increased" : "unchanged";
    std::cerr << "query[" << label << "]: baseline_mean_depth=" << pb.mean_depth
              << " optimized_mean_depth=" << po.mean_depth << " depth_change=" << change
              << " relative_time=" << j["relative_query_time"].get<double>() << '\n';
}

void emit_insert_bench(const Options& o, Reporter& rp, const SortedKeySet& keys) {
    const auto cfg = index_config(o);
    const auto split = split_read_write(keys, o.seed);
    bench::InsertBenchOptions opt;
    opt.seed = o.seed;
    opt.query_sample = std::min(o.queries, keys.size());
    opt.repetitions = o.repetitions;
    const auto base = bench::run_insert_series(split, cfg, std::nullopt, cost_params(o), opt);
    const auto smoothed = bench::run_insert_series(split, cfg, SmoothingConfig::with_alpha(o.alpha), cost_params(o), opt);

    long long max_excess = 0;
    json rows = json::array();
    std::vector<std::vector<std::string>> csv, levels;
    for (const auto* s : {&base, &smoothed}) {
        const std::string name = s->optimized ? "optimized" : "baseline";
        for (const auto& r : s->rows) {
            rows.push_back({{"index", name},
                            {"batch", r.batch},
                            {"inserted", r.inserted},
                            {"consumed_virtual", r.consumed_virtual},
                            {"structural_changes", r.structural_changes},
                            {"key_count", r.key_count},
                            {"height", r.height},
                            {"total_slots", r.total_slots},
                            {"keys_level3_plus", r.keys_level3_plus},
                            {"mean_depth", r.mean_depth},
                            {"insert_ns_per_key", r.insert_ns_per_key},
                            {"query_ns", r.query_ns},
                            {"keys_per_level", r.keys_per_level},
                            {"all_found", r.all_found}});
            csv.push_back({name, str(r.batch), str(r.inserted), str(r.consumed_virtual), str(r.key_count), str(r.height),
                           str(r.keys_level3_plus), str(r.mean_depth), str(r.insert_ns_per_key), str(r.query_ns),
                           r.all_found ? "1" : "0"});
            for (std::size_t l = 0; l < r.keys_per_level.size(); ++l) {
                levels.push_back({name, str(r.batch), str(l + 1), str(r.keys_per_level[l])});
            }
        }
    }
    for (std::size_t b = 0; b < base.rows.size(); ++b) {
        max_excess = std::max(max_excess, static_cast<long long>(smoothed.rows[b].keys_level3_plus) -
                                              static_cast<long long>(base.rows[b].keys_level3_plus));
    }
    bool all_found = true;
    for (const auto* s : {&base, &smoothed}) {
        for (const auto& r : s->rows) all_found = all_found && r.all_found;
    }
    json j;
    j["n"] = keys.size();
    j["build_keys"] = split.build.size();
    j["batches"] = split.batches.size();
    j["gap_reuse_fraction"] = smoothed.gap_reuse_fraction();
    j["consumed_virtual_total"] = smoothed.consumed_total;
    j["baseline_consumed_virtual_total"] = base.consumed_total;
    j["max_level3_excess_keys"] = max_excess;
    j["max_level3_excess_pct_of_n"] = 100.0 * static_cast<double>(max_excess) / static_cast<double>(keys.size());
    j["all_found"] = all_found;
    if (smoothed.optimization) {
        j["optimize_promoted"] = bench::summarize_promotions(*smoothed.optimization).promoted;
        j["optimize_preprocessing_ms"] = std::chrono::duration<double, std::milli>(smoothed.optimization->wall_time).count();
    }
    j["rows"] = rows;
    rp.root()["insert_bench"] = j;
    rp.csv("insert_series",
           {"index", "batch", "inserted", "consumed_virtual", "key_count", "height", "keys_level3_plus", "mean_depth",
            "insert_ns_per_key", "query_ns", "all_found"},
           csv);
    rp.csv("insert_levels", {"index", "batch", "level", "keys"}, levels);
    std::cerr << "insert-bench: gap_reuse=" << smoothed.gap_reuse_fraction() << " max_level3_excess=" << max_excess
              << " all_found=" << all_found << '\n';
    if (!all_found) throw std::runtime_error("insert-bench: a resident key was not found");
}

int cmd_generate(const Options& o) {
    if (o.out.empty()) throw InvalidInput("generate needs --out <file>");
    const auto keys = gen_synthetic({parse_distribution(o.dist), o.n, o.seed, {}});
    write_dataset(o.out, keys);
    std::cerr << "generate: wrote " << keys.size() << " " << o.dist << " keys to " << o.out << '\n';
    return 0;
}

int cmd_build(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "build");
    const auto keys = load_keys(o);
    const auto t0 = std::chrono::steady_clock::now();
    const auto idx = bulk_build(keys, index_config(o));
    const double ms = ms_since(t0);
    const auto st = idx.stats();
    rp.root()["build"] = stats_json(st);
    rp.root()["build"]["build_ms"] = ms;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < st.keys_per_level.size(); ++i) {
        rows.push_back({str(i + 1), str(st.keys_per_level[i]), str(st.nodes_per_level[i])});
    }
    rp.csv("build_levels", {"level", "keys", "nodes"}, rows);
    std::cerr << "build: keys=" << st.key_count << " height=" << st.height << " mean_depth=" << st.mean_depth() << '\n';
    rp.finish("build");
    return 0;
}

int cmd_smooth(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "smooth");
    const auto keys = load_keys(o);
    const auto cfg = SmoothingConfig::with_alpha(o.alpha);
    const auto t0 = std::chrono::steady_clock::now();
    const auto vps = smooth(keys, cfg);
    const double ms = ms_since(t0);
    json j;
    j["keys"] = keys.size();
    j["budget"] = cfg.budget(keys.size());
    j["virtual_points"] = vps.size();
    j["initial_sse"] = vps.initial_sse();
    j["final_sse"] = vps.final_sse();
    j["sse_reduction_pct"] = vps.initial_sse() > 0 ? 100.0 * (vps.initial_sse() - vps.final_sse()) / vps.initial_sse() : 0.0;
    j["preprocessing_ms"] = ms;
    rp.root()["smooth"] = j;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < vps.sse_trace.size(); ++r) {
        rows.push_back({str(r), r == 0 ? "" : str(vps.points[r - 1].key), str(vps.sse_trace[r])});
    }
    rp.csv("smooth_trace", {"round", "virtual_key", "sse"}, rows);
    std::cerr << "smooth: virtual_points=" << vps.size() << " sse " << vps.initial_sse() << " -> " << vps.final_sse()
              << '\n';
    rp.finish("smooth");
    return 0;
}

int cmd_optimize(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "optimize");
    const auto keys = load_keys(o);
    const auto r = build_and_optimize(o, keys);
    emit_optimize(o, rp, r);
    rp.finish("optimize");
    return 0;
}

int cmd_query(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "query");
    const auto keys = load_keys(o);
    const auto r = build_and_optimize(o, keys);
    emit_optimize(o, rp, r);
    const auto kind = parse_query_kind(o.kind);
    emit_queries(o, rp, r, keys, kind, std::string(to_string(kind)));
    rp.finish("query");
    return 0;
}

int cmd_insert_bench(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "insert-bench");
    emit_insert_bench(o, rp, load_keys(o));
    rp.finish("insert-bench");
    return 0;
}

int cmd_verify(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "verify");
    bool ok = true;
    json checks = json::array();
    for (const auto& c : bench::verify_suite(o.seed)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.cases << " cases)"
                  << (c.passed ? "" : ": " + c.detail) << '\n';
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"cases", c.cases}, {"detail", c.detail}});
        ok = ok && c.passed;
    }
    rp.root()["verify"] = {{"passed", ok}, {"checks", checks}};
    if (!o.out.empty()) rp.finish("verify");
    return ok ? 0 : 1;
}

int cmd_report(const Options& o) {
    Reporter rp(o);
    rp.root()["config"] = config_echo(o, "report");
    const auto keys = load_keys(o);
    const auto r = build_and_optimize(o, keys);
    emit_optimize(o, rp, r);
    for (auto kind : {QueryKind::random, QueryKind::zipfian, QueryKind::promoted}) {
        emit_queries(o, rp, r, keys, kind, std::string(to_string(kind)));
    }
    emit_insert_bench(o, rp, keys);

    json sweep = json::array();
    std::vector<std::vector<std::string>> rows;
    for (double a : {0.05, 0.1, 0.2, 0.4}) {
        Options oa = o;
        oa.alpha = a;
        oa.calibrate = false;
        const auto ra = build_and_optimize(oa, keys);
        const auto promo = bench::summarize_promotions(ra.report);
        const double storage = bench::percent_change(ra.report.slots_before, ra.report.slots_after);
        const double nodes = -bench::percent_change(ra.report.nodes_before, ra.report.nodes_after);
        const double ms = std::chrono::duration<double, std::milli>(ra.report.wall_time).count();
        sweep.push_back({{"alpha", a},
                         {"promoted_pct", promo.promoted_pct},
                         {"storage_increase_pct", storage},
                         {"node_reduction_pct", nodes},
                         {"merges_accepted", ra.report.merges_accepted},
                         {"preprocessing_ms", ms}});
        rows.push_back({str(a), str(promo.promoted_pct), str(storage), str(nodes), str(ra.report.merges_accepted), str(ms)});
    }
    rp.root()["alpha_sweep"] = sweep;
    rp.csv("alpha_sweep",
           {"alpha", "promoted_pct", "storage_increase_pct", "node_reduction_pct", "merges_accepted", "preprocessing_ms"},
           rows);
    rp.finish("report");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CDF smoothing for learned indexes: build, optimize and benchmark"};
    app.require_subcommand(1);
    Options o;

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
    auto* build = app.add_subcommand("build", "bulk-build an index and report its shape");
    auto* smooth_cmd = app.add_subcommand("smooth", "smooth one linear model over the whole dataset");
    auto* optimize_cmd = app.add_subcommand("optimize", "build, optimize and report promotions and storage");
    auto* query = app.add_subcommand("query", "time a query workload on the baseline and optimized index");
    auto* insert = app.add_subcommand("insert-bench", "read-write workload with batched inserts");
    auto* verify = app.add_subcommand("verify", "run the built-in oracle cross-checks");
    auto* report = app.add_subcommand("report", "run every benchmark and write all tables");
    for (auto* sub : {generate, build, smooth_cmd, optimize_cmd, query, insert, verify, report}) add_common(*sub, o);
    query->add_option("--kind", o.kind, "random | zipfian | promoted")
        ->check(CLI::IsMember({"random", "zipfian", "zipf", "promoted"}));
    for (auto* sub : {optimize_cmd, query, report}) {
        sub->add_flag("--calibrate", o.calibrate, "fit the cost constants on this machine first");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*generate) return cmd_generate(o);
        if (*build) return cmd_build(o);
        if (*smooth_cmd) return cmd_smooth(o);
        if (*optimize_cmd) return cmd_optimize(o);
        if (*query) return cmd_query(o);
        if (*insert) return cmd_insert_bench(o);
        if (*verify) return cmd_verify(o);
        if (*report) return cmd_report(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
