#pragma once

// Datasets and query workloads: the binary key-file format (u64 count, then
// u64 keys, little endian), synthetic generators, query samplers and the
// read-write split used by the insertion benchmark.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/sorted_key_set.hpp"

namespace cdfsmooth {

enum class Distribution { uniform, lognormal, clustered, piecewise_outlier };

[[nodiscard]] inline std::string_view to_string(Distribution d) noexcept {
    switch (d) {
        case Distribution::uniform: return "uniform";
        case Distribution::lognormal: return "lognormal";
        case Distribution::clustered: return "clustered";
        case Distribution::piecewise_outlier: return "piecewise-outlier";
    }
    return "?";
}

[[nodiscard]] inline Distribution parse_distribution(std::string_view s) {
    if (s == "uniform") return Distribution::uniform;
    if (s == "lognormal") return Distribution::lognormal;
    if (s == "clustered") return Distribution::clustered;
    if (s == "piecewise-outlier" || s == "piecewise_outlier") return Distribution::piecewise_outlier;
    throw InvalidInput("unknown distribution: " + std::string(s));
}

struct DatasetSpec {
    Distribution dist = Distribution::lognormal;
    std::size_t n = 1'000'000;
    std::uint64_t seed = 42;
    std::optional<std::string> path;  // when set, the file wins over `dist`
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b;
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b.data(), 8);
}

[[nodiscard]] inline std::uint64_t get_u64(const unsigned char* p) noexcept {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

/// Reads the binary key format, then sorts and removes duplicates.
[[nodiscard]] inline SortedKeySet load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw FormatError(path + ": missing key count");
    const std::uint64_t count = detail::get_u64(bytes.data());
    if ((bytes.size() - 8) % 8 != 0 || (bytes.size() - 8) / 8 != count) {
        throw FormatError(path + ": header says " + std::to_string(count) + " keys, file holds " +
                          std::to_string((bytes.size() - 8) / 8) + " (" + std::to_string(bytes.size()) + " bytes)");
    }
    std::vector<Key> keys(count);
    for (std::size_t i = 0; i < count; ++i) keys[i] = detail::get_u64(bytes.data() + 8 + 8 * i);
    return SortedKeySet::from_unsorted(std::move(keys));
}

inline void write_dataset(const std::string& path, std::span<const Key> keys) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    detail::put_u64(out, keys.size());
    for (Key k : keys) detail::put_u64(out, k);
    if (!out) throw FormatError("write failed: " + path);
}

inline void write_dataset(const std::string& path, const SortedKeySet& keys) { write_dataset(path, keys.keys()); }

/// Synthetic key sets. The result is deduplicated, so it may hold slightly
/// fewer than spec.n keys.
[[nodiscard]] inline SortedKeySet gen_synthetic(const DatasetSpec& spec) {
    if (spec.n < 2) throw InvalidInput("dataset needs n >= 2");
    std::mt19937_64 rng(spec.seed);
    std::vector<Key> keys;
    keys.reserve(spec.n);
    const std::size_t n = spec.n;
    switch (spec.dist) {
        case Distribution::uniform: {
            for (std::size_t i = 0; i < n; ++i) keys.push_back(rng());
            break;
        }
        case Distribution::lognormal: {
            std::lognormal_distribution<double> ln(0.0, 2.0);
            for (std::size_t i = 0; i < n; ++i) keys.push_back(static_cast<Key>(ln(rng) * 1e9));
            break;
        }
        case Distribution::clustered: {
            // A handful of dense clusters scattered over a 2^48 range.
            const std::size_t clusters = 8;
            std::uniform_int_distribution<Key> centre(0, Key{1} << 48);
            std::vector<Key> centres(clusters);
            for (auto& c : centres) c = centre(rng);
            const double width = 10.0 * static_cast<double>(n) / static_cast<double>(clusters);
            std::normal_distribution<double> spread(0.0, width);
            for (std::size_t i = 0; i < n; ++i) {
                const Key c = centres[rng() % clusters];
                const double off = spread(rng);
                keys.push_back(off < 0 && static_cast<double>(c) < -off ? 0 : c + static_cast<Key>(std::llround(off)));
            }
            break;
        }
        case Distribution::piecewise_outlier: {
            // Linear runs of differing density, plus about 1% far outliers.
            Key base = 0;
            std::size_t made = 0;
            std::uniform_int_distribution<int> stride(1, 64);
            while (made < n) {
                const std::size_t run = std::min<std::size_t>(n - made, 1 + rng() % (n / 8 + 1));
                const Key step = static_cast<Key>(stride(rng));
                for (std::size_t i = 0; i < run; ++i) keys.push_back(base + i * step);
                base += run * step + (rng() % 1000) * step;
                made += run;
            }
            const std::size_t outliers = std::max<std::size_t>(1, n / 100);
            std::uniform_int_distribution<Key> far(base, base + (Key{1} << 40));
            for (std::size_t i = 0; i < outliers && !keys.empty(); ++i) keys[rng() % keys.size()] = far(rng);
            break;
        }
    }
    return SortedKeySet::from_unsorted(std::move(keys));
}

/// Removes every j-th key (positions j-1, 2j-1, ...).
[[nodiscard]] inline SortedKeySet downsample(const SortedKeySet& keys, std::size_t j) {
    if (j < 2) throw InvalidInput("downsample step must be >= 2");
    std::vector<Key> out;
    out.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if ((i + 1) % j != 0) out.push_back(keys[i]);
    }
    return SortedKeySet(std::move(out));
}

enum class QueryKind { random, zipfian, promoted };

[[nodiscard]] inline std::string_view to_string(QueryKind k) noexcept {
    switch (k) {
        case QueryKind::random: return "random";
        case QueryKind::zipfian: return "zipfian";
        case QueryKind::promoted: return "promoted";
    }
    return "?";
}

[[nodiscard]] inline QueryKind parse_query_kind(std::string_view s) {
    if (s == "random") return QueryKind::random;
    if (s == "zipfian" || s == "zipf") return QueryKind::zipfian;
    if (s == "promoted") return QueryKind::promoted;
    throw InvalidInput("unknown query kind: " + std::string(s));
}

struct QueryWorkload {
    QueryKind kind = QueryKind::random;
    std::vector<Key> queries;
    std::size_t repetitions = 100;
};

/// P(rank r) proportional to r^-s over ranks 1..n of the sorted keys.
class ZipfSampler {
public:
    ZipfSampler(std::size_t n, double s) : cdf_(n) {
        if (n == 0) throw InvalidInput("zipf over an empty key set");
        if (!(s >= 0.0)) throw InvalidInput("zipf exponent must be >= 0");
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            acc += std::pow(static_cast<double>(r + 1), -s);
            cdf_[r] = acc;
        }
        for (auto& c : cdf_) c /= acc;
        cdf_.back() = 1.0;
    }

    /// 0-based rank.
    template <class Rng>
    [[nodiscard]] std::size_t operator()(Rng& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    }

    [[nodiscard]] double mass(std::size_t rank0) const noexcept {
        return rank0 == 0 ? cdf_[0] : cdf_[rank0] - cdf_[rank0 - 1];
    }

private:
    std::vector<double> cdf_;
};

/// `promoted` is used verbatim for QueryKind::promoted.
[[nodiscard]] inline QueryWorkload sample_queries(const SortedKeySet& keys, std::size_t count, QueryKind kind,
                                                  std::uint64_t seed, double zipf_s = 1.0,
                                                  std::span<const Key> promoted = {}) {
    if (keys.empty()) throw InvalidInput("cannot sample queries from an empty key set");
    QueryWorkload w;
    w.kind = kind;
    std::mt19937_64 rng(seed);
    switch (kind) {
        case QueryKind::random: {
            std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
            w.queries.reserve(count);
            for (std::size_t i = 0; i < count; ++i) w.queries.push_back(keys[pick(rng)]);
            break;
        }
        case QueryKind::zipfian: {
            const ZipfSampler zipf(keys.size(), zipf_s);
            w.queries.reserve(count);
            for (std::size_t i = 0; i < count; ++i) w.queries.push_back(keys[zipf(rng)]);
            break;
        }
        case QueryKind::promoted:
            w.queries.assign(promoted.begin(), promoted.end());
            break;
    }
    return w;
}

struct ReadWriteSplit {
    SortedKeySet build;
    std::vector<std::vector<Key>> batches;
};

/// Random half for the initial build; the rest in 5 batches of floor(n/10),
/// the last batch taking whatever remains.
[[nodiscard]] inline ReadWriteSplit split_read_write(const SortedKeySet& keys, std::uint64_t seed) {
    const std::size_t n = keys.size();
    if (n < 20) throw InvalidInput("read-write split needs at least 20 keys");
    std::vector<Key> all(keys.begin(), keys.end());
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    ReadWriteSplit out;
    const std::size_t half = n / 2;
    out.build = SortedKeySet::from_unsorted(std::vector<Key>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(half)));
    const std::size_t batch = n / 10;
    std::size_t at = half;
    for (int b = 0; b < 5; ++b) {
        const std::size_t end = b == 4 ? n : at + batch;
        out.batches.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(at), all.begin() + static_cast<std::ptrdiff_t>(end));
        at = end;
    }
    return out;
}

}  // namespace cdfsmooth
