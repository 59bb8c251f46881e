#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "cdfsmooth/index.hpp"
#include "cdfsmooth/workloads.hpp"

using namespace cdfsmooth;

namespace {

class TempFile {
public:
    TempFile()
        : path_(std::filesystem::temp_directory_path() /
                (std::string("cdfsmooth_") + ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".bin")) {}
    ~TempFile() { std::filesystem::remove(path_); }
    [[nodiscard]] std::string str() const { return path_.string(); }

    void write_bytes(const std::vector<unsigned char>& b) const {
        std::ofstream out(path_, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }

    [[nodiscard]] std::vector<unsigned char> read_bytes() const {
        std::ifstream in(path_, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

private:
    std::filesystem::path path_;
};

std::vector<unsigned char> le_file(const std::vector<std::uint64_t>& words) {
    std::vector<unsigned char> out;
    for (auto w : words) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(w >> (8 * i)));
    }
    return out;
}

}  // namespace

TEST(Dataset, LoadSortsAndDeduplicates) {
    TempFile f;
    f.write_bytes(le_file({3, 5, 1, 5}));
    EXPECT_EQ(load_dataset(f.str()), (SortedKeySet{1, 5}));
}

TEST(Dataset, EmptyFileIsAnError) {
    TempFile f;
    f.write_bytes({});
    EXPECT_THROW((void)load_dataset(f.str()), FormatError);
}

TEST(Dataset, TruncatedFileIsAnError) {
    TempFile f;
    auto bytes = le_file({3, 1, 2, 3});
    bytes.resize(bytes.size() - 3);
    f.write_bytes(bytes);
    EXPECT_THROW((void)load_dataset(f.str()), FormatError);

    f.write_bytes(le_file({4, 1, 2, 3}));
    EXPECT_THROW((void)load_dataset(f.str()), FormatError);
}

TEST(Dataset, MissingFileIsAnError) {
    EXPECT_THROW((void)load_dataset("/nonexistent/cdfsmooth/keys.bin"), FormatError);
}

TEST(Dataset, WriteIsLittleEndianAndRoundTrips) {
    TempFile f;
    const SortedKeySet keys{1, 0x0102030405060708ULL, ~0ULL};
    write_dataset(f.str(), keys);
    EXPECT_EQ(f.read_bytes(), le_file({3, 1, 0x0102030405060708ULL, ~0ULL}));
    EXPECT_EQ(load_dataset(f.str()), keys);
}

TEST(Generators, DeterministicPerSeed) {
    for (auto d : {Distribution::uniform, Distribution::lognormal, Distribution::clustered, Distribution::piecewise_outlier}) {
        const auto a = gen_synthetic({d, 5000, 7, {}});
        const auto b = gen_synthetic({d, 5000, 7, {}});
        const auto c = gen_synthetic({d, 5000, 8, {}});
        EXPECT_EQ(a, b) << to_string(d);
        EXPECT_NE(a, c) << to_string(d);
        EXPECT_GT(a.size(), 4500u) << to_string(d);
        EXPECT_LE(a.size(), 5000u);
    }
}

TEST(Generators, UniformDeduplicationIsNegligible) {
    const auto keys = gen_synthetic({Distribution::uniform, 1'000'000, 42, {}});
    EXPECT_GE(keys.size(), 990'000u);
}

TEST(Generators, RejectsTinyDatasets) {
    EXPECT_THROW((void)gen_synthetic({Distribution::uniform, 1, 1, {}}), InvalidInput);
}

TEST(Generators, ParseNames) {
    for (auto d : {Distribution::uniform, Distribution::lognormal, Distribution::clustered, Distribution::piecewise_outlier}) {
        EXPECT_EQ(parse_distribution(to_string(d)), d);
    }
    EXPECT_THROW((void)parse_distribution("gaussian"), InvalidInput);
}

TEST(Generators, ClusteredBuildsDeeperThanUniform) {
    IndexConfig cfg;
    const auto uni = bulk_build(gen_synthetic({Distribution::uniform, 100'000, 3, {}}), cfg).stats();
    const auto clu = bulk_build(gen_synthetic({Distribution::clustered, 100'000, 3, {}}), cfg).stats();
    EXPECT_LT(uni.mean_depth(), clu.mean_depth());
    EXPECT_GE(clu.height, 2u);
}

TEST(Queries, ZipfMatchesTheoreticalMass) {
    const std::size_t n = 100;
    const double s = 1.0;
    const ZipfSampler z(n, s);
    double h = 0.0;
    for (std::size_t r = 1; r <= n; ++r) h += 1.0 / static_cast<double>(r);
    for (std::size_t r = 0; r < n; ++r) EXPECT_NEAR(z.mass(r), 1.0 / (static_cast<double>(r + 1) * h), 1e-12);

    std::mt19937_64 rng(11);
    const std::size_t draws = 1'000'000;
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < draws; ++i) {
        const auto r = z(rng);
        ASSERT_LT(r, n);
        ++counts[r];
    }
    double chi2 = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double e = static_cast<double>(draws) / (static_cast<double>(r + 1) * h);
        chi2 += (static_cast<double>(counts[r]) - e) * (static_cast<double>(counts[r]) - e) / e;
    }
    // 99.9th percentile of chi-square with 99 degrees of freedom is about 148.2.
    EXPECT_LT(chi2, 148.2);
}

TEST(Queries, ZipfQueriesFavourSmallKeys) {
    const auto keys = gen_synthetic({Distribution::uniform, 10'000, 1, {}});
    const auto w = sample_queries(keys, 100'000, QueryKind::zipfian, 5, 1.0);
    std::size_t first = 0;
    for (Key q : w.queries) first += q == keys[0];
    EXPECT_GT(first, 8'000u);
    EXPECT_LT(first, 13'000u);
}

TEST(Queries, RandomQueriesAreResidentAndDeterministic) {
    const auto keys = gen_synthetic({Distribution::lognormal, 10'000, 2, {}});
    const auto a = sample_queries(keys, 5000, QueryKind::random, 9);
    const auto b = sample_queries(keys, 5000, QueryKind::random, 9);
    EXPECT_EQ(a.queries, b.queries);
    ASSERT_EQ(a.queries.size(), 5000u);
    for (Key q : a.queries) EXPECT_TRUE(keys.contains(q));
}

TEST(Queries, PromotedAreUsedVerbatim) {
    const SortedKeySet keys{1, 2, 3, 4};
    const std::vector<Key> promoted{4, 2, 2};
    const auto w = sample_queries(keys, 99, QueryKind::promoted, 1, 1.0, promoted);
    EXPECT_EQ(w.queries, promoted);
    EXPECT_EQ(w.kind, QueryKind::promoted);
}

TEST(Queries, EmptyKeySetThrows) {
    EXPECT_THROW((void)sample_queries(SortedKeySet{}, 10, QueryKind::random, 1), InvalidInput);
    EXPECT_THROW(ZipfSampler(0, 1.0), InvalidInput);
}

TEST(ReadWrite, HalfBuildFiveBatches) {
    std::vector<Key> v(100);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 7 * i + 1;
    const SortedKeySet keys(v);
    const auto split = split_read_write(keys, 13);
    EXPECT_EQ(split.build.size(), 50u);
    ASSERT_EQ(split.batches.size(), 5u);
    std::multiset<Key> seen(split.build.begin(), split.build.end());
    for (const auto& b : split.batches) {
        EXPECT_EQ(b.size(), 10u);
        seen.insert(b.begin(), b.end());
    }
    EXPECT_EQ(std::vector<Key>(seen.begin(), seen.end()), v);

    const auto again = split_read_write(keys, 13);
    EXPECT_EQ(again.build, split.build);
    EXPECT_EQ(again.batches, split.batches);
}

TEST(ReadWrite, LastBatchTakesRemainder) {
    std::vector<Key> v(105);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    const auto split = split_read_write(SortedKeySet(v), 1);
    EXPECT_EQ(split.build.size(), 52u);
    EXPECT_EQ(split.batches.back().size(), 105u - 52u - 4u * 10u);
}

TEST(ReadWrite, TooFewKeysThrows) {
    std::vector<Key> v(19);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    EXPECT_THROW((void)split_read_write(SortedKeySet(v), 1), InvalidInput);
}

TEST(Downsample, RemovesEveryJth) {
    const SortedKeySet keys{10, 20, 30, 40, 50, 60, 70};
    EXPECT_EQ(downsample(keys, 3), (SortedKeySet{10, 20, 40, 50, 70}));
    EXPECT_THROW((void)downsample(keys, 1), InvalidInput);
}
