#include <gtest/gtest.h>

#include <random>

#include "cdfsmooth/oracle.hpp"
#include "cdfsmooth/smoothing.hpp"
#include "test_support.hpp"

using namespace cdfsmooth;
using cdfsmooth::testing::near_rel;
using cdfsmooth::testing::random_keys;

TEST(DirectSse, Basics) {
    const SortedKeySet a{0, 1, 2};
    EXPECT_EQ(oracle::direct_sse(a.keys(), {1.0, 0.0}), 0.0);
    const SortedKeySet b{0, 1, 4};
    EXPECT_NEAR(oracle::direct_sse(b.keys(), {6.0 / 13.0, 3.0 / 13.0}), 2.0 / 13.0, 1e-15);
    // Zero model: sum of i^2.
    const SortedKeySet c{5, 9, 13, 100, 200};
    EXPECT_DOUBLE_EQ(oracle::direct_sse(c.keys(), {0.0, 0.0}), 0.0 + 1 + 4 + 9 + 16);
}

TEST(BruteForce, TwoKeys) {
    const auto r = oracle::brute_force_best_candidate(SortedKeySet{0, 2}.keys());
    ASSERT_TRUE(r.found);
    EXPECT_EQ(r.best.key, 1u);
    EXPECT_EQ(r.best.rank, 1u);
    EXPECT_NEAR(r.best.sse, 0.0, 1e-18);
    EXPECT_EQ(r.evaluations, 1u);
}

TEST(BruteForce, EvaluatesEveryCandidate) {
    const SortedKeySet k{0, 5, 6, 20};
    const auto r = oracle::brute_force_best_candidate(k.keys());
    EXPECT_EQ(r.evaluations, 4u + 13u);
    EXPECT_EQ(r.evaluations, oracle::legal_candidates(k.keys()).size());
}

TEST(BruteForce, RefusesWideSpread) {
    EXPECT_THROW((void)oracle::brute_force_best_candidate(SortedKeySet{0, 200'000}.keys()),
                 OracleLimitExceeded);
}

TEST(BruteForce, MatchesGreedyFirstRound) {
    std::mt19937_64 rng(42);
    for (int t = 0; t < 1000; ++t) {
        const auto keys = random_keys(rng, 2 + rng() % 40, 3'000);
        const auto bf = oracle::brute_force_best_candidate(keys.keys());
        const auto agg = aggregates_build(keys);
        const auto greedy = best_candidate(agg);
        ASSERT_EQ(bf.found, greedy.has_value());
        if (!bf.found) continue;
        ASSERT_TRUE(near_rel(greedy->sse, bf.best.sse, 1e-9, 1e-9));
    }
}

TEST(Exhaustive, LinearKeysNeedNothing) {
    const auto rep = oracle::exhaustive_smooth(SortedKeySet{0, 1, 2, 3, 4}.keys(), 3);
    EXPECT_TRUE(rep.best_subset.empty());
    EXPECT_NEAR(rep.best_sse, 0.0, 1e-18);
    EXPECT_EQ(rep.evaluations, 1u);
}

TEST(Exhaustive, RefusesBeyondGuardRails) {
    EXPECT_THROW((void)oracle::exhaustive_smooth(SortedKeySet{0, 100}.keys(), 2), OracleLimitExceeded);
    EXPECT_THROW((void)oracle::exhaustive_smooth(SortedKeySet{0, 10}.keys(), 7), OracleLimitExceeded);
}

TEST(Exhaustive, SingleBudgetAgreesWithBruteForce) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; ++t) {
        const auto keys = random_keys(rng, 3 + rng() % 8, 25);
        if (oracle::legal_candidates(keys.keys()).size() > oracle::kMaxExhaustiveCandidates) continue;
        const auto ex = oracle::exhaustive_smooth(keys.keys(), 1);
        const auto bf = oracle::brute_force_best_candidate(keys.keys());
        const double base = fit_direct(keys).sse;
        const double want = bf.found ? std::min(base, bf.best.sse) : base;
        EXPECT_TRUE(near_rel(ex.best_sse, want, 1e-12, 1e-12));
        if (!ex.best_subset.empty()) {
            EXPECT_EQ(ex.best_subset.front(), bf.best.key);
        }
    }
}

TEST(Exhaustive, NeverWorseThanAnyEnumeratedAlternative) {
    const SortedKeySet keys{0, 1, 2, 9, 10, 18};
    const auto ex = oracle::exhaustive_smooth(keys.keys(), 2);
    for (Key a : oracle::legal_candidates(keys.keys())) {
        const Key one[1] = {a};
        EXPECT_LE(ex.best_sse, static_cast<double>(oracle::fit_union(keys.keys(), one).sse) + 1e-12);
    }
}
