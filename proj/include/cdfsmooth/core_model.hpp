#pragma once

// Least-squares fitting of a linear key -> rank function, plus the O(1)
// "what if one more point were inserted" machinery that CDF smoothing needs.
//
// All sums are kept over key offsets (key - origin, origin = smallest key) so
// that the least-squares terms stay small. While the offsets and the count
// are small enough, the integer sums are kept exactly in 128-bit integers and
// the fitting intermediates are formed exactly before converting to
// long double. Otherwise the same quantities are accumulated in long double.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/sorted_key_set.hpp"

namespace cdfsmooth {

using u128 = unsigned __int128;
using i128 = __int128;

/// f(k) = slope * k + intercept, in rank units.
struct LinearModel {
    double slope = 0.0;
    double intercept = 0.0;

    [[nodiscard]] double operator()(Key k) const noexcept {
        return slope * static_cast<double>(k) + intercept;
    }

    friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

struct FitResult {
    LinearModel model;
    double sse = 0.0;
};

/// Closed-form least squares over (keys[i], i), two-pass and centred.
/// Throws InvalidInput for fewer than two keys.
[[nodiscard]] inline FitResult fit_direct(std::span<const Key> keys) {
    const std::size_t n = keys.size();
    if (n < 2) throw InvalidInput("fit_direct needs at least two keys");
    const Key origin = keys.front();
    const long double count = static_cast<long double>(n);

    long double mean_k = 0.0L;
    for (Key k : keys) mean_k += static_cast<long double>(k - origin);
    mean_k /= count;
    const long double mean_y = static_cast<long double>(n - 1) / 2.0L;

    long double skk = 0.0L, sky = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double dk = static_cast<long double>(keys[i] - origin) - mean_k;
        const long double dy = static_cast<long double>(i) - mean_y;
        skk += dk * dk;
        sky += dk * dy;
    }
    const long double slope = sky / skk;
    const long double intercept_off = mean_y - slope * mean_k;

    long double sse = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        const long double r = slope * static_cast<long double>(keys[i] - origin) + intercept_off -
                              static_cast<long double>(i);
        sse += r * r;
    }
    FitResult out;
    out.model.slope = static_cast<double>(slope);
    out.model.intercept =
        static_cast<double>(intercept_off - slope * static_cast<long double>(origin));
    out.sse = static_cast<double>(sse);
    return out;
}

[[nodiscard]] inline FitResult fit_direct(const SortedKeySet& keys) { return fit_direct(keys.keys()); }

/// A virtual point: key, its insertion rank (keys strictly below it), and the
/// total SSE of the enlarged set if it were inserted.
struct CandidatePoint {
    Key key = 0;
    std::size_t rank = 0;
    double sse = 0.0;
};

/// Evaluates candidates that all share one insertion rank, i.e. all integer
/// values inside one gap between adjacent keys. Positions are passed as
/// offsets from the aggregates' origin; real-valued offsets are accepted for
/// derivative checks.
class GapEvaluator {
public:
    struct Coefficients {
        long double slope = 0.0L;
        long double intercept = 0.0L;  // relative to the origin
    };

    [[nodiscard]] std::size_t rank() const noexcept { return rank_; }

    /// Refitted slope/intercept after inserting a point at offset x.
    [[nodiscard]] Coefficients refit(long double x) const noexcept {
        return refit_from(spread_kk(x), spread_ky(x), x);
    }
    [[nodiscard]] Coefficients refit(std::uint64_t x) const noexcept {
        return refit_from(spread_kk(x), spread_ky(x), static_cast<long double>(x));
    }

    /// Total SSE over the base keys (with shifted ranks) plus the inserted
    /// point's own residual, written with the virtual point separated out.
    [[nodiscard]] long double loss(long double x) const noexcept { return loss_from(refit(x), x); }
    [[nodiscard]] long double loss(std::uint64_t x) const noexcept {
        return loss_from(refit(x), static_cast<long double>(x));
    }

    /// d loss / d x with the insertion rank held fixed.
    [[nodiscard]] long double derivative(long double x) const noexcept {
        return derivative_from(spread_kk(x), spread_ky(x), x);
    }
    [[nodiscard]] long double derivative(std::uint64_t x) const noexcept {
        return derivative_from(spread_kk(x), spread_ky(x), static_cast<long double>(x));
    }

private:
    friend class FitAggregates;

    // A = (n+1) * sum(k^2) - (sum k)^2 over the enlarged set.
    [[nodiscard]] long double spread_kk(long double x) const noexcept {
        return a0_ + n_ * x * x - 2.0L * sk_ * x;
    }
    [[nodiscard]] long double spread_kk(std::uint64_t x) const noexcept {
        if (!exact_) return spread_kk(static_cast<long double>(x));
        const i128 xi = static_cast<i128>(x);
        return static_cast<long double>(a0_exact_ + n_exact_ * xi * xi - 2 * sk_exact_ * xi);
    }
    // B = (n+1) * sum(k*y) - (sum k)(sum y) over the enlarged set.
    [[nodiscard]] long double spread_ky(long double x) const noexcept { return b0_ + b1_ * x; }
    [[nodiscard]] long double spread_ky(std::uint64_t x) const noexcept {
        if (!exact_) return spread_ky(static_cast<long double>(x));
        return static_cast<long double>(b0_exact_ + b1_exact_ * static_cast<i128>(x));
    }

    [[nodiscard]] Coefficients refit_from(long double a, long double b, long double x) const noexcept {
        Coefficients c;
        c.slope = b / a;
        c.intercept = (sy_all_ - c.slope * (sk_ + x)) / big_n_;
        return c;
    }

    [[nodiscard]] long double loss_from(Coefficients c, long double x) const noexcept {
        const long double w = c.slope, b = c.intercept;
        const long double own = w * x + b - r_;
        return w * w * skk_ + 2.0L * w * b * sk_ - 2.0L * w * sky_shift_ + n_ * b * b -
               2.0L * b * sy_shift_ + syy_shift_ + own * own;
    }

    [[nodiscard]] long double derivative_from(long double a, long double b, long double x) const noexcept {
        const Coefficients c = refit_from(a, b, x);
        const long double w = c.slope, icpt = c.intercept;
        const long double da = 2.0L * (n_ * x - sk_);
        const long double db = b1_;
        const long double dw = (a * db - b * da) / (a * a);
        const long double dicpt = -(w + (sk_ + x) * dw) / big_n_;
        const long double own = w * x + icpt - r_;
        return 2.0L * (dw * (w * skk_ + icpt * sk_ - sky_shift_) +
                       dicpt * (w * sk_ + n_ * icpt - sy_shift_) + own * (dw * x + w + dicpt));
    }

    std::size_t rank_ = 0;
    bool exact_ = false;
    long double n_ = 0, big_n_ = 0, r_ = 0;
    long double sk_ = 0, skk_ = 0;
    long double sky_shift_ = 0, sy_shift_ = 0, syy_shift_ = 0, sy_all_ = 0;
    long double a0_ = 0, b0_ = 0, b1_ = 0;
    i128 n_exact_ = 0, sk_exact_ = 0, a0_exact_ = 0, b0_exact_ = 0, b1_exact_ = 0;
};

/// Running sums over the current base set (original keys plus any committed
/// virtual points). Ranks of the base set are always 0..n-1.
class FitAggregates {
public:
    FitAggregates() = default;

    /// O(n). Throws InvalidInput for fewer than two keys.
    static FitAggregates build(const SortedKeySet& keys) {
        if (keys.size() < 2) throw InvalidInput("aggregates need at least two keys");
        FitAggregates agg;
        agg.origin_ = keys.front();
        agg.keys_.assign(keys.begin(), keys.end());
        agg.prefix_.resize(agg.keys_.size());
        agg.prefix_ld_.resize(agg.keys_.size());
        for (std::size_t i = 0; i < agg.keys_.size(); ++i) {
            const u128 x = agg.keys_[i] - agg.origin_;
            const long double xl = static_cast<long double>(agg.keys_[i] - agg.origin_);
            const long double y = static_cast<long double>(i);
            agg.sum_k_ += x;
            agg.sum_y_ += i;
            agg.sum_kk_ += x * x;
            agg.sum_ky_ += x * i;
            agg.sum_yy_ += static_cast<u128>(i) * i;
            agg.sk_ += xl;
            agg.skk_ += xl * xl;
            agg.sky_ += xl * y;
            agg.prefix_[i] = agg.sum_k_;
            agg.prefix_ld_[i] = agg.sk_;
        }
        agg.refresh_exactness();
        return agg;
    }

    [[nodiscard]] std::size_t size() const noexcept { return keys_.size(); }
    [[nodiscard]] Key origin() const noexcept { return origin_; }
    [[nodiscard]] Key min_key() const noexcept { return keys_.front(); }
    [[nodiscard]] Key max_key() const noexcept { return keys_.back(); }
    [[nodiscard]] std::span<const Key> keys() const noexcept { return keys_; }
    /// True while every fitting intermediate is formed in exact integer arithmetic.
    [[nodiscard]] bool exact() const noexcept { return exact_; }

    // Sums over key offsets (key - origin) and 0-based ranks.
    [[nodiscard]] u128 sum_k() const noexcept { return sum_k_; }
    [[nodiscard]] u128 sum_y() const noexcept { return sum_y_; }
    [[nodiscard]] u128 sum_kk() const noexcept { return sum_kk_; }
    [[nodiscard]] u128 sum_ky() const noexcept { return sum_ky_; }
    [[nodiscard]] u128 sum_yy() const noexcept { return sum_yy_; }
    /// Inclusive prefix sums of key offsets.
    [[nodiscard]] std::span<const u128> key_prefix_sums() const noexcept { return prefix_; }

    [[nodiscard]] bool contains(Key k) const noexcept {
        return std::binary_search(keys_.begin(), keys_.end(), k);
    }
    [[nodiscard]] std::size_t rank_of(Key k) const noexcept {
        return static_cast<std::size_t>(std::lower_bound(keys_.begin(), keys_.end(), k) - keys_.begin());
    }

    /// SSE of the least-squares fit over the current base set.
    [[nodiscard]] long double base_loss() const noexcept {
        const long double n = static_cast<long double>(size());
        const long double q = n * n * (n * n - 1.0L) / 12.0L;
        long double a, b;
        if (exact_) {
            const i128 ni = static_cast<i128>(size());
            a = static_cast<long double>(ni * static_cast<i128>(sum_kk_) -
                                         static_cast<i128>(sum_k_) * static_cast<i128>(sum_k_));
            b = static_cast<long double>(ni * static_cast<i128>(sum_ky_) -
                                         static_cast<i128>(sum_k_) * static_cast<i128>(sum_y_));
        } else {
            const long double sy = n * (n - 1.0L) / 2.0L;
            a = n * skk_ - sk_ * sk_;
            b = n * sky_ - sk_ * sy;
        }
        return std::max(0.0L, (q - b * b / a) / n);
    }

    [[nodiscard]] LinearModel base_model() const noexcept {
        const long double n = static_cast<long double>(size());
        const long double sy = n * (n - 1.0L) / 2.0L;
        long double a, b;
        if (exact_) {
            const i128 ni = static_cast<i128>(size());
            a = static_cast<long double>(ni * static_cast<i128>(sum_kk_) -
                                         static_cast<i128>(sum_k_) * static_cast<i128>(sum_k_));
            b = static_cast<long double>(ni * static_cast<i128>(sum_ky_) -
                                         static_cast<i128>(sum_k_) * static_cast<i128>(sum_y_));
        } else {
            a = n * skk_ - sk_ * sk_;
            b = n * sky_ - sk_ * sy;
        }
        const long double w = b / a;
        const long double icpt = (sy - w * sk_) / n;
        return to_absolute(w, icpt);
    }

    /// Evaluator for every candidate whose insertion rank is `rank`
    /// (1 <= rank <= size()-1).
    [[nodiscard]] GapEvaluator gap(std::size_t rank) const noexcept {
        GapEvaluator g;
        const std::size_t n = size();
        g.rank_ = rank;
        g.exact_ = exact_;
        g.n_ = static_cast<long double>(n);
        g.big_n_ = static_cast<long double>(n + 1);
        g.r_ = static_cast<long double>(rank);
        const long double nl = g.n_;
        // Ranks at/after the insertion point shift up by one.
        g.sy_shift_ = nl * (nl - 1.0L) / 2.0L + nl - g.r_;
        g.syy_shift_ = (nl - 1.0L) * nl * (2.0L * nl - 1.0L) / 6.0L + nl * nl - g.r_ * g.r_;
        g.sy_all_ = g.sy_shift_ + g.r_;
        if (exact_) {
            const i128 ni = static_cast<i128>(n);
            const i128 big = ni + 1;
            const i128 sk = static_cast<i128>(sum_k_);
            const i128 tail = static_cast<i128>(tail_sum(rank));
            const i128 sky_shift = static_cast<i128>(sum_ky_) + tail;
            const i128 sy_all = big * ni / 2;
            g.n_exact_ = ni;
            g.sk_exact_ = sk;
            g.a0_exact_ = big * static_cast<i128>(sum_kk_) - sk * sk;
            g.b0_exact_ = big * sky_shift - sk * sy_all;
            g.b1_exact_ = big * static_cast<i128>(rank) - sy_all;
            g.sk_ = static_cast<long double>(sk);
            g.skk_ = static_cast<long double>(sum_kk_);
            g.sky_shift_ = static_cast<long double>(sky_shift);
            g.a0_ = static_cast<long double>(g.a0_exact_);
            g.b0_ = static_cast<long double>(g.b0_exact_);
            g.b1_ = static_cast<long double>(g.b1_exact_);
        } else {
            g.sk_ = sk_;
            g.skk_ = skk_;
            g.sky_shift_ = sky_ + tail_sum_ld(rank);
            g.a0_ = g.big_n_ * skk_ - sk_ * sk_;
            g.b0_ = g.big_n_ * g.sky_shift_ - sk_ * g.sy_all_;
            g.b1_ = g.big_n_ * g.r_ - g.sy_all_;
        }
        return g;
    }

    /// Validates `key` as a virtual point and fills in its rank and SSE.
    [[nodiscard]] CandidatePoint candidate(Key key) const {
        CandidatePoint c;
        c.key = key;
        c.rank = rank_of(key);
        validate(c);
        c.sse = static_cast<double>(gap(c.rank).loss(offset(key)));
        return c;
    }

    void validate(const CandidatePoint& c) const {
        if (c.key <= min_key() || c.key >= max_key()) {
            throw InvalidCandidate("candidate " + std::to_string(c.key) + " outside the open key range");
        }
        if (contains(c.key)) {
            throw InvalidCandidate("candidate " + std::to_string(c.key) + " collides with a key");
        }
        if (c.rank != rank_of(c.key)) {
            throw InvalidCandidate("candidate rank does not match its key");
        }
    }

    [[nodiscard]] std::uint64_t offset(Key k) const noexcept { return k - origin_; }

    [[nodiscard]] LinearModel to_absolute(long double slope, long double intercept_off) const noexcept {
        LinearModel m;
        m.slope = static_cast<double>(slope);
        m.intercept = static_cast<double>(intercept_off - slope * static_cast<long double>(origin_));
        return m;
    }

    /// Makes the candidate part of the base set. O(n) for the prefix sums.
    void commit(const CandidatePoint& c) {
        validate(c);
        const std::size_t r = c.rank;
        const std::size_t n = size();
        const u128 x = offset(c.key);
        const long double xl = static_cast<long double>(offset(c.key));
        const u128 tail = tail_sum(r);
        const long double tail_ld = tail_sum_ld(r);

        sum_ky_ += tail + x * r;
        sum_k_ += x;
        sum_kk_ += x * x;
        sum_y_ += n;
        sum_yy_ += static_cast<u128>(n) * n;
        sky_ += tail_ld + xl * static_cast<long double>(r);
        sk_ += xl;
        skk_ += xl * xl;

        keys_.insert(keys_.begin() + static_cast<std::ptrdiff_t>(r), c.key);
        prefix_.insert(prefix_.begin() + static_cast<std::ptrdiff_t>(r), u128{0});
        prefix_ld_.insert(prefix_ld_.begin() + static_cast<std::ptrdiff_t>(r), 0.0L);
        for (std::size_t i = r; i < keys_.size(); ++i) {
            const u128 prev = i == 0 ? u128{0} : prefix_[i - 1];
            const long double prev_ld = i == 0 ? 0.0L : prefix_ld_[i - 1];
            prefix_[i] = prev + (keys_[i] - origin_);
            prefix_ld_[i] = prev_ld + static_cast<long double>(keys_[i] - origin_);
        }
        refresh_exactness();
    }

    friend bool operator==(const FitAggregates& a, const FitAggregates& b) {
        return a.origin_ == b.origin_ && a.keys_ == b.keys_ && a.sum_k_ == b.sum_k_ &&
               a.sum_y_ == b.sum_y_ && a.sum_kk_ == b.sum_kk_ && a.sum_ky_ == b.sum_ky_ &&
               a.sum_yy_ == b.sum_yy_ && a.prefix_ == b.prefix_;
    }

private:
    // Sum of key offsets with index >= r.
    [[nodiscard]] u128 tail_sum(std::size_t r) const noexcept {
        return r == 0 ? sum_k_ : sum_k_ - prefix_[r - 1];
    }
    [[nodiscard]] long double tail_sum_ld(std::size_t r) const noexcept {
        return r == 0 ? sk_ : sk_ - prefix_ld_[r - 1];
    }

    void refresh_exactness() noexcept {
        // Candidate evaluation works with n+1 points; the bounds keep
        // (n+1)^2 * span^2 and (n+1)^3 * span below 2^127.
        const int bits_n = std::bit_width(static_cast<std::uint64_t>(size() + 2));
        const int bits_span = std::bit_width(static_cast<std::uint64_t>(max_key() - origin_));
        exact_ = bits_n + bits_span <= 62 && 3 * bits_n + bits_span <= 125;
    }

    Key origin_ = 0;
    std::vector<Key> keys_;
    std::vector<u128> prefix_;
    std::vector<long double> prefix_ld_;
    u128 sum_k_ = 0, sum_y_ = 0, sum_kk_ = 0, sum_ky_ = 0, sum_yy_ = 0;
    long double sk_ = 0, skk_ = 0, sky_ = 0;
    bool exact_ = false;
};

// Free-function surface over FitAggregates.

[[nodiscard]] inline FitAggregates aggregates_build(const SortedKeySet& keys) {
    return FitAggregates::build(keys);
}

[[nodiscard]] inline LinearModel refit_with_candidate(const FitAggregates& agg, const CandidatePoint& cand) {
    agg.validate(cand);
    const auto c = agg.gap(cand.rank).refit(agg.offset(cand.key));
    return agg.to_absolute(c.slope, c.intercept);
}

[[nodiscard]] inline double loss_with_candidate(const FitAggregates& agg, const CandidatePoint& cand) {
    agg.validate(cand);
    return static_cast<double>(agg.gap(cand.rank).loss(agg.offset(cand.key)));
}

[[nodiscard]] inline double loss_derivative(const FitAggregates& agg, const CandidatePoint& cand) {
    agg.validate(cand);
    return static_cast<double>(agg.gap(cand.rank).derivative(agg.offset(cand.key)));
}

[[nodiscard]] inline FitAggregates commit_virtual_point(FitAggregates agg, const CandidatePoint& cand) {
    agg.commit(cand);
    return agg;
}

}  // namespace cdfsmooth
