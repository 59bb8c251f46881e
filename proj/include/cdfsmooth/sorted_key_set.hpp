#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "cdfsmooth/errors.hpp"

namespace cdfsmooth {

using Key = std::uint64_t;
using Payload = std::uint64_t;

/// Strictly ascending, duplicate-free keys. The rank of keys()[i] is i.
class SortedKeySet {
public:
    SortedKeySet() = default;

    /// Takes ownership of already sorted, strictly ascending keys.
    /// Throws InvalidInput otherwise.
    explicit SortedKeySet(std::vector<Key> keys) : keys_(std::move(keys)) {
        for (std::size_t i = 1; i < keys_.size(); ++i) {
            if (keys_[i - 1] >= keys_[i]) {
                throw InvalidInput("keys must be strictly ascending (position " + std::to_string(i) +
                                   ")");
            }
        }
    }

    SortedKeySet(std::initializer_list<Key> keys) : SortedKeySet(std::vector<Key>(keys)) {}

    /// Sorts and deduplicates arbitrary input.
    static SortedKeySet from_unsorted(std::vector<Key> keys) {
        std::sort(keys.begin(), keys.end());
        keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
        SortedKeySet out;
        out.keys_ = std::move(keys);
        return out;
    }

    [[nodiscard]] std::size_t size() const noexcept { return keys_.size(); }
    [[nodiscard]] bool empty() const noexcept { return keys_.empty(); }
    [[nodiscard]] Key operator[](std::size_t i) const noexcept { return keys_[i]; }
    [[nodiscard]] Key front() const noexcept { return keys_.front(); }
    [[nodiscard]] Key back() const noexcept { return keys_.back(); }
    [[nodiscard]] std::span<const Key> keys() const noexcept { return keys_; }
    [[nodiscard]] auto begin() const noexcept { return keys_.begin(); }
    [[nodiscard]] auto end() const noexcept { return keys_.end(); }

    [[nodiscard]] bool contains(Key k) const noexcept {
        return std::binary_search(keys_.begin(), keys_.end(), k);
    }

    /// Number of keys strictly less than k.
    [[nodiscard]] std::size_t rank_of(Key k) const noexcept {
        return static_cast<std::size_t>(std::lower_bound(keys_.begin(), keys_.end(), k) -
                                        keys_.begin());
    }

    [[nodiscard]] std::vector<Key> release() && { return std::move(keys_); }

    friend bool operator==(const SortedKeySet&, const SortedKeySet&) = default;

private:
    std::vector<Key> keys_;
};

}  // namespace cdfsmooth
