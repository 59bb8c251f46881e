#pragma once

// A hierarchical learned index with two node policies.
//
// exact:  every node owns a slot array; a key lives in exactly the slot its
//         node model predicts. Keys that predict the same slot are pushed into
//         a child node built over just that group. Lookups never search.
// gapped: inner nodes route by model to a child; leaves are gapped arrays and
//         lookups run an exponential search from the predicted slot.
//
// Both policies can be (re)built over keys plus virtual points. Virtual
// points take part in the model fit and then leave an empty reserved slot
// behind, which a later insert may consume.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cdfsmooth/errors.hpp"
#include "cdfsmooth/sorted_key_set.hpp"

namespace cdfsmooth {

enum class IndexMode { exact, gapped };

[[nodiscard]] inline std::string_view to_string(IndexMode m) noexcept {
    return m == IndexMode::exact ? "exact" : "gapped";
}

[[nodiscard]] inline IndexMode parse_mode(std::string_view s) {
    if (s == "exact") return IndexMode::exact;
    if (s == "gapped") return IndexMode::gapped;
    throw InvalidInput("unknown index mode: " + std::string(s));
}

struct IndexConfig {
    IndexMode mode = IndexMode::exact;
    double slots_per_key = 2.0;
    std::size_t max_leaf_size = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(slots_per_key >= 1.0) || !std::isfinite(slots_per_key)) {
            throw InvalidInput("slots_per_key must be >= 1");
        }
        if (max_leaf_size < 16) throw InvalidInput("max_leaf_size must be >= 16");
    }
};

struct Record {
    Key key = 0;
    Payload payload = 0;
    friend bool operator==(const Record&, const Record&) = default;
};

/// Linear predictor relative to an origin key, so that nodes covering a
/// narrow range of large keys keep full precision.
struct SlotModel {
    Key origin = 0;
    double slope = 0.0;
    double intercept = 0.0;

    [[nodiscard]] double operator()(Key k) const noexcept {
        const double off = k >= origin ? static_cast<double>(k - origin) : -static_cast<double>(origin - k);
        return slope * off + intercept;
    }

    /// Round half up, clamped to [0, slots - 1].
    [[nodiscard]] std::size_t slot(Key k, std::size_t slots) const noexcept {
        const double p = std::floor((*this)(k) + 0.5);
        if (!(p > 0.0)) return 0;
        if (p >= static_cast<double>(slots - 1)) return slots - 1;
        return static_cast<std::size_t>(p);
    }

    /// Floor, clamped to [0, slots - 1]. Used for routing in inner nodes.
    [[nodiscard]] std::size_t bucket(Key k, std::size_t slots) const noexcept {
        const double p = std::floor((*this)(k));
        if (!(p > 0.0)) return 0;
        if (p >= static_cast<double>(slots - 1)) return slots - 1;
        return static_cast<std::size_t>(p);
    }
};

struct Node;

struct EmptySlot {
    bool virtual_gap = false;
};

using Slot = std::variant<EmptySlot, Record, std::unique_ptr<Node>>;

struct Node {
    SlotModel model;
    std::size_t level = 1;
    double fit_sse = 0.0;        // rank-space SSE of the model over its build set
    std::size_t built_keys = 0;  // keys this node was built over (descendants included)
    std::size_t virtual_points = 0;
    std::size_t stamp = 0;  // optimizer pass (1-based) that last rebuilt this node

    // exact mode
    std::vector<Slot> slots;

    // gapped mode, leaf. Gaps hold a copy of the nearest key to their left
    // (0 before the first key) so that `keys` stays non-decreasing.
    std::vector<Key> keys;
    std::vector<Payload> payloads;
    std::vector<std::uint8_t> occupied;
    std::vector<std::uint8_t> reserved;
    std::size_t key_count = 0;
    std::size_t max_keys = 0;

    // gapped mode, inner
    std::vector<std::unique_ptr<Node>> children;

    [[nodiscard]] bool gapped_inner() const noexcept { return !children.empty(); }
};

struct LookupTrace {
    bool found = false;
    std::size_t depth = 0;
    std::size_t search_steps = 0;
    std::optional<Payload> payload;
    std::size_t predicted = 0;
    std::size_t actual = 0;
};

struct InsertOutcome {
    std::size_t depth = 0;
    bool consumed_virtual_gap = false;
    bool structural_change = false;
};

struct IndexStats {
    std::size_t key_count = 0;
    std::size_t node_count = 0;
    std::size_t height = 0;
    std::size_t total_slots = 0;
    std::size_t data_slots = 0;
    std::size_t pointer_slots = 0;
    std::size_t virtual_gaps = 0;
    double total_sse = 0.0;
    std::vector<std::size_t> keys_per_level;   // [0] is level 1
    std::vector<std::size_t> nodes_per_level;

    [[nodiscard]] double mean_depth() const noexcept {
        if (key_count == 0) return 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < keys_per_level.size(); ++i) {
            s += static_cast<double>(keys_per_level[i]) * static_cast<double>(i + 1);
        }
        return s / static_cast<double>(key_count);
    }

    [[nodiscard]] std::size_t keys_at_or_below(std::size_t level) const noexcept {
        std::size_t s = 0;
        for (std::size_t i = level - 1; i < keys_per_level.size(); ++i) s += keys_per_level[i];
        return s;
    }
};

namespace detail {

struct RankFit {
    Key origin = 0;
    long double slope = 0.0L;
    long double intercept = 0.0L;
    long double sse = 0.0L;
    std::size_t count = 0;
};

// Visits the merge of records and virtual keys in ascending order as
// (offset, rank) pairs.
template <class F>
void for_each_union(std::span<const Record> recs, std::span<const Key> virt, Key origin, F&& f) {
    std::size_t i = 0, j = 0, r = 0;
    while (i < recs.size() || j < virt.size()) {
        Key k;
        if (j == virt.size() || (i < recs.size() && recs[i].key < virt[j])) {
            k = recs[i++].key;
        } else {
            k = virt[j++];
        }
        f(static_cast<long double>(k - origin), static_cast<long double>(r++));
    }
}

[[nodiscard]] inline RankFit fit_ranks(std::span<const Record> recs, std::span<const Key> virt) {
    RankFit fit;
    fit.count = recs.size() + virt.size();
    if (fit.count == 0) return fit;
    fit.origin = recs.empty() ? virt.front() : (virt.empty() ? recs.front().key : std::min(recs.front().key, virt.front()));
    if (fit.count == 1) return fit;
    const long double n = static_cast<long double>(fit.count);
    long double mk = 0.0L;
    for_each_union(recs, virt, fit.origin, [&](long double k, long double) { mk += k; });
    mk /= n;
    const long double my = (n - 1.0L) / 2.0L;
    long double skk = 0.0L, sky = 0.0L;
    for_each_union(recs, virt, fit.origin, [&](long double k, long double y) {
        skk += (k - mk) * (k - mk);
        sky += (k - mk) * (y - my);
    });
    fit.slope = skk > 0.0L ? sky / skk : 0.0L;
    fit.intercept = my - fit.slope * mk;
    for_each_union(recs, virt, fit.origin, [&](long double k, long double y) {
        const long double e = fit.slope * k + fit.intercept - y;
        fit.sse += e * e;
    });
    return fit;
}

[[nodiscard]] inline std::size_t scaled_slots(double spk, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(spk * static_cast<double>(n)));
}

}  // namespace detail

class Index {
public:
    Index() : Index(IndexConfig{}) {}

    explicit Index(IndexConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        root_ = build_subtree({}, {}, 1);
    }

    static Index bulk_build(std::span<const Record> recs, IndexConfig cfg) {
        for (std::size_t i = 1; i < recs.size(); ++i) {
            if (recs[i - 1].key >= recs[i].key) throw InvalidInput("bulk_build needs strictly ascending keys");
        }
        Index idx(cfg);
        idx.root_ = idx.cfg_.mode == IndexMode::exact ? idx.build_exact(recs, {}, 1) : idx.build_gapped_tree(recs, 1);
        idx.size_ = recs.size();
        return idx;
    }

    /// Payload of every key defaults to the key itself.
    static Index bulk_build(const SortedKeySet& keys, IndexConfig cfg) {
        std::vector<Record> recs(keys.size());
        for (std::size_t i = 0; i < keys.size(); ++i) recs[i] = {keys[i], keys[i]};
        return bulk_build(recs, cfg);
    }

    [[nodiscard]] const IndexConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] Node& root() noexcept { return *root_; }
    [[nodiscard]] const Node& root() const noexcept { return *root_; }

    [[nodiscard]] LookupTrace lookup(Key key) const {
        return cfg_.mode == IndexMode::exact ? lookup_exact(key) : lookup_gapped(key);
    }

    InsertOutcome insert(Key key, Payload payload) {
        if (lookup(key).found) throw DuplicateKey("key already present: " + std::to_string(key));
        auto out = cfg_.mode == IndexMode::exact ? insert_exact(*root_, key, payload) : insert_gapped(key, payload);
        ++size_;
        return out;
    }

    InsertOutcome insert(Key key) { return insert(key, key); }

    /// Calls f(record, level) for every key in ascending key order.
    template <class F>
    void for_each(F&& f) const {
        visit_records(*root_, f);
    }

    template <class F>
    static void visit_records(const Node& node, F& f) {
        if (!node.slots.empty()) {
            for (const auto& s : node.slots) {
                if (const auto* r = std::get_if<Record>(&s)) {
                    f(*r, node.level);
                } else if (const auto* c = std::get_if<std::unique_ptr<Node>>(&s)) {
                    visit_records(**c, f);
                }
            }
        } else if (node.gapped_inner()) {
            for (const auto& c : node.children) visit_records(*c, f);
        } else {
            for (std::size_t i = 0; i < node.keys.size(); ++i) {
                if (node.occupied[i]) f(Record{node.keys[i], node.payloads[i]}, node.level);
            }
        }
    }

    [[nodiscard]] std::vector<Key> keys() const {
        std::vector<Key> out;
        out.reserve(size_);
        for_each([&](const Record& r, std::size_t) { out.push_back(r.key); });
        return out;
    }

    /// Pre-order visit of every node, f(Node&).
    template <class F>
    void visit_nodes(F&& f) {
        visit_nodes_impl(*root_, f);
    }

    template <class F>
    void visit_nodes(F&& f) const {
        visit_nodes_impl(static_cast<const Node&>(*root_), f);
    }

    [[nodiscard]] IndexStats stats() const {
        IndexStats st;
        visit_nodes([&](const Node& n) {
            ++st.node_count;
            st.height = std::max(st.height, n.level);
            if (st.nodes_per_level.size() < n.level) {
                st.nodes_per_level.resize(n.level, 0);
                st.keys_per_level.resize(n.level, 0);
            }
            ++st.nodes_per_level[n.level - 1];
            st.total_sse += n.fit_sse;
            std::size_t here = 0;
            if (!n.slots.empty()) {
                st.total_slots += n.slots.size();
                for (const auto& s : n.slots) {
                    if (std::holds_alternative<Record>(s)) {
                        ++here;
                        ++st.data_slots;
                    } else if (std::holds_alternative<std::unique_ptr<Node>>(s)) {
                        ++st.pointer_slots;
                    } else {
                        ++st.data_slots;
                        if (std::get<EmptySlot>(s).virtual_gap) ++st.virtual_gaps;
                    }
                }
            } else if (n.gapped_inner()) {
                st.total_slots += n.children.size();
                st.pointer_slots += n.children.size();
            } else {
                st.total_slots += n.keys.size();
                st.data_slots += n.keys.size();
                here = n.key_count;
                for (std::size_t i = 0; i < n.reserved.size(); ++i) st.virtual_gaps += n.reserved[i];
            }
            st.keys_per_level[n.level - 1] += here;
            st.key_count += here;
        });
        return st;
    }

    /// Builds a detached node at `level` over `recs` plus virtual keys, using
    /// this index's policy. In gapped mode the result is always a single leaf.
    [[nodiscard]] std::unique_ptr<Node> build_subtree(std::span<const Record> recs, std::span<const Key> virt,
                                                      std::size_t level) const {
        if (cfg_.mode == IndexMode::exact) return build_exact(recs, virt, level);
        auto leaf = build_gapped_leaf(recs, virt, level);
        leaf->max_keys = std::max(cfg_.max_leaf_size, 2 * recs.size());
        return leaf;
    }

    /// Replaces `target` in place; everything below it is released.
    static void replace_node(Node& target, std::unique_ptr<Node> fresh) { target = std::move(*fresh); }

private:
    template <class N, class F>
    static void visit_nodes_impl(N& node, F& f) {
        f(node);
        for (auto& s : node.slots) {
            if (auto* c = std::get_if<std::unique_ptr<Node>>(&s)) visit_nodes_impl(static_cast<N&>(**c), f);
        }
        for (auto& c : node.children) visit_nodes_impl(static_cast<N&>(*c), f);
    }

    // exact mode ------------------------------------------------------------

    [[nodiscard]] std::unique_ptr<Node> build_exact(std::span<const Record> recs, std::span<const Key> virt,
                                                    std::size_t level) const {
        auto node = std::make_unique<Node>();
        node->level = level;
        node->built_keys = recs.size();
        const std::size_t n = recs.size();
        if (n == 0) {
            node->slots.resize(1);
            return node;
        }
        const std::size_t m = std::max<std::size_t>(detail::scaled_slots(cfg_.slots_per_key, n) + virt.size(), 1);
        node->slots.resize(m);

        const auto fit = detail::fit_ranks(recs, virt);
        node->fit_sse = static_cast<double>(fit.sse);
        const std::size_t total = fit.count;
        const long double scale =
            total > 1 ? static_cast<long double>(m - 1) / static_cast<long double>(total - 1) : 0.0L;
        node->model = {fit.origin, static_cast<double>(fit.slope * scale), static_cast<double>(fit.intercept * scale)};
        if (n > 1 && node->model.slot(recs.front().key, m) == node->model.slot(recs.back().key, m)) {
            // Degenerate fit: fall back to the line through the extremes.
            const Key lo = recs.front().key;
            node->model = {lo, static_cast<double>(m - 1) / static_cast<double>(recs.back().key - lo), 0.0};
        }

        std::size_t i = 0;
        while (i < n) {
            const std::size_t s = node->model.slot(recs[i].key, m);
            std::size_t j = i + 1;
            while (j < n && node->model.slot(recs[j].key, m) == s) ++j;
            if (j - i == 1) {
                node->slots[s] = recs[i];
            } else {
                node->slots[s] = build_exact(recs.subspan(i, j - i), {}, level + 1);
            }
            i = j;
        }
        for (Key v : virt) {
            const std::size_t s = node->model.slot(v, m);
            if (auto* e = std::get_if<EmptySlot>(&node->slots[s]); e && !e->virtual_gap) {
                e->virtual_gap = true;
                ++node->virtual_points;
            }
        }
        return node;
    }

    [[nodiscard]] LookupTrace lookup_exact(Key key) const {
        LookupTrace t;
        const Node* node = root_.get();
        while (true) {
            t.depth = node->level;
            const std::size_t s = node->model.slot(key, node->slots.size());
            t.predicted = t.actual = s;
            const Slot& slot = node->slots[s];
            if (const auto* r = std::get_if<Record>(&slot)) {
                if (r->key == key) {
                    t.found = true;
                    t.payload = r->payload;
                }
                return t;
            }
            if (const auto* c = std::get_if<std::unique_ptr<Node>>(&slot)) {
                node = c->get();
                continue;
            }
            return t;
        }
    }

    InsertOutcome insert_exact(Node& root, Key key, Payload payload) {
        Node* node = &root;
        while (true) {
            const std::size_t s = node->model.slot(key, node->slots.size());
            Slot& slot = node->slots[s];
            if (auto* e = std::get_if<EmptySlot>(&slot)) {
                InsertOutcome out{node->level, e->virtual_gap, false};
                slot = Record{key, payload};
                return out;
            }
            if (auto* c = std::get_if<std::unique_ptr<Node>>(&slot)) {
                node = c->get();
                continue;
            }
            const Record old = std::get<Record>(slot);
            Record pair[2] = {old, {key, payload}};
            if (pair[1].key < pair[0].key) std::swap(pair[0], pair[1]);
            slot = build_exact(pair, {}, node->level + 1);
            return {node->level + 1, false, true};
        }
    }

    // gapped mode -----------------------------------------------------------

    [[nodiscard]] std::unique_ptr<Node> build_gapped_tree(std::span<const Record> recs, std::size_t level,
                                                          bool force_inner = false) const {
        const std::size_t n = recs.size();
        if (n <= cfg_.max_leaf_size && !force_inner) return build_gapped_leaf(recs, {}, level);

        auto node = std::make_unique<Node>();
        node->level = level;
        node->built_keys = n;
        const std::size_t target = std::max<std::size_t>(cfg_.max_leaf_size / 2, 1);
        const std::size_t fanout = std::max<std::size_t>(2, (n + target - 1) / target);
        const auto fit = detail::fit_ranks(recs, {});
        node->fit_sse = static_cast<double>(fit.sse);
        const long double scale = static_cast<long double>(fanout) / static_cast<long double>(n);
        node->model = {fit.origin, static_cast<double>(fit.slope * scale), static_cast<double>(fit.intercept * scale)};
        if (node->model.bucket(recs.front().key, fanout) == node->model.bucket(recs.back().key, fanout)) {
            const Key lo = recs.front().key;
            node->model = {lo, static_cast<double>(fanout) / (static_cast<double>(recs.back().key - lo) + 1.0), 0.0};
        }
        node->children.reserve(fanout);
        std::size_t i = 0;
        for (std::size_t c = 0; c < fanout; ++c) {
            std::size_t j = i;
            while (j < n && node->model.bucket(recs[j].key, fanout) == c) ++j;
            node->children.push_back(build_gapped_tree(recs.subspan(i, j - i), level + 1));
            i = j;
        }
        return node;
    }

    [[nodiscard]] std::unique_ptr<Node> build_gapped_leaf(std::span<const Record> recs, std::span<const Key> virt,
                                                          std::size_t level) const {
        auto node = std::make_unique<Node>();
        node->level = level;
        node->built_keys = recs.size();
        node->max_keys = cfg_.max_leaf_size;
        const std::size_t n = recs.size();
        const std::size_t total = n + virt.size();
        const std::size_t m = std::max<std::size_t>({detail::scaled_slots(cfg_.slots_per_key, n) + virt.size(), total, 1});
        node->keys.assign(m, 0);
        node->payloads.assign(m, 0);
        node->occupied.assign(m, 0);
        node->reserved.assign(m, 0);
        node->key_count = n;
        if (total == 0) return node;

        const auto fit = detail::fit_ranks(recs, virt);
        node->fit_sse = static_cast<double>(fit.sse);
        const long double scale =
            total > 1 ? static_cast<long double>(m - 1) / static_cast<long double>(total - 1) : 0.0L;
        node->model = {fit.origin, static_cast<double>(fit.slope * scale), static_cast<double>(fit.intercept * scale)};

        // Place the merged sequence in order: at the predicted slot if it is
        // free and leaves room for the rest, otherwise at the nearest legal one.
        std::size_t i = 0, j = 0, placed = 0, next_free = 0;
        while (i < n || j < virt.size()) {
            const bool is_key = j == virt.size() || (i < n && recs[i].key < virt[j]);
            const Key k = is_key ? recs[i].key : virt[j];
            const std::size_t hi = m - (total - placed);
            const std::size_t pos = std::clamp(node->model.slot(k, m), next_free, hi);
            if (is_key) {
                node->keys[pos] = k;
                node->payloads[pos] = recs[i].payload;
                node->occupied[pos] = 1;
                ++i;
            } else {
                node->reserved[pos] = 1;
                ++node->virtual_points;
                ++j;
            }
            next_free = pos + 1;
            ++placed;
        }
        refill(*node, 0);
        return node;
    }

    // Rewrites gap fill values from position `from` to the end.
    static void refill(Node& leaf, std::size_t from) {
        Key last = 0;
        for (std::size_t p = from; p-- > 0;) {
            if (leaf.occupied[p]) {
                last = leaf.keys[p];
                break;
            }
        }
        for (std::size_t p = from; p < leaf.keys.size(); ++p) {
            if (leaf.occupied[p]) {
                last = leaf.keys[p];
            } else {
                leaf.keys[p] = last;
            }
        }
    }

    struct SearchResult {
        std::size_t pos;
        std::size_t probes;
    };

    // Lower bound of `key` in the leaf's key array by exponential search
    // from `p`. Counts every key comparison as a probe.
    [[nodiscard]] static SearchResult exponential_search(const Node& leaf, Key key, std::size_t p) {
        const auto& a = leaf.keys;
        const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(a.size());
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(p);
        std::size_t probes = 1;
        if (a[p] == key && leaf.occupied[p]) return {p, probes};
        std::ptrdiff_t lo, hi;
        if (a[p] < key) {
            lo = start;
            hi = m;
            for (std::ptrdiff_t step = 1;; step *= 2) {
                const std::ptrdiff_t q = start + step;
                if (q >= m) break;
                ++probes;
                if (a[static_cast<std::size_t>(q)] >= key) {
                    hi = q;
                    break;
                }
                lo = q;
            }
        } else {
            hi = start;
            lo = -1;
            for (std::ptrdiff_t step = 1;; step *= 2) {
                const std::ptrdiff_t q = start - step;
                if (q < 0) break;
                ++probes;
                if (a[static_cast<std::size_t>(q)] < key) {
                    lo = q;
                    break;
                }
                hi = q;
            }
        }
        while (hi - lo > 1) {
            const std::ptrdiff_t mid = lo + (hi - lo) / 2;
            ++probes;
            if (a[static_cast<std::size_t>(mid)] >= key) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        std::size_t pos = static_cast<std::size_t>(hi);
        // Only a key equal to the leading fill value (0) can land on a gap.
        while (pos < a.size() && !leaf.occupied[pos] && a[pos] == key) ++pos;
        return {pos, probes};
    }

    [[nodiscard]] std::pair<const Node*, std::size_t> descend(Key key) const {
        const Node* node = root_.get();
        while (node->gapped_inner()) node = node->children[node->model.bucket(key, node->children.size())].get();
        return {node, node->level};
    }

    [[nodiscard]] LookupTrace lookup_gapped(Key key) const {
        LookupTrace t;
        const auto [leaf, depth] = descend(key);
        t.depth = depth;
        if (leaf->key_count == 0) return t;
        t.predicted = leaf->model.slot(key, leaf->keys.size());
        const auto res = exponential_search(*leaf, key, t.predicted);
        t.search_steps = res.probes;
        t.actual = res.pos;
        if (res.pos < leaf->keys.size() && leaf->occupied[res.pos] && leaf->keys[res.pos] == key) {
            t.found = true;
            t.payload = leaf->payloads[res.pos];
        }
        return t;
    }

    [[nodiscard]] static std::vector<Record> leaf_records(const Node& leaf) {
        std::vector<Record> out;
        out.reserve(leaf.key_count + 1);
        for (std::size_t i = 0; i < leaf.keys.size(); ++i) {
            if (leaf.occupied[i]) out.push_back({leaf.keys[i], leaf.payloads[i]});
        }
        return out;
    }

    InsertOutcome insert_gapped(Key key, Payload payload) {
        Node* node = root_.get();
        while (node->gapped_inner()) node = node->children[node->model.bucket(key, node->children.size())].get();
        Node& leaf = *node;

        if (leaf.key_count + 1 > leaf.max_keys || leaf.key_count == leaf.keys.size()) {
            auto recs = leaf_records(leaf);
            recs.insert(std::lower_bound(recs.begin(), recs.end(), key,
                                         [](const Record& r, Key k) { return r.key < k; }),
                        Record{key, payload});
            const bool split = recs.size() > leaf.max_keys;
            const std::size_t max_keys = leaf.max_keys;
            auto fresh = split ? build_gapped_tree(recs, leaf.level, true) : build_gapped_leaf(recs, {}, leaf.level);
            if (!split) fresh->max_keys = max_keys;
            replace_node(leaf, std::move(fresh));
            return {lookup_gapped(key).depth, false, true};
        }

        const std::size_t m = leaf.keys.size();
        const std::size_t p = leaf.model.slot(key, m);
        const std::size_t t = leaf.key_count == 0 ? m : exponential_search(leaf, key, p).pos;
        // Predecessor: last occupied slot before t.
        std::ptrdiff_t q = static_cast<std::ptrdiff_t>(t) - 1;
        while (q >= 0 && !leaf.occupied[static_cast<std::size_t>(q)]) --q;

        std::size_t pos;
        std::size_t consumed;
        if (static_cast<std::ptrdiff_t>(t) - q > 1) {
            pos = std::clamp<std::size_t>(p, static_cast<std::size_t>(q + 1), t - 1);
            consumed = pos;
        } else {
            // No room between neighbours: shift towards the nearest gap.
            std::size_t right = t;
            while (right < m && leaf.occupied[right]) ++right;
            std::ptrdiff_t left = q;
            while (left >= 0 && leaf.occupied[static_cast<std::size_t>(left)]) --left;
            const bool use_right =
                right < m && (left < 0 || right - t <= static_cast<std::size_t>(q - left));
            if (use_right) {
                for (std::size_t i = right; i > t; --i) {
                    leaf.keys[i] = leaf.keys[i - 1];
                    leaf.payloads[i] = leaf.payloads[i - 1];
                    leaf.occupied[i] = 1;
                }
                consumed = right;
                pos = t;
            } else {
                const std::size_t l = static_cast<std::size_t>(left);
                for (std::size_t i = l; i < static_cast<std::size_t>(q); ++i) {
                    leaf.keys[i] = leaf.keys[i + 1];
                    leaf.payloads[i] = leaf.payloads[i + 1];
                    leaf.occupied[i] = 1;
                }
                consumed = l;
                pos = static_cast<std::size_t>(q);
            }
        }
        const bool was_virtual = leaf.reserved[consumed] != 0;
        leaf.reserved[consumed] = 0;
        leaf.keys[pos] = key;
        leaf.payloads[pos] = payload;
        leaf.occupied[pos] = 1;
        ++leaf.key_count;
        refill(leaf, pos);
        return {leaf.level, was_virtual, false};
    }

    IndexConfig cfg_;
    std::unique_ptr<Node> root_;
    std::size_t size_ = 0;
};

[[nodiscard]] inline Index bulk_build(const SortedKeySet& keys, const IndexConfig& cfg) {
    return Index::bulk_build(keys, cfg);
}

/// Levels below `node`, counting `node` itself as 1.
[[nodiscard]] inline std::size_t subtree_height(const Node& node) {
    std::size_t deepest = node.level;
    const auto rec = [&](auto& self, const Node& n) -> void {
        deepest = std::max(deepest, n.level);
        for (const auto& s : n.slots) {
            if (const auto* c = std::get_if<std::unique_ptr<Node>>(&s)) self(self, **c);
        }
        for (const auto& c : n.children) self(self, *c);
    };
    rec(rec, node);
    return deepest - node.level + 1;
}

[[nodiscard]] inline bool has_subtree(const Node& node) {
    if (node.gapped_inner()) return true;
    return std::any_of(node.slots.begin(), node.slots.end(),
                       [](const Slot& s) { return std::holds_alternative<std::unique_ptr<Node>>(s); });
}

/// Records held by `node` and its descendants, ascending, with their levels.
inline void collect_records(const Node& node, std::vector<Record>& recs, std::vector<std::size_t>* levels = nullptr) {
    auto f = [&](const Record& r, std::size_t level) {
        recs.push_back(r);
        if (levels) levels->push_back(level);
    };
    Index::visit_records(node, f);
}

[[nodiscard]] inline std::size_t subtree_slots(const Node& node) {
    std::size_t total = 0;
    const auto rec = [&](auto& self, const Node& n) -> void {
        total += n.slots.size() + n.keys.size() + n.children.size();
        for (const auto& s : n.slots) {
            if (const auto* c = std::get_if<std::unique_ptr<Node>>(&s)) self(self, **c);
        }
        for (const auto& c : n.children) self(self, *c);
    };
    rec(rec, node);
    return total;
}

}  // namespace cdfsmooth
