#pragma once

// Hierarchical Navigable Small World graph over squared-L2 distance.
//
// Layer 0 holds every node; each node's top layer is drawn from a geometric
// distribution scaled by `level_scale`. Search descends greedily from the entry
// point's layer to layer 1, then runs a beam search of width ef at layer 0.
// Neighbor lists are chosen with the diversity heuristic: a candidate is kept
// only if it is closer to the base node than to every neighbor kept so far.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragmark/common.hpp"

namespace ragmark {

using EmbeddingVector = std::vector<float>;

/// Sum of squared component differences.
inline double squared_l2(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw ValidationError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return sum;
}

inline void check_finite(std::span<const float> v) {
    for (float x : v)
        if (!std::isfinite(x)) throw ValidationError("embedding contains a non-finite value");
}

/// What an index entry points back to: the chunk it was embedded from.
struct ChunkRef {
    std::string doc_id;
    std::uint64_t chunk_index = 0;
    std::string text;

    bool operator==(const ChunkRef&) const = default;
};

struct VectorEntry {
    std::uint64_t entry_id = 0;
    EmbeddingVector vector;
    ChunkRef payload;
};

struct SearchHit {
    std::uint64_t entry_id = 0;
    double distance = 0.0;

    bool operator==(const SearchHit&) const = default;
};

struct HnswParams {
    std::uint32_t max_neighbors = 16;
    std::uint32_t ef_construction = 200;
    std::uint32_t ef_search = 64;
    double level_scale = 0.0;  // 0 selects 1/ln(max_neighbors)
    std::uint64_t rng_seed = 42;

    double effective_level_scale() const {
        return level_scale > 0.0 ? level_scale : 1.0 / std::log(static_cast<double>(max_neighbors));
    }

    void validate() const {
        if (max_neighbors < 2) throw ValidationError("max_neighbors must be at least 2");
        if (ef_search == 0) throw ValidationError("ef_search must be positive");
        if (ef_construction < max_neighbors) throw ValidationError("ef_construction must be >= max_neighbors");
        if (level_scale < 0.0 || !std::isfinite(level_scale)) throw ValidationError("level_scale must be finite and >= 0");
    }
};

class HnswIndex {
public:
    static constexpr char kMagic[8] = {'R', 'G', 'M', 'K', 'H', 'N', 'S', 'W'};
    static constexpr std::uint32_t kFormatVersion = 1;

    HnswIndex(std::size_t dim, HnswParams params = {}) : dim_(dim), params_(params), rng_(params.rng_seed) {
        if (dim_ == 0) throw ValidationError("index dimension must be positive");
        params_.validate();
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    const HnswParams& params() const { return params_; }
    bool frozen() const { return frozen_; }

    /// After freeze() the index rejects inserts and is safe for concurrent searches.
    void freeze() { frozen_ = true; }

    void insert(VectorEntry entry) {
        if (frozen_) throw ValidationError("index is frozen");
        if (entry.vector.size() != dim_)
            throw ValidationError("dimension mismatch: entry has " + std::to_string(entry.vector.size()) +
                                  ", index has " + std::to_string(dim_));
        check_finite(entry.vector);
        if (id_to_node_.count(entry.entry_id))
            throw ValidationError("duplicate entry_id " + std::to_string(entry.entry_id));

        const auto node = static_cast<std::uint32_t>(ids_.size());
        const int level = draw_level();
        ids_.push_back(entry.entry_id);
        data_.insert(data_.end(), entry.vector.begin(), entry.vector.end());
        payloads_.push_back(std::move(entry.payload));
        links_.emplace_back(static_cast<std::size_t>(level) + 1);
        id_to_node_.emplace(ids_.back(), node);

        if (entry_point_ < 0) {
            entry_point_ = node;
            max_level_ = level;
            return;
        }

        const auto q = vec(node);
        std::uint32_t cur = static_cast<std::uint32_t>(entry_point_);
        for (int l = max_level_; l > level; --l) cur = greedy_closest(q, cur, l);

        std::vector<std::uint32_t> seeds{cur};
        for (int l = std::min(level, max_level_); l >= 0; --l) {
            auto found = search_layer(q, seeds, params_.ef_construction, l);
            auto chosen = select_neighbors(node, found, max_links(l));
            links_[node][l] = chosen;
            const std::size_t cap = max_links(l);
            for (std::uint32_t nb : chosen) {
                auto& nl = links_[nb][l];
                nl.push_back(node);
                if (nl.size() > cap) shrink(nb, l, cap);
            }
            seeds.clear();
            for (const auto& c : found) seeds.push_back(c.node);
        }
        if (level > max_level_) {
            max_level_ = level;
            entry_point_ = node;
        }
    }

    /// Up to k nearest entries, ascending by distance, ties by entry_id.
    std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const {
        if (k == 0) throw ValidationError("k must be positive");
        if (empty()) throw ValidationError("search on an empty index");
        if (query.size() != dim_)
            throw ValidationError("dimension mismatch: query has " + std::to_string(query.size()) + ", index has " +
                                  std::to_string(dim_));

        std::uint32_t cur = static_cast<std::uint32_t>(entry_point_);
        for (int l = max_level_; l > 0; --l) cur = greedy_closest(query, cur, l);
        const std::size_t ef = std::max<std::size_t>(params_.ef_search, k);
        auto found = search_layer(query, {cur}, ef, 0);
        if (found.size() > k) found.resize(k);
        std::vector<SearchHit> hits;
        hits.reserve(found.size());
        for (const auto& c : found) hits.push_back({ids_[c.node], c.dist});
        return hits;
    }

    bool contains(std::uint64_t entry_id) const { return id_to_node_.count(entry_id) != 0; }

    const ChunkRef& payload(std::uint64_t entry_id) const { return payloads_.at(node_of(entry_id)); }

    std::span<const float> vector(std::uint64_t entry_id) const { return vec(node_of(entry_id)); }

    /// Entry ids in insertion order.
    const std::vector<std::uint64_t>& entry_ids() const { return ids_; }

    /// Hash over levels, adjacency lists and the entry point. Two indexes built
    /// from the same inserts with the same seed hash equal.
    std::uint64_t structure_hash() const {
        std::uint64_t h = fnv1a64("hnsw");
        auto mix = [&h](std::uint64_t v) {
            char buf[8];
            std::memcpy(buf, &v, 8);
            h = fnv1a64(std::string_view(buf, 8), h);
        };
        mix(static_cast<std::uint64_t>(entry_point_));
        mix(static_cast<std::uint64_t>(max_level_));
        for (std::size_t n = 0; n < ids_.size(); ++n) {
            mix(ids_[n]);
            mix(links_[n].size());
            for (const auto& layer : links_[n]) {
                mix(layer.size());
                for (auto nb : layer) mix(ids_[nb]);
            }
        }
        return h;
    }

    void save(std::ostream& out) const;
    std::string serialize() const {
        std::ostringstream ss(std::ios::binary);
        save(ss);
        return ss.str();
    }
    void save_file(const fs::path& path) const { write_file_atomic(path, serialize()); }

    static HnswIndex load(std::istream& in);
    static HnswIndex load_file(const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open index snapshot " + path.string());
        return load(in);
    }

private:
    struct Candidate {
        double dist;
        std::uint32_t node;
        std::uint64_t id;
        bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && id < o.id); }
        bool operator>(const Candidate& o) const { return o < *this; }
    };

    std::span<const float> vec(std::uint32_t node) const {
        return {data_.data() + static_cast<std::size_t>(node) * dim_, dim_};
    }

    std::uint32_t node_of(std::uint64_t entry_id) const {
        auto it = id_to_node_.find(entry_id);
        if (it == id_to_node_.end()) throw ValidationError("unknown entry_id " + std::to_string(entry_id));
        return it->second;
    }

    std::size_t max_links(int level) const { return level == 0 ? 2u * params_.max_neighbors : params_.max_neighbors; }

    int draw_level() {
        ++draws_;
        double u = unit_double(rng_());
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        const double lvl = std::floor(-std::log(u) * params_.effective_level_scale());
        return static_cast<int>(std::min(lvl, 30.0));
    }

    Candidate make(std::span<const float> q, std::uint32_t node) const {
        return {squared_l2(q, vec(node)), node, ids_[node]};
    }

    std::uint32_t greedy_closest(std::span<const float> q, std::uint32_t start, int level) const {
        Candidate best = make(q, start);
        for (bool improved = true; improved;) {
            improved = false;
            for (auto nb : links_[best.node][level]) {
                const Candidate c = make(q, nb);
                if (c < best) {
                    best = c;
                    improved = true;
                }
            }
        }
        return best.node;
    }

    // Beam search on one layer; result sorted ascending.
    std::vector<Candidate> search_layer(std::span<const float> q, const std::vector<std::uint32_t>& seeds,
                                        std::size_t ef, int level) const {
        std::vector<char> visited(ids_.size(), 0);
        std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
        std::priority_queue<Candidate> best;
        for (auto s : seeds) {
            if (visited[s]) continue;
            visited[s] = 1;
            const Candidate c = make(q, s);
            frontier.push(c);
            best.push(c);
            if (best.size() > ef) best.pop();
        }
        while (!frontier.empty()) {
            const Candidate c = frontier.top();
            frontier.pop();
            if (best.size() >= ef && best.top() < c) break;
            for (auto nb : links_[c.node][level]) {
                if (visited[nb]) continue;
                visited[nb] = 1;
                const Candidate n = make(q, nb);
                if (best.size() < ef || n < best.top()) {
                    frontier.push(n);
                    best.push(n);
                    if (best.size() > ef) best.pop();
                }
            }
        }
        std::vector<Candidate> out;
        out.reserve(best.size());
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    // Diversity heuristic over candidates sorted ascending by distance to `base`.
    std::vector<std::uint32_t> select_neighbors(std::uint32_t base, const std::vector<Candidate>& sorted,
                                                std::size_t limit) const {
        std::vector<std::uint32_t> kept;
        for (const auto& c : sorted) {
            if (kept.size() >= limit) break;
            if (c.node == base) continue;
            bool diverse = true;
            for (auto k : kept) {
                if (squared_l2(vec(c.node), vec(k)) < c.dist) {
                    diverse = false;
                    break;
                }
            }
            if (diverse) kept.push_back(c.node);
        }
        // Fill remaining slots with the nearest pruned candidates.
        for (const auto& c : sorted) {
            if (kept.size() >= limit) break;
            if (c.node == base || std::find(kept.begin(), kept.end(), c.node) != kept.end()) continue;
            kept.push_back(c.node);
        }
        return kept;
    }

    void shrink(std::uint32_t node, int level, std::size_t cap) {
        auto& nl = links_[node][level];
        std::vector<Candidate> cands;
        cands.reserve(nl.size());
        for (auto nb : nl) cands.push_back(make(vec(node), nb));
        std::sort(cands.begin(), cands.end());
        nl = select_neighbors(node, cands, cap);
    }

    std::size_t dim_;
    HnswParams params_;
    std::mt19937_64 rng_;
    std::uint64_t draws_ = 0;
    std::vector<std::uint64_t> ids_;
    std::vector<float> data_;
    std::vector<ChunkRef> payloads_;
    // links_[node][level] -> neighbor nodes
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;
    std::unordered_map<std::uint64_t, std::uint32_t> id_to_node_;
    std::int64_t entry_point_ = -1;
    int max_level_ = -1;
    bool frozen_ = false;
};

// Snapshot layout, all integers little-endian:
//   "RGMKHNSW" u32 version u32 dim
//   u32 max_neighbors u32 ef_construction u32 ef_search f64 level_scale u64 rng_seed
//   u64 entry_count i64 entry_point i32 max_level u64 level_draws
//   per entry: u64 entry_id, u32 top_level, f32[dim], str doc_id, u64 chunk_index, str text,
//              then for each level 0..top_level: u32 n, u32 node[n]
//   u64 FNV-1a checksum of every preceding byte
// where str is u32 byte length followed by the bytes.
namespace detail {

class SnapshotWriter {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) {
        std::uint64_t b;
        std::memcpy(&b, &v, 8);
        u64(b);
    }
    void f32(float v) {
        std::uint32_t b;
        std::memcpy(&b, &v, 4);
        u32(b);
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(std::string_view s) { buf_.append(s); }
    std::string finish() {
        const std::uint64_t sum = fnv1a64(buf_);
        u64(sum);
        return std::move(buf_);
    }

private:
    void put(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class SnapshotReader {
public:
    explicit SnapshotReader(std::string data) : data_(std::move(data)) {}
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() {
        const std::uint64_t b = u64();
        double v;
        std::memcpy(&v, &b, 8);
        return v;
    }
    float f32() {
        const std::uint32_t b = u32();
        float v;
        std::memcpy(&v, &b, 4);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        std::string_view v(data_.data() + pos_, n);
        pos_ += n;
        return v;
    }
    std::size_t pos() const { return pos_; }
    std::size_t size() const { return data_.size(); }
    const std::string& data() const { return data_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ValidationError("index snapshot truncated");
    }
    std::uint64_t get(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void HnswIndex::save(std::ostream& out) const {
    detail::SnapshotWriter w;
    w.raw(std::string_view(kMagic, 8));
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(dim_));
    w.u32(params_.max_neighbors);
    w.u32(params_.ef_construction);
    w.u32(params_.ef_search);
    w.f64(params_.level_scale);
    w.u64(params_.rng_seed);
    w.u64(ids_.size());
    w.u64(static_cast<std::uint64_t>(entry_point_));
    w.u32(static_cast<std::uint32_t>(max_level_));
    w.u64(draws_);
    for (std::size_t n = 0; n < ids_.size(); ++n) {
        w.u64(ids_[n]);
        w.u32(static_cast<std::uint32_t>(links_[n].size() - 1));
        for (float x : vec(static_cast<std::uint32_t>(n))) w.f32(x);
        w.str(payloads_[n].doc_id);
        w.u64(payloads_[n].chunk_index);
        w.str(payloads_[n].text);
        for (const auto& layer : links_[n]) {
            w.u32(static_cast<std::uint32_t>(layer.size()));
            for (auto nb : layer) w.u32(nb);
        }
    }
    const std::string bytes = w.finish();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed to write index snapshot");
}

inline HnswIndex HnswIndex::load(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    detail::SnapshotReader r(ss.str());
    if (r.size() < 16 || std::memcmp(r.data().data(), kMagic, 8) != 0)
        throw ValidationError("not an index snapshot (bad magic)");
    {
        const std::string_view body(r.data().data(), r.size() - 8);
        detail::SnapshotReader tail(r.data().substr(r.size() - 8));
        if (fnv1a64(body) != tail.u64()) throw ValidationError("index snapshot checksum mismatch");
    }
    r.raw(8);
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw ValidationError("unsupported index snapshot version " + std::to_string(version));
    const std::uint32_t dim = r.u32();
    HnswParams p;
    p.max_neighbors = r.u32();
    p.ef_construction = r.u32();
    p.ef_search = r.u32();
    p.level_scale = r.f64();
    p.rng_seed = r.u64();
    HnswIndex idx(dim, p);
    const std::uint64_t count = r.u64();
    idx.entry_point_ = static_cast<std::int64_t>(r.u64());
    idx.max_level_ = static_cast<int>(r.u32());
    idx.draws_ = r.u64();
    idx.rng_.discard(idx.draws_);
    for (std::uint64_t n = 0; n < count; ++n) {
        const std::uint64_t id = r.u64();
        const std::uint32_t top = r.u32();
        idx.ids_.push_back(id);
        for (std::size_t i = 0; i < dim; ++i) idx.data_.push_back(r.f32());
        ChunkRef ref;
        ref.doc_id = r.str();
        ref.chunk_index = r.u64();
        ref.text = r.str();
        idx.payloads_.push_back(std::move(ref));
        auto& layers = idx.links_.emplace_back(static_cast<std::size_t>(top) + 1);
        for (auto& layer : layers) {
            const std::uint32_t m = r.u32();
            for (std::uint32_t j = 0; j < m; ++j) {
                const std::uint32_t nb = r.u32();
                if (nb >= count) throw ValidationError("index snapshot has an out-of-range link");
                layer.push_back(nb);
            }
        }
        if (!idx.id_to_node_.emplace(id, static_cast<std::uint32_t>(n)).second)
            throw ValidationError("index snapshot has duplicate entry_id " + std::to_string(id));
    }
    if (r.pos() + 8 != r.size()) throw ValidationError("index snapshot has trailing bytes");
    if (count > 0 && (idx.entry_point_ < 0 || static_cast<std::uint64_t>(idx.entry_point_) >= count))
        throw ValidationError("index snapshot has an invalid entry point");
    return idx;
}

}  // namespace ragmark
