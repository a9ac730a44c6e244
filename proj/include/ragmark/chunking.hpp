#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ragmark/common.hpp"

namespace ragmark {

struct SourceDocument {
    std::string doc_id;
    std::string name;
    std::string text;
};

enum class ChunkUnit { character, token };

inline std::string_view to_string(ChunkUnit u) { return u == ChunkUnit::character ? "character" : "token"; }

inline ChunkUnit parse_chunk_unit(std::string_view s) {
    if (s == "character") return ChunkUnit::character;
    if (s == "token") return ChunkUnit::token;
    throw ValidationError("unknown chunk unit '" + std::string(s) + "' (expected character or token)");
}

struct ChunkingConfig {
    std::size_t chunk_size = 1000;
    double overlap_fraction = 0.25;
    ChunkUnit unit = ChunkUnit::character;

    std::size_t overlap_length() const {
        return static_cast<std::size_t>(std::floor(overlap_fraction * static_cast<double>(chunk_size)));
    }
    std::size_t stride() const { return chunk_size - overlap_length(); }

    void validate() const {
        if (chunk_size == 0) throw ValidationError("chunk_size must be positive");
        if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
            throw ValidationError("overlap_fraction must lie in [0, 1)");
        if (overlap_length() >= chunk_size) throw ValidationError("chunk stride must be positive");
    }
};

/// A window of a document. `span_start`/`span_end` count units (characters or
/// tokens, per the config), not bytes.
struct Chunk {
    std::string doc_id;
    std::size_t chunk_index = 0;
    std::string text;
    std::size_t span_start = 0;
    std::size_t span_end = 0;

    bool operator==(const Chunk&) const = default;
};

namespace detail {

inline bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;  // stray continuation or invalid lead byte: its own unit
}

}  // namespace detail

/// Byte offsets of unit boundaries: result[i] is where unit i starts and the
/// last element is text.size(). Characters are UTF-8 code points. A token is a
/// run of non-whitespace plus the whitespace that follows it; leading
/// whitespace in the text forms a unit of its own.
inline std::vector<std::size_t> unit_boundaries(std::string_view text, ChunkUnit unit) {
    std::vector<std::size_t> bounds;
    if (unit == ChunkUnit::character) {
        bounds.reserve(text.size() + 1);
        for (std::size_t i = 0; i < text.size();) {
            bounds.push_back(i);
            const std::size_t len = detail::utf8_length(static_cast<unsigned char>(text[i]));
            std::size_t step = 1;
            while (step < len && i + step < text.size() &&
                   (static_cast<unsigned char>(text[i + step]) & 0xc0) == 0x80)
                ++step;
            i += step;
        }
    } else {
        for (std::size_t i = 0; i < text.size(); ++i) {
            const bool starts_token = !detail::is_space(static_cast<unsigned char>(text[i])) &&
                                      (i == 0 || detail::is_space(static_cast<unsigned char>(text[i - 1])));
            if (i == 0 || starts_token) bounds.push_back(i);
        }
    }
    bounds.push_back(text.size());
    return bounds;
}

inline std::size_t unit_count(std::string_view text, ChunkUnit unit) {
    return unit_boundaries(text, unit).size() - 1;
}

/// Fixed-stride windows over the document. Starts are 0, stride, 2*stride, ...
/// and emission stops at the first window that reaches the end of the text.
inline std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkingConfig& cfg) {
    cfg.validate();
    std::vector<Chunk> chunks;
    if (doc.text.empty()) return chunks;

    const auto bounds = unit_boundaries(doc.text, cfg.unit);
    const std::size_t total = bounds.size() - 1;
    const std::size_t stride = cfg.stride();

    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + cfg.chunk_size, total);
        Chunk c;
        c.doc_id = doc.doc_id;
        c.chunk_index = chunks.size();
        c.span_start = start;
        c.span_end = end;
        c.text = doc.text.substr(bounds[start], bounds[end] - bounds[start]);
        chunks.push_back(std::move(c));
        if (end == total) break;
    }
    return chunks;
}

/// Reads every `.txt` file in `dir` (non-recursive) as one document; the file
/// stem is the doc_id. Documents come back sorted by doc_id.
inline std::vector<SourceDocument> load_corpus_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("corpus directory not found: " + dir.string());
    std::vector<SourceDocument> docs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        docs.push_back({entry.path().stem().string(), entry.path().filename().string(), read_file(entry.path())});
    }
    std::sort(docs.begin(), docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    return docs;
}

inline void check_unique_doc_ids(const std::vector<SourceDocument>& docs) {
    std::unordered_set<std::string> seen;
    for (const auto& d : docs) {
        if (d.doc_id.empty()) throw ValidationError("document with empty doc_id");
        if (!seen.insert(d.doc_id).second) throw ValidationError("duplicate doc_id '" + d.doc_id + "'");
    }
}

}  // namespace ragmark
