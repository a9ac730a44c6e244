#pragma once

#include <string>
#include <vector>

#include "ragmark/chunking.hpp"
#include "ragmark/gateway.hpp"
#include "ragmark/hnsw.hpp"

namespace ragmark {

class IngestError : public Error {
public:
    IngestError(std::string doc_id, std::size_t chunk_index, const std::string& cause)
        : Error("embedding failed for chunk " + std::to_string(chunk_index) + " of '" + doc_id + "': " + cause),
          doc_id_(std::move(doc_id)),
          chunk_index_(chunk_index) {}
    const std::string& doc_id() const { return doc_id_; }
    std::size_t chunk_index() const { return chunk_index_; }

private:
    std::string doc_id_;
    std::size_t chunk_index_;
};

struct IngestOptions {
    std::string embedding_model;
    std::size_t batch_size = 16;
};

/// Chunks every document, embeds the chunks through the gateway and inserts
/// one entry per chunk. Entry ids continue from the store's current size.
/// Embedding runs in parallel batches; inserts happen afterwards, in chunk
/// order, from the calling thread.
inline std::size_t ingest_corpus(const std::vector<SourceDocument>& docs, const ChunkingConfig& cfg, Gateway& gateway,
                                 HnswIndex& store, const IngestOptions& opts = {}) {
    cfg.validate();
    check_unique_doc_ids(docs);

    std::vector<Chunk> chunks;
    for (const auto& d : docs) {
        auto part = chunk_document(d, cfg);
        chunks.insert(chunks.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    if (chunks.empty()) return 0;

    const std::size_t batch = std::max<std::size_t>(opts.batch_size, 1);
    const std::size_t n_batches = (chunks.size() + batch - 1) / batch;
    std::vector<EmbeddingVector> vectors(chunks.size());

    auto embed_one = [&](std::size_t i) {
        try {
            auto r = gateway.embed({opts.embedding_model, {chunks[i].text}});
            vectors[i] = std::move(r.vectors.at(0));
        } catch (const std::exception& e) {
            throw IngestError(chunks[i].doc_id, chunks[i].chunk_index, e.what());
        }
    };

    parallel_for(n_batches, gateway.options().max_concurrency, [&](std::size_t b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(lo + batch, chunks.size());
        EmbedRequest req{opts.embedding_model, {}};
        for (std::size_t i = lo; i < hi; ++i) req.texts.push_back(chunks[i].text);
        try {
            auto r = gateway.embed(req);
            for (std::size_t i = lo; i < hi; ++i) vectors[i] = std::move(r.vectors[i - lo]);
        } catch (const std::exception&) {
            // Narrow the failure down to a single chunk.
            for (std::size_t i = lo; i < hi; ++i) embed_one(i);
        }
    });

    std::uint64_t next_id = store.size();
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (vectors[i].size() != store.dim())
            throw IngestError(chunks[i].doc_id, chunks[i].chunk_index,
                              "embedding has dimension " + std::to_string(vectors[i].size()) + ", index expects " +
                                  std::to_string(store.dim()));
        store.insert({next_id++, std::move(vectors[i]), {chunks[i].doc_id, chunks[i].chunk_index, chunks[i].text}});
    }
    return chunks.size();
}

}  // namespace ragmark
