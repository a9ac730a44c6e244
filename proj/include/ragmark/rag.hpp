#pragma once

#include <optional>
#include <span>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "ragmark/gateway.hpp"
#include "ragmark/grader.hpp"
#include "ragmark/hnsw.hpp"
#include "ragmark/records.hpp"

namespace ragmark {

struct RetrievalConfig {
    std::size_t top_k = 3;
    std::string context_separator = "\n---\n";

    void validate() const {
        if (top_k == 0) throw ValidationError("top_k must be >= 1");
    }
};

/// Generation prompt: a system message followed by one user message built
/// from `user_template` ({context} and {question} slots).
struct GenerationPrompt {
    std::string system =
        "You answer questions using only the provided context. If the context is insufficient to answer the "
        "question, say that you cannot answer it.";
    std::string user_template = "Context:\n{context}\n\nQuestion:\n{question}";
};

struct RagSettings {
    RetrievalConfig retrieval;
    GenerationPrompt prompt;
    std::string generator_model;
    std::string embedding_model;
};

class AnswerError : public Error {
public:
    AnswerError(std::string question_id, const std::string& cause)
        : Error("question '" + question_id + "': " + cause), question_id_(std::move(question_id)) {}
    const std::string& question_id() const { return question_id_; }

private:
    std::string question_id_;
};

inline std::string build_context(std::span<const std::string> texts, std::string_view sep) {
    if (texts.empty()) throw ValidationError("cannot build a context from zero chunks");
    std::string out = texts[0];
    for (std::size_t i = 1; i < texts.size(); ++i) {
        out += sep;
        out += texts[i];
    }
    return out;
}

inline std::string build_context(std::span<const ChunkRef> chunks, std::string_view sep) {
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    return build_context(texts, sep);
}

inline ChatRequest generation_request(const RagSettings& s, std::string_view question, std::string_view context) {
    ChatRequest req;
    req.model_id = s.generator_model;
    req.temperature = 0.0;
    req.messages.push_back({"system", s.prompt.system});
    req.messages.push_back(
        {"user", instantiate(s.prompt.user_template, {{"context", std::string(context)}, {"question", std::string(question)}})});
    return req;
}

/// Embed the question, take the top-K chunks, and generate an answer from
/// the system prompt plus context and question.
inline GeneratedAnswer answer_question(const BenchmarkRecord& record, const HnswIndex& store, Gateway& gateway,
                                       const RagSettings& settings, const Clock& clock = Clock::wall()) {
    settings.retrieval.validate();
    if (store.empty()) throw AnswerError(record.question_id, "vector store is empty");
    try {
        auto emb = gateway.embed({settings.embedding_model, {record.question}});
        const auto hits = store.search(emb.vectors.at(0), settings.retrieval.top_k);

        GeneratedAnswer out;
        out.question_id = record.question_id;
        std::vector<ChunkRef> chunks;
        for (const auto& h : hits) {
            const ChunkRef& ref = store.payload(h.entry_id);
            chunks.push_back(ref);
            out.retrieved.push_back({h.entry_id, h.distance, ref.doc_id, ref.chunk_index});
        }
        const std::string context = build_context(chunks, settings.retrieval.context_separator);
        const ChatResponse resp = gateway.complete(generation_request(settings, record.question, context));
        out.answer_text = resp.text;
        out.generator_model = settings.generator_model;
        out.created_at = clock.now();
        return out;
    } catch (const AnswerError&) {
        throw;
    } catch (const std::exception& e) {
        throw AnswerError(record.question_id, e.what());
    }
}

struct BatchAnswers {
    std::vector<GeneratedAnswer> answers;                       // in record order, successes only
    std::vector<std::pair<std::string, std::string>> failures;  // (question_id, error)
};

inline BatchAnswers answer_batch(const std::vector<BenchmarkRecord>& records, const HnswIndex& store, Gateway& gateway,
                                 const RagSettings& settings, const Clock& clock = Clock::wall(),
                                 const std::function<void(std::size_t done, std::size_t total)>& progress = {}) {
    std::vector<std::optional<GeneratedAnswer>> slots(records.size());
    std::vector<std::string> errors(records.size());
    std::mutex progress_mu;
    std::size_t done = 0;
    parallel_for(records.size(), gateway.options().max_concurrency, [&](std::size_t i) {
        try {
            slots[i] = answer_question(records[i], store, gateway, settings, clock);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
        if (progress) {
            std::lock_guard lock(progress_mu);
            progress(++done, records.size());
        }
    });
    BatchAnswers out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (slots[i])
            out.answers.push_back(std::move(*slots[i]));
        else
            out.failures.emplace_back(records[i].question_id, errors[i]);
    }
    return out;
}

}  // namespace ragmark
