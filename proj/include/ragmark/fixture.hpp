#pragma once

// Synthetic, schema-compatible stand-ins for a proprietary benchmark: a
// question set spread over every subject area, a matching text corpus, a
// deterministic simulated model, and synthetic human grades.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "ragmark/chunking.hpp"
#include "ragmark/gateway.hpp"
#include "ragmark/grader.hpp"
#include "ragmark/records.hpp"

namespace ragmark {

namespace detail {

struct AreaVocabulary {
    std::string_view area;
    std::array<std::string_view, 4> nouns;
};

inline constexpr std::array<AreaVocabulary, 14> kVocabulary = {{
    {"Acceptance", {"merchant category code", "terminal capability", "acceptance channel", "card-present flag"}},
    {"Authentication", {"cardholder verification method", "3-D Secure result", "PIN verification flag", "CVV2 match code"}},
    {"Authorization", {"authorization response code", "approval code", "partial approval indicator", "stand-in flag"}},
    {"Clearing and Settlement", {"settlement date", "clearing record", "interchange fee", "settlement currency"}},
    {"Commercial", {"purchasing card level", "invoice line detail", "corporate account", "tax amount field"}},
    {"Dispute", {"chargeback reason code", "dispute stage", "representment record", "retrieval request"}},
    {"Fraud", {"fraud report date", "fraud type code", "compromised account flag", "fraud posted date"}},
    {"Issuing", {"issuer country", "account range", "product platform", "issuer identifier"}},
    {"Master Data", {"merchant profile", "acquirer reference table", "country code table", "currency code table"}},
    {"OCT", {"original credit transaction", "funds disbursement code", "recipient account", "payout reference"}},
    {"Other", {"data retention period", "field naming convention", "sample extract", "data dictionary entry"}},
    {"Processing", {"processing code", "message type indicator", "transaction timestamp", "routing indicator"}},
    {"Product", {"card product code", "product tier", "loyalty program flag", "product launch date"}},
    {"Token", {"token requestor id", "token assurance level", "device binding status", "token lifecycle event"}},
}};

inline constexpr std::array<std::string_view, 6> kQuestionShapes = {
    "Where can I find the {noun} for {area} transactions?",
    "What does the {noun} mean when it is blank in the {area} extract?",
    "Why would the {noun} differ between two {area} records for the same transaction?",
    "Which table carries the {noun} used in {area} reporting?",
    "How is the {noun} populated for {area} data after a reversal?",
    "Can the {noun} be used to join {area} records to authorization data?",
};

inline constexpr std::array<std::string_view, 6> kLabelShapes = {
    "The {noun} is carried in the detail table {table}; filter on the {area} record type to locate it.",
    "A blank {noun} means the value was not supplied by the originating system and defaults downstream in {table}.",
    "The {noun} can differ because each clearing record in {table} is reported separately, as with split shipments.",
    "The {noun} used in {area} reporting lives in {table} and is refreshed daily.",
    "After a reversal the {noun} is copied from the original record in {table}; it is not recomputed.",
    "Yes, the {noun} in {table} ties multiple clearing records to one authorization.",
};

inline std::string fill(std::string_view shape, std::string_view noun, std::string_view area, std::string_view table) {
    return instantiate(shape, {{"noun", std::string(noun)}, {"area", std::string(area)}, {"table", std::string(table)}});
}

inline std::string table_name(std::string_view area, std::size_t n) {
    std::string t;
    for (char ch : area)
        if (ch != ' ') t += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return t + "_detail_" + std::to_string(n % 7);
}

}  // namespace detail

/// `count` records; record i is in subject area i mod 14, ids Q001, Q002, ...
inline std::vector<BenchmarkRecord> synthetic_benchmark(std::size_t count, std::uint64_t seed) {
    std::vector<BenchmarkRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& voc = detail::kVocabulary[i % detail::kVocabulary.size()];
        const std::uint64_t h = splitmix64(seed ^ (i * 0x9e37ULL));
        const std::size_t k = i / detail::kVocabulary.size();
        const auto noun = voc.nouns[k % voc.nouns.size()];
        const auto shape = (k / voc.nouns.size() * 2 + (h & 1)) % detail::kQuestionShapes.size();
        const std::string table = detail::table_name(voc.area, h >> 16);
        char id[32];
        std::snprintf(id, sizeof(id), "Q%03zu", i + 1);
        out.push_back({id, std::string(voc.area), detail::fill(detail::kQuestionShapes[shape], noun, voc.area, table),
                       detail::fill(detail::kLabelShapes[shape], noun, voc.area, table)});
    }
    return out;
}

/// `count` documents, each a few thousand characters of reference prose that
/// mentions the benchmark's vocabulary.
inline std::vector<SourceDocument> synthetic_corpus(std::size_t count, std::uint64_t seed) {
    std::vector<SourceDocument> docs;
    for (std::size_t d = 0; d < count; ++d) {
        std::mt19937_64 rng(splitmix64(seed + d));
        std::string text;
        const std::size_t paragraphs = 6 + rng() % 6;
        for (std::size_t p = 0; p < paragraphs; ++p) {
            const auto& voc = detail::kVocabulary[(d + p) % detail::kVocabulary.size()];
            text += std::string(voc.area) + " reference, section " + std::to_string(p + 1) + ".\n";
            for (std::size_t s = 0; s < 5; ++s) {
                const auto shape = rng() % detail::kLabelShapes.size();
                const auto noun = voc.nouns[rng() % voc.nouns.size()];
                text += detail::fill(detail::kLabelShapes[shape], noun, voc.area, detail::table_name(voc.area, rng()));
                text += s + 1 < 5 ? " " : "\n\n";
            }
        }
        char id[32];
        std::snprintf(id, sizeof(id), "doc%02zu", d + 1);
        docs.push_back({id, std::string(id) + ".txt", std::move(text)});
    }
    return docs;
}

/// Deterministic stand-in for a chat model. Grading prompts get a well-formed
/// verdict in the format the prompt asks for; anything else gets an answer
/// lifted from the supplied context, or an admission that it cannot answer.
class SimulatedBackend : public Backend {
public:
    SimulatedBackend(std::size_t embed_dim, std::uint64_t embed_seed = 0)
        : embed_dim_(embed_dim), embed_seed_(embed_seed) {}

    ChatResponse complete(const ChatRequest& req) override {
        const std::string& prompt = req.messages.back().content;
        const std::uint64_t h = splitmix64(fnv1a64(prompt) ^ fnv1a64(req.model_id));
        ChatResponse r;
        r.model_id = req.model_id;
        const bool legacy = prompt.find("[The Start of Grading Rubric]") != std::string::npos;
        if (legacy || prompt.find("[Start of Grading Rubric]") != std::string::npos) {
            r.text = judge(h, legacy, prompt.find("Confidence: [[") != std::string::npos);
        } else {
            r.text = answer(h, prompt);
        }
        r.prompt_units = static_cast<std::int64_t>(prompt.size() / 4);
        r.output_units = static_cast<std::int64_t>(r.text.size() / 4);
        return r;
    }

    EmbedResponse embed(const EmbedRequest& req) override {
        EmbedResponse out;
        for (const auto& t : req.texts) out.vectors.push_back(hash_embedding(t, embed_dim_, embed_seed_));
        return out;
    }

    std::string name() const override { return "simulated"; }

    /// Score for a hash draw, skewed towards rejection.
    static int simulated_score(std::uint64_t h) {
        const std::uint64_t bucket = h % 100;
        if (bucket < 30) return 1;
        if (bucket < 55) return 2;
        if (bucket < 72) return 3;
        if (bucket < 92) return 4;
        return 5;
    }

private:
    static std::string judge(std::uint64_t h, bool legacy, bool with_confidence) {
        static constexpr std::array<std::string_view, 5> reasons = {
            "The RAG's response does not align with the Label and introduces unsupported details.",
            "The RAG's response admits the context is insufficient and does not answer the question.",
            "The RAG's response is relevant but misses the specific table named in the Label.",
            "The RAG's response is acceptable and covers the main point of the Label.",
            "The RAG's response is fully accurate and adds useful supporting detail.",
        };
        const int score = simulated_score(h);
        const std::string reason(reasons[static_cast<std::size_t>(score - 1)]);
        if (legacy) return "Rating: [[" + std::to_string(score) + "]], Reason: [[" + reason + "]]";
        std::string out = "Score: [[" + std::to_string(score) + "]], ";
        if (with_confidence) out += "Confidence: [[" + std::to_string(50 + 10 * ((h >> 20) % 6)) + "]], ";
        return out + "Reason: [[" + reason + "]]";
    }

    static std::string answer(std::uint64_t h, const std::string& prompt) {
        if (h % 5 == 0) return "Based on the context provided, I cannot answer this question.";
        std::string context = prompt;
        if (const auto p = context.find("Context:\n"); p != std::string::npos) context = context.substr(p + 9);
        const auto stop = context.find_first_of(".\n");
        std::string first = context.substr(0, std::min<std::size_t>(stop == std::string::npos ? context.size() : stop, 240));
        return "Based on the context provided, " + first + ".";
    }

    std::size_t embed_dim_;
    std::uint64_t embed_seed_;
};

/// Synthetic human grades: graders `first_phase` score items 1..split, and
/// graders `second_phase` score the rest.
inline std::vector<GradeRecord> synthetic_human_grades(const std::vector<BenchmarkRecord>& records,
                                                       const std::vector<std::string>& first_phase,
                                                       const std::vector<std::string>& second_phase, std::size_t split,
                                                       std::uint64_t seed, const Clock& clock) {
    std::vector<GradeRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& graders = i < split ? first_phase : second_phase;
        for (const auto& g : graders) {
            const std::uint64_t h = splitmix64(seed ^ fnv1a64(g) ^ fnv1a64(records[i].question_id));
            const int score = SimulatedBackend::simulated_score(h);
            out.push_back(GradeScore{records[i].question_id, g, score, std::nullopt, "", "", {}, clock.now()});
        }
    }
    return out;
}

}  // namespace ragmark
