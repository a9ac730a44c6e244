#pragma once

// Records that flow between pipeline stages, with their JSON forms.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragmark/common.hpp"
#include "ragmark/hnsw.hpp"

namespace ragmark {

using ojson = nlohmann::ordered_json;

inline constexpr std::array<std::string_view, 14> kSubjectAreas = {
    "Acceptance", "Authentication", "Authorization", "Clearing and Settlement", "Commercial", "Dispute", "Fraud",
    "Issuing",    "Master Data",    "OCT",           "Other",                   "Processing", "Product", "Token",
};

inline bool is_subject_area(std::string_view s) {
    return std::find(kSubjectAreas.begin(), kSubjectAreas.end(), s) != kSubjectAreas.end();
}

struct BenchmarkRecord {
    std::string question_id;
    std::string subject_area;
    std::string question;
    std::string label;

    bool operator==(const BenchmarkRecord&) const = default;

    void validate() const {
        if (question_id.empty()) throw ValidationError("question_id must be non-empty");
        if (!is_subject_area(subject_area)) throw ValidationError("unknown subject area '" + subject_area + "'");
        if (question.empty()) throw ValidationError("question must be non-empty");
        if (label.empty()) throw ValidationError("label must be non-empty");
    }
};

inline ojson to_json(const BenchmarkRecord& r) {
    return {{"question_id", r.question_id}, {"subject_area", r.subject_area}, {"question", r.question}, {"label", r.label}};
}

struct RetrievedChunk {
    std::uint64_t entry_id = 0;
    double distance = 0.0;
    std::string doc_id;
    std::uint64_t chunk_index = 0;

    bool operator==(const RetrievedChunk&) const = default;
};

struct GeneratedAnswer {
    std::string question_id;
    std::string answer_text;
    std::vector<RetrievedChunk> retrieved;
    std::string generator_model;
    std::string created_at;

    bool operator==(const GeneratedAnswer&) const = default;
};

inline ojson to_json(const GeneratedAnswer& a) {
    ojson hits = ojson::array();
    for (const auto& h : a.retrieved)
        hits.push_back({{"entry_id", h.entry_id}, {"distance", h.distance}, {"doc_id", h.doc_id}, {"chunk_index", h.chunk_index}});
    return {{"question_id", a.question_id},
            {"answer_text", a.answer_text},
            {"retrieved", hits},
            {"generator_model", a.generator_model},
            {"created_at", a.created_at}};
}

inline GeneratedAnswer answer_from_json(const ojson& j) {
    GeneratedAnswer a;
    a.question_id = j.at("question_id").get<std::string>();
    a.answer_text = j.at("answer_text").get<std::string>();
    for (const auto& h : j.at("retrieved"))
        a.retrieved.push_back({h.at("entry_id").get<std::uint64_t>(), h.at("distance").get<double>(),
                               h.value("doc_id", ""), h.value("chunk_index", std::uint64_t{0})});
    a.generator_model = j.at("generator_model").get<std::string>();
    a.created_at = j.value("created_at", "");
    return a;
}

struct GradeScore {
    std::string question_id;
    std::string grader_id;
    int score = 0;
    std::optional<int> confidence;
    std::string reason;
    std::string raw_response;
    std::vector<std::string> warnings;
    std::string created_at;

    bool operator==(const GradeScore&) const = default;
};

/// An item the grader could not score. Kept alongside scores, never coerced into one.
struct GradeFailure {
    std::string question_id;
    std::string grader_id;
    std::string error;
    std::string raw_response;
    std::string created_at;

    bool operator==(const GradeFailure&) const = default;
};

using GradeRecord = std::variant<GradeScore, GradeFailure>;

inline const std::string& question_id_of(const GradeRecord& r) {
    return std::visit([](const auto& g) -> const std::string& { return g.question_id; }, r);
}

inline const std::string& grader_id_of(const GradeRecord& r) {
    return std::visit([](const auto& g) -> const std::string& { return g.grader_id; }, r);
}

/// The single validation path for grades, whether they come from an LLM or a person.
inline void validate_grade(const GradeScore& g) {
    if (g.question_id.empty()) throw ValidationError("grade has empty question_id");
    if (g.grader_id.empty()) throw ValidationError("grade has empty grader_id");
    if (g.score < 1 || g.score > 5) throw ValidationError("score " + std::to_string(g.score) + " outside 1..5");
    if (g.confidence && (*g.confidence < 0 || *g.confidence > 100))
        throw ValidationError("confidence " + std::to_string(*g.confidence) + " outside 0..100");
}

inline ojson to_json(const GradeScore& g) {
    return {{"status", "ok"},
            {"question_id", g.question_id},
            {"grader_id", g.grader_id},
            {"score", g.score},
            {"confidence", g.confidence ? ojson(*g.confidence) : ojson(nullptr)},
            {"reason", g.reason},
            {"warnings", g.warnings},
            {"raw_response", g.raw_response},
            {"created_at", g.created_at}};
}

inline ojson to_json(const GradeFailure& f) {
    return {{"status", "failed"},
            {"question_id", f.question_id},
            {"grader_id", f.grader_id},
            {"error", f.error},
            {"raw_response", f.raw_response},
            {"created_at", f.created_at}};
}

inline ojson to_json(const GradeRecord& r) {
    return std::visit([](const auto& g) { return to_json(g); }, r);
}

inline GradeRecord grade_from_json(const ojson& j) {
    const std::string status = j.value("status", "ok");
    if (status == "failed") {
        return GradeFailure{j.at("question_id").get<std::string>(), j.at("grader_id").get<std::string>(),
                            j.value("error", ""), j.value("raw_response", ""), j.value("created_at", "")};
    }
    if (status != "ok") throw ValidationError("unknown grade status '" + status + "'");
    GradeScore g;
    g.question_id = j.at("question_id").get<std::string>();
    g.grader_id = j.at("grader_id").get<std::string>();
    g.score = j.at("score").get<int>();
    if (j.contains("confidence") && !j["confidence"].is_null()) g.confidence = j["confidence"].get<int>();
    g.reason = j.value("reason", "");
    if (j.contains("warnings")) g.warnings = j["warnings"].get<std::vector<std::string>>();
    g.raw_response = j.value("raw_response", "");
    g.created_at = j.value("created_at", "");
    validate_grade(g);
    return g;
}

}  // namespace ragmark
