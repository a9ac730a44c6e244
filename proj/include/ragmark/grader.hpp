#pragma once

#include <array>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "ragmark/gateway.hpp"
#include "ragmark/records.hpp"

namespace ragmark {

class GradeParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct Rubric {
    std::string name;
    std::array<std::string, 5> levels;  // levels[0] describes score 1

    void validate() const {
        for (std::size_t i = 0; i < levels.size(); ++i)
            if (levels[i].empty()) throw ValidationError("rubric level " + std::to_string(i + 1) + " has no description");
    }

    /// One "N: description" line per level, ascending.
    std::string render() const {
        std::string out;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (i) out += '\n';
            out += std::to_string(i + 1) + ": " + levels[i];
        }
        return out;
    }
};

inline Rubric default_rubric() {
    return {"default",
            {"The response is not aligned with the Label or is off-topic; includes hallucination.",
             "The response admits it cannot provide an answer or lacks context; honest.",
             "The response is relevant but contains notable discrepancies or inaccuracies.",
             "The response is acceptable, sufficient but not exhaustive.",
             "The response is fully accurate and comprehensive, based on the Label."}};
}

/// The first-draft rubric whose looser wording let a judge drift from the Label.
inline Rubric early_rubric() {
    return {"early",
            {"completely incorrect, hallucination", "admits it cannot answer or lack of context, honest",
             "pertinent but contains noticeable errors or inaccuracies",
             "acceptable answer, adequate but not comprehensive", "fully accurate and exhaustive"}};
}

inline Rubric rubric_by_name(std::string_view name) {
    if (name == "default") return default_rubric();
    if (name == "early") return early_rubric();
    throw ValidationError("unknown rubric '" + std::string(name) + "' (expected default or early)");
}

enum class GradeMode { plain, confidence, legacy };

inline std::string_view to_string(GradeMode m) {
    switch (m) {
        case GradeMode::plain: return "plain";
        case GradeMode::confidence: return "confidence";
        case GradeMode::legacy: return "legacy";
    }
    return "plain";
}

inline GradeMode parse_grade_mode(std::string_view s) {
    if (s == "plain") return GradeMode::plain;
    if (s == "confidence") return GradeMode::confidence;
    if (s == "legacy") return GradeMode::legacy;
    throw ValidationError("unknown grading mode '" + std::string(s) + "' (expected plain, confidence or legacy)");
}

namespace templates {

inline constexpr std::string_view kItemSections =
    "[Start of User Question]\n"
    "{question}\n"
    "[End of User Question]\n"
    "[Start of Label]\n"
    "{label}\n"
    "[End of Label]\n"
    "[Start of RAG’s Application Response]\n"
    "{answer}\n"
    "[End of RAG’s Application Response]";

inline constexpr std::string_view kPlainHead =
    "You are an AI assistant. In the following task, you are given a Question,\n"
    "a RAG application's response, and a Ground-truth Answer referred to as 'Label'.\n"
    "Assess how well the RAG application's response aligns with the Label,\n"
    "using the grading rubric below:\n"
    "\n"
    "[Start of Grading Rubric]\n"
    "{rubric}\n"
    "[End of Grading Rubric]\n"
    "\n";

inline constexpr std::string_view kPlainFormat =
    "Treat the Label as the definitive answer. Present your final score in the format: \"[[score]]\",\n"
    "followed by your justification. Example:\n"
    "Score: [[3]], Reason: [[The RAG's response partially aligns with the Label\n"
    "but with some discrepancies]].\n"
    "\n";

inline constexpr std::string_view kConfidenceFormat =
    "Treat the Label as the definitive answer. Present your final score in the format: \"[[score]]\",\n"
    "followed by your confidence level of the grading in the range of 0 to 100,\n"
    "with 100 being very confident and 0 being not sure about your grading at all.\n"
    "At the end, disclose your justification. Example:\n"
    "Score: [[3]], Confidence: [[50]], Reason: [[The RAG's response partially aligns with the Label but with some "
    "discrepancies]].\n"
    "\n";

inline constexpr std::string_view kLegacyHead =
    "Please act as an impartial judge and evaluate the quality of the answer provided by a RAG application.\n"
    "Your evaluation should consider correctness, completeness, and honesty.\n"
    "You will be given a reference answer, and the RAG application's answer,\n"
    "then grade the quality of the RAG application's answer based on rubric below:\n"
    "\n"
    "[The Start of Grading Rubric]\n"
    "{rubric}\n"
    "[The End of Grading Rubric]\n"
    "\n"
    "Be as objective as possible. Output your final verdict by strictly following this format: \"[[rating]]\",\n"
    "then providing your explanation.\n"
    "For example: \"Rating: [[5]], Reason: [[The answer is correct and comprehensive]].\n"
    "\n";

}  // namespace templates

/// Raw template text for a mode, with {rubric} {question} {label} {answer} slots.
inline std::string grading_template(GradeMode mode) {
    switch (mode) {
        case GradeMode::plain:
            return std::string(templates::kPlainHead) + std::string(templates::kPlainFormat) +
                   std::string(templates::kItemSections);
        case GradeMode::confidence:
            return std::string(templates::kPlainHead) + std::string(templates::kConfidenceFormat) +
                   std::string(templates::kItemSections);
        case GradeMode::legacy:
            return std::string(templates::kLegacyHead) + std::string(templates::kItemSections);
    }
    return {};
}

/// Single-pass `{name}` substitution. Text pulled in from a value is never
/// rescanned, so braces inside questions or answers survive untouched.
inline std::string instantiate(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        bool replaced = false;
        if (tmpl[i] == '{') {
            for (const auto& [key, val] : values) {
                if (tmpl.compare(i + 1, key.size(), key) == 0 && i + 1 + key.size() < tmpl.size() &&
                    tmpl[i + 1 + key.size()] == '}') {
                    out += val;
                    i += key.size() + 2;
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out += tmpl[i++];
    }
    return out;
}

inline std::string render_grading_prompt(std::string_view question, std::string_view label, std::string_view answer,
                                         const Rubric& rubric, GradeMode mode) {
    if (label.empty()) throw ValidationError("cannot grade against an empty label");
    if (question.empty()) throw ValidationError("cannot grade an empty question");
    if (answer.empty()) throw ValidationError("cannot grade an empty answer");
    rubric.validate();
    return instantiate(grading_template(mode), {{"rubric", rubric.render()},
                                                {"question", std::string(question)},
                                                {"label", std::string(label)},
                                                {"answer", std::string(answer)}});
}

struct ParsedGrade {
    int score = 0;
    std::optional<int> confidence;
    std::string reason;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::string_view trim_view(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct MarkerHit {
    std::size_t begin;    // start of the marker word
    std::size_t content;  // first byte after "[["
};

inline const std::regex& marker_regex(std::string_view word) {
    auto make = [](const char* w) { return std::regex(std::string("\\b") + w + R"(\**\s*:\s*\**\s*\[\[)"); };
    static const std::regex score = make("Score");
    static const std::regex rating = make("Rating");
    static const std::regex confidence = make("Confidence");
    static const std::regex reason = make("Reason");
    if (word == "Score") return score;
    if (word == "Rating") return rating;
    if (word == "Confidence") return confidence;
    return reason;
}

// "Score: [[", also tolerating markdown emphasis such as "**Score**: [[".
inline std::optional<MarkerHit> find_marker(const std::string& text, std::string_view word, std::size_t from,
                                            std::size_t until = std::string::npos) {
    const std::regex& re = marker_regex(word);
    const auto last = until == std::string::npos ? text.end() : text.begin() + static_cast<std::ptrdiff_t>(until);
    std::smatch m;
    if (from > text.size() || !std::regex_search(text.begin() + static_cast<std::ptrdiff_t>(from), last, m, re))
        return std::nullopt;
    const auto begin = from + static_cast<std::size_t>(m.position(0));
    return MarkerHit{begin, begin + static_cast<std::size_t>(m.length(0))};
}

// Integer between "[[" and "]]"; returns the value and the index past "]]".
inline std::pair<int, std::size_t> read_bracketed_int(const std::string& text, std::size_t content, std::string_view what,
                                                      int lo, int hi) {
    const auto close = text.find("]]", content);
    if (close == std::string::npos) throw GradeParseError("unterminated [[ after " + std::string(what));
    const auto body = trim_view(std::string_view(text).substr(content, close - content));
    if (body.empty() || body.size() > 9 ||
        !std::all_of(body.begin(), body.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw GradeParseError(std::string(what) + " is not an integer: '" + std::string(body) + "'");
    const int v = std::stoi(std::string(body));
    if (v < lo || v > hi)
        throw GradeParseError(std::string(what) + " " + std::to_string(v) + " outside " + std::to_string(lo) + ".." +
                              std::to_string(hi));
    return {v, close + 2};
}

}  // namespace detail

/// Pulls the first score marker ("Score: [[N]]", or "Rating: [[N]]" in legacy
/// mode), an optional "Confidence: [[C]]" and the "Reason: [[...]]" text out of
/// a judge reply. Prose around the markers is ignored.
inline ParsedGrade parse_grade(const std::string& raw, GradeMode mode) {
    if (detail::trim_view(raw).empty()) throw GradeParseError("empty grader response");
    const std::string_view word = mode == GradeMode::legacy ? "Rating" : "Score";
    const auto score_hit = detail::find_marker(raw, word, 0);
    if (!score_hit) throw GradeParseError("no '" + std::string(word) + ": [[N]]' marker in grader response");

    ParsedGrade out;
    auto [score, after_score] = detail::read_bracketed_int(raw, score_hit->content, word, 1, 5);
    out.score = score;

    const auto reason_hit = detail::find_marker(raw, "Reason", after_score);
    const std::size_t meta_end = reason_hit ? reason_hit->begin : raw.size();

    if (const auto conf_hit = detail::find_marker(raw, "Confidence", after_score, meta_end)) {
        out.confidence = detail::read_bracketed_int(raw, conf_hit->content, "Confidence", 0, 100).first;
    } else if (mode == GradeMode::confidence) {
        out.warnings.push_back("missing_confidence");
    }

    std::size_t scan_from = after_score;
    if (reason_hit) {
        auto close = raw.find("]]", reason_hit->content);
        if (close == std::string::npos) {
            out.reason = raw.substr(reason_hit->content);
            out.warnings.push_back("unterminated_reason");
            scan_from = raw.size();
        } else {
            // In "x]]]" the reason keeps its own bracket; the last two close it.
            while (close + 2 < raw.size() && raw[close + 2] == ']') ++close;
            out.reason = raw.substr(reason_hit->content, close - reason_hit->content);
            scan_from = close + 2;
        }
    } else {
        out.warnings.push_back("missing_reason");
    }

    if (detail::find_marker(raw, word, scan_from)) out.warnings.push_back("multiple_score_markers");
    return out;
}

enum class Verdict { reject = 0, accept = 1 };

inline std::string_view to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }

/// 1, 2, 3 reject; 4, 5 accept.
inline Verdict to_binary(int score) {
    if (score < 1 || score > 5) throw ValidationError("score " + std::to_string(score) + " outside 1..5");
    return score >= 4 ? Verdict::accept : Verdict::reject;
}

struct GraderSpec {
    std::string grader_id;
    std::string model_id;
    GradeMode mode = GradeMode::plain;
    Rubric rubric = default_rubric();
};

/// Renders the prompt, asks the judge at temperature 0 and parses the reply.
/// Anything that prevents a valid score becomes a GradeFailure for the item.
inline GradeRecord grade_answer(const BenchmarkRecord& record, const GeneratedAnswer& answer, Gateway& gateway,
                                const GraderSpec& spec, const Clock& clock = Clock::wall()) {
    if (answer.question_id != record.question_id)
        throw ValidationError("answer for '" + answer.question_id + "' paired with record '" + record.question_id + "'");
    const std::string grader_id = spec.grader_id.empty() ? spec.model_id : spec.grader_id;

    ChatRequest req;
    req.model_id = spec.model_id;
    req.temperature = 0.0;
    std::string raw;
    try {
        req.messages.push_back(
            {"user", render_grading_prompt(record.question, record.label, answer.answer_text, spec.rubric, spec.mode)});
        raw = gateway.complete(req).text;
        ParsedGrade p = parse_grade(raw, spec.mode);
        GradeScore g{record.question_id, grader_id, p.score, p.confidence, std::move(p.reason), raw,
                     std::move(p.warnings), clock.now()};
        validate_grade(g);
        return g;
    } catch (const std::exception& e) {
        return GradeFailure{record.question_id, grader_id, e.what(), raw, clock.now()};
    }
}

}  // namespace ragmark
