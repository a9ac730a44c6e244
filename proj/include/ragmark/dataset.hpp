#pragma once

// Benchmark files and run directories.
//
// Run directory layout:
//   run-meta.json   run id, creation time, resolved config, templates, model ids
//   answers.jsonl   one GeneratedAnswer per line
//   grades.jsonl    one grade (or grading failure) per line
//   report.json     AgreementReport

#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragmark/records.hpp"

namespace ragmark {

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    return lines;
}

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

template <typename F>
void for_each_jsonl(const fs::path& path, F&& on_object) {
    const auto lines = split_lines(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (blank(lines[i])) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(i + 1);
        ojson j;
        try {
            j = ojson::parse(lines[i]);
        } catch (const ojson::exception& e) {
            throw ValidationError(where + ": malformed JSON (" + e.what() + ")");
        }
        if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
        try {
            on_object(j);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        } catch (const ojson::exception& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
}

inline std::string required_string(const ojson& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    if (!j[key].is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
    std::string out;
    for (const auto& item : items) out += to_json(item).dump() + "\n";
    return out;
}

}  // namespace detail

/// Validated benchmark records in file order. Any bad line fails the whole load.
inline std::vector<BenchmarkRecord> load_benchmark(const fs::path& path) {
    std::vector<BenchmarkRecord> out;
    std::unordered_set<std::string> seen;
    detail::for_each_jsonl(path, [&](const ojson& j) {
        BenchmarkRecord r{detail::required_string(j, "question_id"), detail::required_string(j, "subject_area"),
                          detail::required_string(j, "question"), detail::required_string(j, "label")};
        r.validate();
        if (!seen.insert(r.question_id).second) throw ValidationError("duplicate question_id '" + r.question_id + "'");
        out.push_back(std::move(r));
    });
    return out;
}

inline void write_benchmark(const fs::path& path, const std::vector<BenchmarkRecord>& records) {
    write_file_atomic(path, detail::to_jsonl(records));
}

inline std::vector<GeneratedAnswer> load_answers(const fs::path& path) {
    std::vector<GeneratedAnswer> out;
    detail::for_each_jsonl(path, [&](const ojson& j) { out.push_back(answer_from_json(j)); });
    return out;
}

inline std::vector<GradeRecord> load_grades(const fs::path& path) {
    std::vector<GradeRecord> out;
    detail::for_each_jsonl(path, [&](const ojson& j) { out.push_back(grade_from_json(j)); });
    return out;
}

inline std::string answers_jsonl(const std::vector<GeneratedAnswer>& answers) { return detail::to_jsonl(answers); }
inline std::string grades_jsonl(const std::vector<GradeRecord>& grades) { return detail::to_jsonl(grades); }

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

/// Flat per-item CSV for spreadsheet users: benchmark fields, answer, and one
/// score column per grader.
inline std::string export_items_csv(const std::vector<BenchmarkRecord>& records,
                                    const std::vector<GeneratedAnswer>& answers,
                                    const std::vector<GradeRecord>& grades) {
    std::vector<std::string> graders;
    for (const auto& g : grades)
        if (std::find(graders.begin(), graders.end(), grader_id_of(g)) == graders.end()) graders.push_back(grader_id_of(g));
    std::string out = "question_id,subject_area,question,label,answer";
    for (const auto& g : graders) out += "," + detail::csv_field(g);
    out += "\n";
    for (const auto& r : records) {
        std::string answer;
        for (const auto& a : answers)
            if (a.question_id == r.question_id) answer = a.answer_text;
        out += detail::csv_field(r.question_id) + "," + detail::csv_field(r.subject_area) + "," +
               detail::csv_field(r.question) + "," + detail::csv_field(r.label) + "," + detail::csv_field(answer);
        for (const auto& gid : graders) {
            std::string cell;
            for (const auto& g : grades)
                if (question_id_of(g) == r.question_id && grader_id_of(g) == gid)
                    if (const auto* s = std::get_if<GradeScore>(&g)) cell = std::to_string(s->score);
            out += "," + cell;
        }
        out += "\n";
    }
    return out;
}

struct EvaluationRun {
    std::string run_id;
    std::string created_at;
    ojson config = ojson::object();
    std::vector<GeneratedAnswer> answers;
    std::vector<GradeRecord> grades;
    std::optional<ojson> report;

    bool operator==(const EvaluationRun&) const = default;

    /// Every grade must refer to an answered question; answers are unique per question.
    void validate() const {
        if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..")
            throw ValidationError("invalid run_id '" + run_id + "'");
        std::set<std::string> answered;
        for (const auto& a : answers)
            if (!answered.insert(a.question_id).second)
                throw ValidationError("run has two answers for '" + a.question_id + "'");
        for (const auto& g : grades)
            if (!answered.count(question_id_of(g)))
                throw ValidationError("grade references unknown question_id '" + question_id_of(g) + "'");
    }
};

inline ojson run_meta_json(const EvaluationRun& run) {
    return {{"run_id", run.run_id}, {"created_at", run.created_at}, {"config", run.config}};
}

/// Writes `root/run_id/`. Fails if that directory already exists.
inline fs::path save_run(const EvaluationRun& run, const fs::path& root) {
    run.validate();
    const fs::path dir = root / run.run_id;
    if (fs::exists(dir)) throw ValidationError("run directory already exists: " + dir.string());
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_file_atomic(dir / "run-meta.json", run_meta_json(run).dump(2) + "\n");
    write_file_atomic(dir / "answers.jsonl", answers_jsonl(run.answers));
    write_file_atomic(dir / "grades.jsonl", grades_jsonl(run.grades));
    if (run.report) write_file_atomic(dir / "report.json", run.report->dump(2) + "\n");
    return dir;
}

inline EvaluationRun load_run(const fs::path& dir) {
    EvaluationRun run;
    ojson meta;
    try {
        meta = ojson::parse(read_file(dir / "run-meta.json"));
    } catch (const ojson::exception& e) {
        throw ValidationError("malformed run-meta.json: " + std::string(e.what()));
    }
    run.run_id = meta.at("run_id").get<std::string>();
    run.created_at = meta.value("created_at", "");
    run.config = meta.value("config", ojson::object());
    if (fs::exists(dir / "answers.jsonl")) run.answers = load_answers(dir / "answers.jsonl");
    if (fs::exists(dir / "grades.jsonl")) run.grades = load_grades(dir / "grades.jsonl");
    if (fs::exists(dir / "report.json")) run.report = ojson::parse(read_file(dir / "report.json"));
    return run;
}

}  // namespace ragmark
