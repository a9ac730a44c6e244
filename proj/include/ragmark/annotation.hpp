#pragma once

// Human grading over HTTP.
//
//   GET  /api/next?grader=<id>   next ungraded item for that grader, 204 when done
//   POST /api/grades             {grader_id, question_id, score, reason?}
//   GET  /api/progress           per-grader {graded, total}
//
// Errors carry {"code": "...", "message": "..."}. Accepted grades are appended
// (fsync'd) to the run's grades.jsonl through the same validation as LLM grades.

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "ragmark/dataset.hpp"
#include "ragmark/grader.hpp"

namespace ragmark {

class AnnotationError : public Error {
public:
    AnnotationError(int status, std::string code, const std::string& message)
        : Error(message), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct AnnotationItem {
    BenchmarkRecord record;
    std::string answer;
};

struct GraderProgress {
    std::size_t graded = 0;
    std::size_t total = 0;
};

/// Items, registered graders and the append-only grade log. All members are
/// safe to call from concurrent request handlers.
class AnnotationStore {
public:
    AnnotationStore(const std::vector<BenchmarkRecord>& records, const std::vector<GeneratedAnswer>& answers,
                    std::vector<std::string> graders, fs::path grades_path, Rubric rubric = default_rubric(),
                    Clock clock = Clock::wall())
        : graders_(graders.begin(), graders.end()),
          grades_path_(std::move(grades_path)),
          rubric_(std::move(rubric)),
          clock_(std::move(clock)) {
        std::map<std::string, const GeneratedAnswer*> by_question;
        for (const auto& a : answers) by_question[a.question_id] = &a;
        for (const auto& r : records) {
            const auto it = by_question.find(r.question_id);
            if (it == by_question.end()) continue;
            index_[r.question_id] = items_.size();
            items_.push_back({r, it->second->answer_text});
        }
        if (fs::exists(grades_path_)) {
            for (const auto& g : load_grades(grades_path_))
                if (std::holds_alternative<GradeScore>(g)) done_[grader_id_of(g)].insert(question_id_of(g));
        }
    }

    const Rubric& rubric() const { return rubric_; }
    std::size_t size() const { return items_.size(); }

    /// Lowest-ordered item this grader has not graded, or nullopt when finished.
    std::optional<AnnotationItem> next(const std::string& grader) const {
        std::lock_guard lock(mu_);
        require_grader(grader);
        const auto done = done_.find(grader);
        for (const auto& item : items_)
            if (done == done_.end() || !done->second.count(item.record.question_id)) return item;
        return std::nullopt;
    }

    GradeScore submit(const std::string& grader, const std::string& question_id, int score, std::string reason) {
        std::lock_guard lock(mu_);
        require_grader(grader);
        if (!index_.count(question_id))
            throw AnnotationError(404, "unknown_item", "no item with question_id '" + question_id + "'");
        GradeScore g{question_id, grader, score, std::nullopt, std::move(reason), "", {}, clock_.now()};
        try {
            validate_grade(g);
        } catch (const ValidationError& e) {
            throw AnnotationError(422, "invalid_grade", e.what());
        }
        if (done_[grader].count(question_id))
            throw AnnotationError(409, "duplicate_grade", "'" + grader + "' already graded '" + question_id + "'");
        append_line_durable(grades_path_, to_json(g).dump());
        done_[grader].insert(question_id);
        return g;
    }

    std::map<std::string, GraderProgress> progress() const {
        std::lock_guard lock(mu_);
        std::map<std::string, GraderProgress> out;
        for (const auto& g : graders_) {
            const auto it = done_.find(g);
            std::size_t graded = 0;
            if (it != done_.end())
                for (const auto& q : it->second) graded += index_.count(q);
            out[g] = {graded, items_.size()};
        }
        return out;
    }

private:
    void require_grader(const std::string& grader) const {
        if (!graders_.count(grader))
            throw AnnotationError(403, "unknown_grader", "grader '" + grader + "' is not registered");
    }

    std::set<std::string> graders_;
    fs::path grades_path_;
    Rubric rubric_;
    Clock clock_;
    std::vector<AnnotationItem> items_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::set<std::string>> done_;
    mutable std::mutex mu_;
};

class AnnotationService {
public:
    AnnotationService(AnnotationStore& store, std::optional<fs::path> static_dir = std::nullopt) : store_(store) {
        server_.Get("/api/next", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                if (!req.has_param("grader")) throw AnnotationError(400, "missing_grader", "query parameter 'grader' is required");
                const auto item = store_.next(req.get_param_value("grader"));
                if (!item) {
                    res.status = 204;
                    return;
                }
                ojson levels = ojson::array();
                for (std::size_t i = 0; i < store_.rubric().levels.size(); ++i)
                    levels.push_back({{"score", i + 1}, {"description", store_.rubric().levels[i]}});
                reply(res, 200,
                      {{"question_id", item->record.question_id},
                       {"subject_area", item->record.subject_area},
                       {"question", item->record.question},
                       {"label", item->record.label},
                       {"answer", item->answer},
                       {"rubric", store_.rubric().render()},
                       {"rubric_levels", levels}});
            });
        });

        server_.Post("/api/grades", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
                ojson body;
                try {
                    body = ojson::parse(req.body);
                } catch (const ojson::exception&) {
                    throw AnnotationError(400, "malformed_json", "request body is not valid JSON");
                }
                if (!body.is_object()) throw AnnotationError(400, "malformed_json", "request body must be an object");
                for (const char* key : {"grader_id", "question_id"})
                    if (!body.contains(key) || !body[key].is_string())
                        throw AnnotationError(400, "missing_field", std::string("field '") + key + "' must be a string");
                if (!body.contains("score") || !body["score"].is_number_integer())
                    throw AnnotationError(422, "invalid_grade", "field 'score' must be an integer 1..5");
                std::string reason;
                if (body.contains("reason") && !body["reason"].is_null()) {
                    if (!body["reason"].is_string())
                        throw AnnotationError(400, "missing_field", "field 'reason' must be a string");
                    reason = body["reason"].get<std::string>();
                }
                const auto score = body["score"].get<long long>();
                if (score < 1 || score > 5)
                    throw AnnotationError(422, "invalid_grade", "score " + std::to_string(score) + " outside 1..5");
                const GradeScore g = store_.submit(body["grader_id"].get<std::string>(),
                                                   body["question_id"].get<std::string>(), static_cast<int>(score),
                                                   std::move(reason));
                reply(res, 201, to_json(g));
            });
        });

        server_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
            handle(res, [&] {
                ojson graders = ojson::object();
                for (const auto& [g, p] : store_.progress()) graders[g] = {{"graded", p.graded}, {"total", p.total}};
                reply(res, 200, {{"total", store_.size()}, {"graders", graders}});
            });
        });

        if (static_dir && fs::is_directory(*static_dir)) {
            server_.set_mount_point("/", static_dir->string());
        } else {
            server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(
                    "<!doctype html><title>ragmark annotation</title>"
                    "<p>Grading UI assets are not installed. API: /api/next, /api/grades, /api/progress.</p>",
                    "text/html");
            });
        }
    }

    ~AnnotationService() { stop(); }

    /// Binds to an ephemeral port on `host` and serves on a background thread.
    int start_background(const std::string& host = "127.0.0.1") {
        const int port = server_.bind_to_any_port(host);
        if (port < 0) throw IoError("cannot bind annotation server on " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    /// Blocks serving on host:port until stop() is called.
    void listen(const std::string& host, int port) {
        if (!server_.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    static void reply(httplib::Response& res, int status, const ojson& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <typename F>
    static void handle(httplib::Response& res, F&& fn) {
        try {
            fn();
        } catch (const AnnotationError& e) {
            reply(res, e.status(), {{"code", e.code()}, {"message", e.what()}});
        } catch (const std::exception& e) {
            reply(res, 500, {{"code", "internal"}, {"message", e.what()}});
        }
    }

    AnnotationStore& store_;
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace ragmark
