#include <gtest/gtest.h>

#include <httplib.h>

#include "ragmark/annotation.hpp"
#include "support/oracles.hpp"

using namespace ragmark;

namespace {

std::vector<BenchmarkRecord> records() {
    return {{"Q1", "Fraud", "q1?", "l1"}, {"Q2", "Token", "q2?", "l2"}, {"Q3", "OCT", "q3?", "l3"}};
}

std::vector<GeneratedAnswer> answers() {
    return {{"Q1", "a1", {}, "gpt-4", "t"}, {"Q2", "a2", {}, "gpt-4", "t"}, {"Q3", "a3", {}, "gpt-4", "t"}};
}

struct Server {
    explicit Server(const fs::path& grades)
        : store(records(), answers(), {"h1", "h2"}, grades, default_rubric(), Clock::fixed("2024-01-01T00:00:00Z")),
          service(store),
          port(service.start_background()),
          client("127.0.0.1", port) {}

    httplib::Result next(const std::string& grader) { return client.Get("/api/next?grader=" + grader); }
    httplib::Result post(const ojson& body) { return client.Post("/api/grades", body.dump(), "application/json"); }

    AnnotationStore store;
    AnnotationService service;
    int port;
    httplib::Client client;
};

ojson grade(const std::string& grader, const std::string& qid, ojson score) {
    return {{"grader_id", grader}, {"question_id", qid}, {"score", score}, {"reason", "r"}};
}

}  // namespace

TEST(Annotation, ServesItemsInOrderUntilDone) {
    oracle::TempDir dir;
    Server s(dir / "grades.jsonl");
    auto r = s.next("h1");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    auto body = ojson::parse(r->body);
    EXPECT_EQ(body["question_id"], "Q1");
    EXPECT_EQ(body["answer"], "a1");
    EXPECT_EQ(body["rubric_levels"].size(), 5u);
    EXPECT_EQ(body["rubric"], default_rubric().render());

    for (const char* q : {"Q1", "Q2", "Q3"}) {
        const auto p = s.post(grade("h1", q, 4));
        ASSERT_TRUE(p);
        EXPECT_EQ(p->status, 201) << p->body;
        const auto nx = s.next("h1");
        if (std::string(q) != "Q3") EXPECT_EQ(ojson::parse(nx->body)["question_id"], q == std::string("Q1") ? "Q2" : "Q3");
    }
    EXPECT_EQ(s.next("h1")->status, 204);
    // Another grader has its own cursor.
    EXPECT_EQ(ojson::parse(s.next("h2")->body)["question_id"], "Q1");
}

TEST(Annotation, RejectsInvalidSubmissions) {
    oracle::TempDir dir;
    Server s(dir / "grades.jsonl");
    EXPECT_EQ(s.post(grade("h1", "Q1", 6))->status, 422);
    EXPECT_EQ(s.post(grade("h1", "Q1", 0))->status, 422);
    EXPECT_EQ(s.post(grade("h1", "Q1", 3.5))->status, 422);
    EXPECT_EQ(s.post(grade("h1", "Q1", "3"))->status, 422);
    EXPECT_EQ(s.post(grade("mallory", "Q1", 3))->status, 403);
    EXPECT_EQ(s.post(grade("h1", "Q404", 3))->status, 404);
    EXPECT_EQ(s.client.Post("/api/grades", "{nope", "application/json")->status, 400);
    EXPECT_EQ(s.post({{"question_id", "Q1"}, {"score", 3}})->status, 400);
    EXPECT_EQ(s.client.Get("/api/next")->status, 400);
    EXPECT_EQ(s.next("mallory")->status, 403);

    EXPECT_EQ(s.post(grade("h1", "Q1", 3))->status, 201);
    const auto dup = s.post(grade("h1", "Q1", 5));
    EXPECT_EQ(dup->status, 409);
    EXPECT_EQ(ojson::parse(dup->body)["code"], "duplicate_grade");
    // Rejected submissions never reach the log.
    EXPECT_EQ(load_grades(dir / "grades.jsonl").size(), 1u);
}

TEST(Annotation, ProgressCounts) {
    oracle::TempDir dir;
    Server s(dir / "grades.jsonl");
    s.post(grade("h1", "Q1", 1));
    s.post(grade("h1", "Q3", 2));
    s.post(grade("h2", "Q2", 5));
    const auto p = ojson::parse(s.client.Get("/api/progress")->body);
    EXPECT_EQ(p["total"], 3);
    EXPECT_EQ(p["graders"]["h1"]["graded"], 2);
    EXPECT_EQ(p["graders"]["h2"]["graded"], 1);
    EXPECT_EQ(p["graders"]["h2"]["total"], 3);
}

TEST(Annotation, GradesPersistAcrossRestart) {
    oracle::TempDir dir;
    {
        Server s(dir / "grades.jsonl");
        ASSERT_EQ(s.post(grade("h1", "Q1", 2))->status, 201);
        ASSERT_EQ(s.post(grade("h1", "Q2", 5))->status, 201);
    }
    const auto saved = load_grades(dir / "grades.jsonl");
    ASSERT_EQ(saved.size(), 2u);
    const auto& first = std::get<GradeScore>(saved[0]);
    EXPECT_EQ(first.grader_id, "h1");
    EXPECT_EQ(first.score, 2);
    EXPECT_EQ(first.reason, "r");
    EXPECT_EQ(first.created_at, "2024-01-01T00:00:00Z");

    Server again(dir / "grades.jsonl");
    EXPECT_EQ(ojson::parse(again.next("h1")->body)["question_id"], "Q3");
    EXPECT_EQ(again.post(grade("h1", "Q1", 4))->status, 409);
    EXPECT_EQ(load_grades(dir / "grades.jsonl").size(), 2u);
}

TEST(Annotation, ConcurrentSubmissionsAllLogged) {
    oracle::TempDir dir;
    std::vector<BenchmarkRecord> recs;
    std::vector<GeneratedAnswer> ans;
    for (int i = 0; i < 40; ++i) {
        const auto id = "Q" + std::to_string(i);
        recs.push_back({id, "Fraud", "q", "l"});
        ans.push_back({id, "a", {}, "m", "t"});
    }
    AnnotationStore store(recs, ans, {"h1", "h2", "h3", "h4"}, dir / "g.jsonl");
    std::vector<std::thread> ts;
    for (const char* g : {"h1", "h2", "h3", "h4"})
        ts.emplace_back([&store, g, &recs] {
            for (const auto& r : recs) store.submit(g, r.question_id, 3, "");
        });
    for (auto& t : ts) t.join();
    EXPECT_EQ(load_grades(dir / "g.jsonl").size(), 160u);
    for (const auto& [g, p] : store.progress()) EXPECT_EQ(p.graded, 40u) << g;
}

TEST(Annotation, RootServesPlaceholderWithoutAssets) {
    oracle::TempDir dir;
    Server s(dir / "grades.jsonl");
    const auto r = s.client.Get("/");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_NE(r->body.find("/api/next"), std::string::npos);
}
