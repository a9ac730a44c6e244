#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "ragmark/gateway.hpp"
#include "ragmark/openai_backend.hpp"
#include "support/oracles.hpp"

using namespace ragmark;

namespace {

ChatRequest hello_request() {
    ChatRequest r;
    r.model_id = "gpt-4";
    r.messages = {{"user", "say hello"}};
    return r;
}

class ScriptedBackend : public Backend {
public:
    std::function<ChatResponse(int)> on_complete;
    std::atomic<int> calls{0};
    ChatResponse complete(const ChatRequest&) override { return on_complete(calls++); }
    EmbedResponse embed(const EmbedRequest& req) override {
        ++calls;
        EmbedResponse r;
        for (std::size_t i = 0; i < req.texts.size(); ++i) r.vectors.push_back({1.f, 0.f});
        return r;
    }
    std::string name() const override { return "scripted"; }
};

class CountingBackend : public Backend {
public:
    std::atomic<int> in_flight{0}, peak{0};
    ChatResponse complete(const ChatRequest& req) override {
        const int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --in_flight;
        return {req.messages.back().content, req.model_id};
    }
    EmbedResponse embed(const EmbedRequest&) override { return {}; }
    std::string name() const override { return "counting"; }
};

}  // namespace

TEST(ChatRequest, DefaultTemperatureIsZero) { EXPECT_EQ(ChatRequest{}.temperature, 0.0); }

TEST(ChatRequest, ValidationRules) {
    ChatRequest r;
    EXPECT_THROW(r.validate(), ValidationError);
    r = hello_request();
    r.temperature = -0.5;
    EXPECT_THROW(r.validate(), ValidationError);
    r = hello_request();
    r.messages[0].role = "tool";
    EXPECT_THROW(r.validate(), ValidationError);
}

TEST(ChatRequest, HashStableAndFieldSensitive) {
    const auto base = hello_request();
    EXPECT_EQ(base.hash(), hello_request().hash());
    EXPECT_EQ(base.serialize(), hello_request().serialize());

    std::vector<ChatRequest> variants(6, base);
    variants[0].model_id = "gpt-4o";
    variants[1].messages[0].content = "say hello!";
    variants[2].messages[0].role = "system";
    variants[3].temperature = 0.1;
    variants[4].max_output = 10;
    variants[5].messages.push_back({"assistant", "hi"});
    std::set<std::string> hashes{base.hash()};
    for (const auto& v : variants) hashes.insert(v.hash());
    EXPECT_EQ(hashes.size(), variants.size() + 1);
}

TEST(ChatRequest, HashCollisionFreeOverCorpus) {
    std::set<std::string> hashes;
    std::mt19937_64 rng(1);
    std::set<std::string> texts;
    for (int i = 0; i < 5000; ++i) texts.insert(oracle::random_text(rng, 40) + std::to_string(i));
    for (const auto& t : texts) {
        auto r = hello_request();
        r.messages[0].content = t;
        hashes.insert(r.hash());
    }
    EXPECT_EQ(hashes.size(), texts.size());
}

TEST(Replay, PrimedRequestEchoes) {
    auto backend = std::make_shared<ReplayBackend>(std::nullopt, 8);
    backend->prime(hello_request(), "hello");
    Gateway gw(backend);
    EXPECT_EQ(gw.complete(hello_request()).text, "hello");
}

TEST(Replay, MissNamesTheHash) {
    Gateway gw(std::make_shared<ReplayBackend>(std::nullopt, 8));
    try {
        gw.complete(hello_request());
        FAIL() << "expected a cache miss";
    } catch (const CacheMissError& e) {
        EXPECT_EQ(e.hash(), hello_request().hash());
        EXPECT_NE(std::string(e.what()).find(hello_request().hash()), std::string::npos);
    }
}

TEST(Replay, RecordThenReplayFromDisk) {
    oracle::TempDir dir;
    auto inner = std::make_shared<ScriptedBackend>();
    inner->on_complete = [](int) { return ChatResponse{"recorded", "gpt-4", 3, 1}; };
    Gateway recorder(std::make_shared<RecordingBackend>(inner, dir.path()));
    EXPECT_EQ(recorder.complete(hello_request()).text, "recorded");
    EXPECT_TRUE(fs::exists(dir.path() / (hello_request().hash() + ".json")));

    Gateway replay(std::make_shared<ReplayBackend>(dir.path(), 8));
    const auto r = replay.complete(hello_request());
    EXPECT_EQ(r.text, "recorded");
    EXPECT_EQ(r.prompt_units, 3);
}

TEST(Replay, EmbeddingsDeterministicUnitNorm) {
    Gateway gw(std::make_shared<ReplayBackend>(std::nullopt, 37, 5));
    const auto r = gw.embed({"m", {"alpha", "beta", "alpha"}});
    ASSERT_EQ(r.vectors.size(), 3u);
    EXPECT_EQ(r.vectors[0], r.vectors[2]);
    EXPECT_NE(r.vectors[0], r.vectors[1]);
    for (const auto& v : r.vectors) {
        ASSERT_EQ(v.size(), 37u);
        double n = 0;
        for (float x : v) n += static_cast<double>(x) * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
    EXPECT_EQ(r.vectors[1], hash_embedding("beta", 37, 5));
    EXPECT_NE(hash_embedding("beta", 37, 6), hash_embedding("beta", 37, 5));
}

TEST(Gateway, RetriesTransientThenSucceeds) {
    auto b = std::make_shared<ScriptedBackend>();
    b->on_complete = [](int n) -> ChatResponse {
        if (n < 2) throw TransientError("rate limited");
        return {"ok", "gpt-4"};
    };
    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gw(b, {}, [&](auto d) { sleeps.push_back(d); });
    EXPECT_EQ(gw.complete(hello_request()).text, "ok");
    EXPECT_EQ(b->calls.load(), 3);
    ASSERT_EQ(sleeps.size(), 2u);
    EXPECT_LE(sleeps[0].count(), 500);
    EXPECT_LE(sleeps[1].count(), 1000);
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
    auto b = std::make_shared<ScriptedBackend>();
    b->on_complete = [](int) -> ChatResponse { throw TransientError("timeout"); };
    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gw(b, {}, [&](auto d) { sleeps.push_back(d); });
    EXPECT_THROW(gw.complete(hello_request()), RetriesExhaustedError);
    EXPECT_EQ(b->calls.load(), 5);
    ASSERT_EQ(sleeps.size(), 4u);
    for (std::size_t i = 0; i < sleeps.size(); ++i) EXPECT_LE(sleeps[i].count(), 500 << i);
}

TEST(Gateway, JitterIsSeeded) {
    auto run = [](std::uint64_t seed) {
        auto b = std::make_shared<ScriptedBackend>();
        b->on_complete = [](int) -> ChatResponse { throw TransientError("timeout"); };
        std::vector<long> sleeps;
        GatewayOptions o;
        o.seed = seed;
        Gateway gw(b, o, [&](auto d) { sleeps.push_back(static_cast<long>(d.count())); });
        EXPECT_THROW(gw.complete(hello_request()), RetriesExhaustedError);
        return sleeps;
    };
    EXPECT_EQ(run(9), run(9));
    EXPECT_NE(run(9), run(10));
}

TEST(Gateway, AuthFailureNotRetried) {
    auto b = std::make_shared<ScriptedBackend>();
    b->on_complete = [](int) -> ChatResponse { throw AuthError("bad key"); };
    Gateway gw(b, {}, [](auto) {});
    EXPECT_THROW(gw.complete(hello_request()), AuthError);
    EXPECT_EQ(b->calls.load(), 1);
}

TEST(Gateway, BoundedConcurrency) {
    auto b = std::make_shared<CountingBackend>();
    GatewayOptions o;
    o.max_concurrency = 3;
    Gateway gw(b, o);
    std::vector<std::thread> threads;
    for (int t = 0; t < 12; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 4; ++i) gw.complete(hello_request());
        });
    for (auto& t : threads) t.join();
    EXPECT_LE(b->peak.load(), 3);
    EXPECT_GE(b->peak.load(), 2);
}

TEST(Gateway, EmbedBatchKeepsOrderAndChecksCount) {
    Gateway gw(std::make_shared<ReplayBackend>(std::nullopt, 4));
    const auto r = gw.embed({"m", {"a", "b", "c"}});
    ASSERT_EQ(r.vectors.size(), 3u);
    EXPECT_EQ(r.vectors[1], hash_embedding("b", 4, 0));

    class Short : public ScriptedBackend {
        EmbedResponse embed(const EmbedRequest&) override { return {{{1.f}}}; }
    };
    Gateway bad(std::make_shared<Short>());
    EXPECT_THROW(bad.embed({"m", {"a", "b"}}), ProviderError);
}

namespace {

struct MockProvider {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> chat_calls{0};
    std::string last_auth;
    json last_body;
    std::function<void(httplib::Response&, int)> chat_reply;

    MockProvider() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = json::parse(req.body);
            chat_reply(res, chat_calls++);
        });
        server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            json data = json::array();
            const auto n = body["input"].size();
            for (std::size_t i = n; i-- > 0;)
                data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockProvider() {
        server.stop();
        thread.join();
    }
    OpenAiSettings settings() const {
        OpenAiSettings s;
        s.api_base = "http://127.0.0.1:" + std::to_string(port) + "/v1";
        s.api_key = "sk-test";
        s.timeout_seconds = 5;
        return s;
    }
};

}  // namespace

TEST(OpenAiBackend, ChatRoundTrip) {
    MockProvider mock;
    mock.chat_reply = [](httplib::Response& res, int) {
        res.set_content(R"({"model":"gpt-4-0613","choices":[{"message":{"role":"assistant","content":"Score: [[4]]"}}],)"
                        R"("usage":{"prompt_tokens":12,"completion_tokens":5}})",
                        "application/json");
    };
    Gateway gw(std::make_shared<OpenAiBackend>(mock.settings()));
    const auto r = gw.complete(hello_request());
    EXPECT_EQ(r.text, "Score: [[4]]");
    EXPECT_EQ(r.model_id, "gpt-4-0613");
    EXPECT_EQ(r.prompt_units, 12);
    EXPECT_EQ(mock.last_auth, "Bearer sk-test");
    EXPECT_EQ(mock.last_body["temperature"], 0.0);
    EXPECT_EQ(mock.last_body["messages"][0]["content"], "say hello");
}

TEST(OpenAiBackend, EmbeddingsReorderedByIndex) {
    MockProvider mock;
    Gateway gw(std::make_shared<OpenAiBackend>(mock.settings()));
    const auto r = gw.embed({"text-embedding-ada-002", {"a", "b", "c"}});
    ASSERT_EQ(r.vectors.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.vectors[i][0], static_cast<float>(i));
}

TEST(OpenAiBackend, StatusMapping) {
    MockProvider mock;
    mock.chat_reply = [](httplib::Response& res, int n) {
        if (n == 0) {
            res.status = 429;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"after retry"}}]})", "application/json");
    };
    Gateway gw(std::make_shared<OpenAiBackend>(mock.settings()), {}, [](auto) {});
    EXPECT_EQ(gw.complete(hello_request()).text, "after retry");
    EXPECT_EQ(mock.chat_calls.load(), 2);

    mock.chat_calls = 0;
    mock.chat_reply = [](httplib::Response& res, int) { res.status = 401; };
    EXPECT_THROW(gw.complete(hello_request()), AuthError);
    EXPECT_EQ(mock.chat_calls.load(), 1);

    mock.chat_reply = [](httplib::Response& res, int) { res.set_content("not json", "text/plain"); };
    EXPECT_THROW(gw.complete(hello_request()), ProviderError);

    mock.chat_reply = [](httplib::Response& res, int) { res.set_content(R"({"choices":[]})", "application/json"); };
    EXPECT_THROW(gw.complete(hello_request()), ProviderError);
}

TEST(OpenAiBackend, UnreachableHostIsTransient) {
    OpenAiSettings s;
    s.api_base = "http://127.0.0.1:1/v1";
    s.timeout_seconds = 1;
    GatewayOptions o;
    o.max_attempts = 2;
    Gateway gw(std::make_shared<OpenAiBackend>(s), o, [](auto) {});
    EXPECT_THROW(gw.complete(hello_request()), RetriesExhaustedError);
}

TEST(OpenAiBackend, EnvironmentOverridesBase) {
    setenv("RAGMARK_API_BASE", "http://example.invalid/v9", 1);
    setenv("RAGMARK_API_KEY", "sk-env", 1);
    const auto s = OpenAiSettings::from_env();
    unsetenv("RAGMARK_API_BASE");
    unsetenv("RAGMARK_API_KEY");
    EXPECT_EQ(s.api_base, "http://example.invalid/v9");
    EXPECT_EQ(s.api_key, "sk-env");
}
