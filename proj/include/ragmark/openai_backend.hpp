#pragma once

// OpenAI-compatible chat-completions and embeddings client.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragmark/gateway.hpp"

namespace ragmark {

struct OpenAiSettings {
    std::string api_base = "https://api.openai.com/v1";  // RAGMARK_API_BASE
    std::string api_key;                                  // RAGMARK_API_KEY
    std::string embedding_model = "text-embedding-ada-002";
    int timeout_seconds = 60;

    /// Fills base URL and key from the environment when set.
    static OpenAiSettings from_env(OpenAiSettings base);
    static OpenAiSettings from_env();
};

inline OpenAiSettings OpenAiSettings::from_env(OpenAiSettings base) {
    if (const char* v = std::getenv("RAGMARK_API_BASE"); v && *v) base.api_base = v;
    if (const char* v = std::getenv("RAGMARK_API_KEY"); v && *v) base.api_key = v;
    return base;
}

inline OpenAiSettings OpenAiSettings::from_env() { return from_env(OpenAiSettings{}); }

class OpenAiBackend : public Backend {
public:
    explicit OpenAiBackend(OpenAiSettings s) : settings_(std::move(s)) {
        const auto scheme_end = settings_.api_base.find("://");
        if (scheme_end == std::string::npos) throw ValidationError("api base must include a scheme: " + settings_.api_base);
        const auto path_start = settings_.api_base.find('/', scheme_end + 3);
        origin_ = settings_.api_base.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : settings_.api_base.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    ChatResponse complete(const ChatRequest& req) override {
        json body{{"model", req.model_id}, {"temperature", req.temperature}, {"messages", json::array()}};
        for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        if (req.max_output) body["max_tokens"] = *req.max_output;

        const json reply = post("/chat/completions", body);
        try {
            ChatResponse r;
            r.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            r.model_id = reply.value("model", req.model_id);
            if (reply.contains("usage")) {
                r.prompt_units = reply["usage"].value("prompt_tokens", 0);
                r.output_units = reply["usage"].value("completion_tokens", 0);
            }
            return r;
        } catch (const json::exception& e) {
            throw ProviderError(std::string("malformed chat reply: ") + e.what());
        }
    }

    EmbedResponse embed(const EmbedRequest& req) override {
        const std::string model = req.model_id.empty() ? settings_.embedding_model : req.model_id;
        const json reply = post("/embeddings", json{{"model", model}, {"input", req.texts}});
        try {
            const auto& data = reply.at("data");
            EmbedResponse out;
            out.vectors.resize(data.size());
            for (const auto& item : data) {
                const auto idx = item.at("index").get<std::size_t>();
                if (idx >= out.vectors.size()) throw ProviderError("embedding index out of range");
                out.vectors[idx] = item.at("embedding").get<EmbeddingVector>();
            }
            return out;
        } catch (const json::exception& e) {
            throw ProviderError(std::string("malformed embedding reply: ") + e.what());
        }
    }

    std::string name() const override { return "openai(" + settings_.api_base + ")"; }

private:
    json post(const std::string& endpoint, const json& body) {
        httplib::Client cli(origin_);
        cli.set_connection_timeout(settings_.timeout_seconds, 0);
        cli.set_read_timeout(settings_.timeout_seconds, 0);
        cli.set_write_timeout(settings_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

        auto res = cli.Post(prefix_ + endpoint, headers, body.dump(), "application/json");
        if (!res) throw TransientError("transport failure: " + httplib::to_string(res.error()));
        const int status = res->status;
        if (status == 401 || status == 403) throw AuthError("provider rejected credentials (HTTP " + std::to_string(status) + ")");
        if (status == 408 || status == 429 || status >= 500)
            throw TransientError("provider returned HTTP " + std::to_string(status));
        if (status < 200 || status >= 300)
            throw ProviderError("provider returned HTTP " + std::to_string(status) + ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProviderError(std::string("provider reply is not JSON: ") + e.what());
        }
    }

    OpenAiSettings settings_;
    std::string origin_;
    std::string prefix_;
};

}  // namespace ragmark
