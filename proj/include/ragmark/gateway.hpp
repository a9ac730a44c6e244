#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragmark/common.hpp"
#include "ragmark/hnsw.hpp"

namespace ragmark {

using json = nlohmann::json;

/// Timeout, rate limit, 5xx: worth retrying.
class TransientError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

/// The provider answered, but not with something we can use.
class ProviderError : public Error {
public:
    using Error::Error;
};

class RetriesExhaustedError : public Error {
public:
    using Error::Error;
};

class CacheMissError : public Error {
public:
    explicit CacheMissError(std::string hash)
        : Error("replay cache miss for request " + hash), hash_(std::move(hash)) {}
    const std::string& hash() const { return hash_; }

private:
    std::string hash_;
};

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<int> max_output;

    void validate() const {
        if (messages.empty()) throw ValidationError("chat request needs at least one message");
        if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
        for (const auto& m : messages)
            if (m.role != "system" && m.role != "user" && m.role != "assistant")
                throw ValidationError("unknown chat role '" + m.role + "'");
    }

    json to_json() const {
        json msgs = json::array();
        for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
        json j{{"model_id", model_id}, {"messages", msgs}, {"temperature", temperature}};
        if (max_output) j["max_output"] = *max_output;
        return j;
    }

    /// Canonical serialization; object keys are emitted sorted.
    std::string serialize() const { return to_json().dump(); }

    std::string hash() const { return to_hex(fnv1a64(serialize())); }
};

struct ChatResponse {
    std::string text;
    std::string model_id;
    std::int64_t prompt_units = 0;
    std::int64_t output_units = 0;
    double latency_ms = 0.0;
};

struct EmbedRequest {
    std::string model_id;
    std::vector<std::string> texts;
};

struct EmbedResponse {
    std::vector<EmbeddingVector> vectors;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& req) = 0;
    virtual EmbedResponse embed(const EmbedRequest& req) = 0;
    virtual std::string name() const = 0;
};

/// Pseudo-random unit vector seeded from the text. Identical text always maps
/// to the identical vector; unrelated texts land in unrelated directions.
inline EmbeddingVector hash_embedding(std::string_view text, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(fnv1a64(text) ^ splitmix64(seed)));
    EmbeddingVector v(dim);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < dim; i += 2) {
        // Box-Muller, spelled out for portable output.
        const double u1 = std::max(unit_double(rng()), 1e-300);
        const double u2 = unit_double(rng());
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = r * std::cos(2.0 * M_PI * u2);
        const double b = r * std::sin(2.0 * M_PI * u2);
        v[i] = static_cast<float>(a);
        norm2 += a * a;
        if (i + 1 < dim) {
            v[i + 1] = static_cast<float>(b);
            norm2 += b * b;
        }
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x = static_cast<float>(x * inv);
    return v;
}

namespace detail {

inline json response_to_json(const ChatResponse& r) {
    return {{"text", r.text},
            {"model_id", r.model_id},
            {"usage", {{"prompt_units", r.prompt_units}, {"output_units", r.output_units}}}};
}

inline ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.model_id = j.value("model_id", "");
    if (j.contains("usage")) {
        r.prompt_units = j["usage"].value("prompt_units", 0);
        r.output_units = j["usage"].value("output_units", 0);
    }
    return r;
}

}  // namespace detail

/// Serves chat completions from a cache keyed by request hash: entries primed
/// in memory first, then `<hash>.json` files under the cache directory.
/// Embeddings are computed locally with hash_embedding().
class ReplayBackend : public Backend {
public:
    ReplayBackend(std::optional<fs::path> cache_dir, std::size_t embed_dim, std::uint64_t embed_seed = 0)
        : cache_dir_(std::move(cache_dir)), embed_dim_(embed_dim), embed_seed_(embed_seed) {
        if (embed_dim_ == 0) throw ValidationError("embedding dimension must be positive");
    }

    void prime(const ChatRequest& req, std::string text) {
        ChatResponse r;
        r.text = std::move(text);
        r.model_id = req.model_id;
        std::unique_lock lock(mu_);
        primed_[req.hash()] = std::move(r);
    }

    ChatResponse complete(const ChatRequest& req) override {
        const std::string h = req.hash();
        {
            std::shared_lock lock(mu_);
            if (auto it = primed_.find(h); it != primed_.end()) return it->second;
        }
        if (cache_dir_) {
            const fs::path file = *cache_dir_ / (h + ".json");
            if (fs::exists(file)) {
                json j;
                try {
                    j = json::parse(read_file(file));
                } catch (const json::exception& e) {
                    throw ProviderError("corrupt replay cache file " + file.string() + ": " + e.what());
                }
                if (j.contains("request") && j["request"] != req.to_json()) throw CacheMissError(h);
                return detail::response_from_json(j.at("response"));
            }
        }
        throw CacheMissError(h);
    }

    EmbedResponse embed(const EmbedRequest& req) override {
        EmbedResponse out;
        out.vectors.reserve(req.texts.size());
        for (const auto& t : req.texts) out.vectors.push_back(hash_embedding(t, embed_dim_, embed_seed_));
        return out;
    }

    std::string name() const override { return "replay"; }

private:
    std::optional<fs::path> cache_dir_;
    std::size_t embed_dim_;
    std::uint64_t embed_seed_;
    mutable std::shared_mutex mu_;
    std::map<std::string, ChatResponse> primed_;
};

/// Forwards to another backend and writes every chat response into a replay
/// cache directory.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, fs::path cache_dir)
        : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {}

    ChatResponse complete(const ChatRequest& req) override {
        ChatResponse r = inner_->complete(req);
        const std::string h = req.hash();
        json j{{"hash", h}, {"request", req.to_json()}, {"response", detail::response_to_json(r)}};
        std::lock_guard lock(mu_);
        write_file_atomic(cache_dir_ / (h + ".json"), j.dump(2) + "\n");
        return r;
    }

    EmbedResponse embed(const EmbedRequest& req) override { return inner_->embed(req); }

    std::string name() const override { return "record(" + inner_->name() + ")"; }

private:
    std::shared_ptr<Backend> inner_;
    fs::path cache_dir_;
    std::mutex mu_;
};

struct GatewayOptions {
    int max_attempts = 5;
    double retry_base_ms = 500.0;
    double retry_factor = 2.0;
    std::size_t max_concurrency = 4;
    std::uint64_t seed = 0;
};

/// Thread-safe front door to a backend: validation, bounded concurrency, and
/// retry with full-jitter exponential backoff on transient failures.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    Gateway(std::shared_ptr<Backend> backend, GatewayOptions opts = {}, Sleeper sleeper = {})
        : backend_(std::move(backend)),
          opts_(opts),
          sleeper_(sleeper ? std::move(sleeper) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
          slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(opts.max_concurrency, 1))),
          jitter_(opts.seed) {
        if (!backend_) throw ValidationError("gateway needs a backend");
        if (opts_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
    }

    const GatewayOptions& options() const { return opts_; }
    Backend& backend() { return *backend_; }

    ChatResponse complete(const ChatRequest& req) {
        req.validate();
        return with_retry([&] {
            const auto t0 = std::chrono::steady_clock::now();
            ChatResponse r = backend_->complete(req);
            r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (r.model_id.empty()) r.model_id = req.model_id;
            return r;
        });
    }

    EmbedResponse embed(const EmbedRequest& req) {
        EmbedResponse r = with_retry([&] { return backend_->embed(req); });
        if (r.vectors.size() != req.texts.size())
            throw ProviderError("embedding reply has " + std::to_string(r.vectors.size()) + " vectors for " +
                                std::to_string(req.texts.size()) + " texts");
        for (std::size_t i = 1; i < r.vectors.size(); ++i)
            if (r.vectors[i].size() != r.vectors[0].size()) throw ProviderError("embedding reply has mixed dimensions");
        for (const auto& v : r.vectors) check_finite(v);
        return r;
    }

private:
    template <typename F>
    auto with_retry(F&& call) -> decltype(call()) {
        for (int attempt = 0;; ++attempt) {
            try {
                SlotGuard guard(slots_);
                return call();
            } catch (const TransientError& e) {
                if (attempt + 1 >= opts_.max_attempts)
                    throw RetriesExhaustedError("gave up after " + std::to_string(opts_.max_attempts) +
                                                " attempts: " + e.what());
                sleeper_(backoff(attempt));
            }
        }
    }

    std::chrono::milliseconds backoff(int attempt) {
        const double cap = opts_.retry_base_ms * std::pow(opts_.retry_factor, attempt);
        std::lock_guard lock(jitter_mu_);
        return std::chrono::milliseconds(static_cast<std::int64_t>(unit_double(jitter_()) * cap));
    }

    struct SlotGuard {
        explicit SlotGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
        ~SlotGuard() { sem.release(); }
        std::counting_semaphore<>& sem;
    };

    std::shared_ptr<Backend> backend_;
    GatewayOptions opts_;
    Sleeper sleeper_;
    std::counting_semaphore<> slots_;
    std::mutex jitter_mu_;
    std::mt19937_64 jitter_;
};

}  // namespace ragmark
