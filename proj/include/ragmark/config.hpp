#pragma once

// Harness configuration: a TOML file read with CLI11's config parser, plus
// command-line overrides. Relative paths resolve against the config file's
// directory; the resolved config is echoed verbatim into run metadata.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ragmark/analytics.hpp"
#include "ragmark/chunking.hpp"
#include "ragmark/grader.hpp"
#include "ragmark/hnsw.hpp"
#include "ragmark/rag.hpp"
#include "ragmark/records.hpp"

namespace ragmark {

struct HarnessConfig {
    struct Paths {
        std::string corpus_dir = "corpus";
        std::string benchmark = "benchmark.jsonl";
        std::string index = "index.rgmk";
        std::string runs_root = "runs";
        std::string replay_dir = "replay";
        std::string static_dir = "ui";
    } paths;

    ChunkingConfig chunking;
    HnswParams hnsw;
    bool hnsw_seed_set = false;

    struct GatewayCfg {
        std::string backend = "replay";  // replay | openai | simulated
        bool record = false;
        std::string api_base;
        std::string generator_model = "gpt-4";
        std::string grader_model = "gpt-4";
        std::string embedding_model = "text-embedding-ada-002";
        std::size_t embedding_dim = 256;
        std::uint64_t embed_seed = 0;
        std::size_t max_concurrency = 4;
        int max_attempts = 5;
        double retry_base_ms = 500.0;
        int timeout_seconds = 60;
    } gateway;

    RetrievalConfig retrieval;
    GenerationPrompt prompt;

    struct Grading {
        GradeMode mode = GradeMode::plain;
        std::string rubric;  // empty: "early" in legacy mode, "default" otherwise
        std::string grader_id;
    } grading;

    struct Analytics {
        std::string plan = "median";  // median | two-phase
        std::vector<std::string> first_phase{"h1", "h2", "h3"};
        std::vector<std::string> second_phase{"h4", "h5"};
        std::size_t split = 52;
    } analytics;

    struct Run {
        std::string run_id = "run-001";
        std::uint64_t seed = 42;
        std::string clock = "wall";  // wall | fixed
        std::string fixed_time = "2024-01-01T00:00:00Z";
    } run;

    struct Annotation {
        std::string host = "127.0.0.1";
        int port = 8080;
        std::vector<std::string> graders;
    } annotation;

    fs::path base_dir = ".";

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    Clock clock() const { return run.clock == "fixed" ? Clock::fixed(run.fixed_time) : Clock::wall(); }

    HnswParams effective_hnsw() const {
        HnswParams p = hnsw;
        if (!hnsw_seed_set) p.rng_seed = run.seed;
        return p;
    }

    Rubric rubric() const {
        if (!grading.rubric.empty()) return rubric_by_name(grading.rubric);
        return grading.mode == GradeMode::legacy ? early_rubric() : default_rubric();
    }

    std::string grader_id() const { return grading.grader_id.empty() ? gateway.grader_model : grading.grader_id; }

    void validate() const {
        chunking.validate();
        effective_hnsw().validate();
        retrieval.validate();
        if (gateway.backend != "replay" && gateway.backend != "openai" && gateway.backend != "simulated")
            throw ValidationError("unknown backend '" + gateway.backend + "'");
        if (gateway.embedding_dim == 0) throw ValidationError("gateway.embedding_dim must be positive");
        if (gateway.max_concurrency == 0) throw ValidationError("gateway.max_concurrency must be positive");
        if (run.clock != "wall" && run.clock != "fixed") throw ValidationError("run.clock must be wall or fixed");
        if (analytics.plan != "median" && analytics.plan != "two-phase")
            throw ValidationError("analytics.plan must be median or two-phase");
        if (run.run_id.empty() || run.run_id.find('/') != std::string::npos)
            throw ValidationError("invalid run id '" + run.run_id + "'");
        (void)rubric();
    }

    /// Resolved configuration as written into run-meta.json.
    ojson to_json() const {
        return {
            {"paths",
             {{"corpus_dir", paths.corpus_dir},
              {"benchmark", paths.benchmark},
              {"index", paths.index},
              {"runs_root", paths.runs_root},
              {"replay_dir", paths.replay_dir},
              {"static_dir", paths.static_dir}}},
            {"chunking",
             {{"size", chunking.chunk_size}, {"overlap", chunking.overlap_fraction}, {"unit", to_string(chunking.unit)}}},
            {"hnsw",
             {{"m", effective_hnsw().max_neighbors},
              {"ef_construction", effective_hnsw().ef_construction},
              {"ef_search", effective_hnsw().ef_search},
              {"level_scale", effective_hnsw().effective_level_scale()},
              {"seed", effective_hnsw().rng_seed}}},
            {"gateway",
             {{"backend", gateway.backend},
              {"record", gateway.record},
              {"generator_model", gateway.generator_model},
              {"grader_model", gateway.grader_model},
              {"embedding_model", gateway.embedding_model},
              {"embedding_dim", gateway.embedding_dim},
              {"embed_seed", gateway.embed_seed},
              {"max_concurrency", gateway.max_concurrency},
              {"max_attempts", gateway.max_attempts},
              {"retry_base_ms", gateway.retry_base_ms}}},
            {"retrieval",
             {{"top_k", retrieval.top_k},
              {"context_separator", retrieval.context_separator},
              {"system_prompt", prompt.system},
              {"user_template", prompt.user_template}}},
            {"grading", {{"mode", to_string(grading.mode)}, {"rubric", rubric().name}, {"grader_id", grader_id()}}},
            {"analytics",
             {{"plan", analytics.plan},
              {"first_phase", analytics.first_phase},
              {"second_phase", analytics.second_phase},
              {"split", analytics.split}}},
            {"run", {{"run_id", run.run_id}, {"seed", run.seed}, {"clock", run.clock}}},
        };
    }
};

namespace detail {

inline std::string single(const CLI::ConfigItem& item) {
    if (item.inputs.size() != 1) throw ValidationError("config key '" + item.fullname() + "' expects a single value");
    return item.inputs[0];
}

inline long long to_int(const CLI::ConfigItem& item) {
    const std::string v = single(item);
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + item.fullname() + "' expects an integer, got '" + v + "'");
    }
}

inline std::size_t to_size(const CLI::ConfigItem& item) {
    const long long v = to_int(item);
    if (v < 0) throw ValidationError("config key '" + item.fullname() + "' must be >= 0");
    return static_cast<std::size_t>(v);
}

inline double to_real(const CLI::ConfigItem& item) {
    const std::string v = single(item);
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + item.fullname() + "' expects a number, got '" + v + "'");
    }
}

inline bool to_bool(const CLI::ConfigItem& item) {
    const std::string v = single(item);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key '" + item.fullname() + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

inline HarnessConfig parse_config(std::istream& in, fs::path base_dir = ".") {
    HarnessConfig c;
    c.base_dir = std::move(base_dir);
    using Item = CLI::ConfigItem;
    using detail::single, detail::to_int, detail::to_size, detail::to_real, detail::to_bool;
    const std::map<std::string, std::function<void(const Item&)>> setters = {
        {"paths.corpus_dir", [&](const Item& i) { c.paths.corpus_dir = single(i); }},
        {"paths.benchmark", [&](const Item& i) { c.paths.benchmark = single(i); }},
        {"paths.index", [&](const Item& i) { c.paths.index = single(i); }},
        {"paths.runs_root", [&](const Item& i) { c.paths.runs_root = single(i); }},
        {"paths.replay_dir", [&](const Item& i) { c.paths.replay_dir = single(i); }},
        {"paths.static_dir", [&](const Item& i) { c.paths.static_dir = single(i); }},
        {"chunking.size", [&](const Item& i) { c.chunking.chunk_size = to_size(i); }},
        {"chunking.overlap", [&](const Item& i) { c.chunking.overlap_fraction = to_real(i); }},
        {"chunking.unit", [&](const Item& i) { c.chunking.unit = parse_chunk_unit(single(i)); }},
        {"hnsw.m", [&](const Item& i) { c.hnsw.max_neighbors = static_cast<std::uint32_t>(to_size(i)); }},
        {"hnsw.ef_construction", [&](const Item& i) { c.hnsw.ef_construction = static_cast<std::uint32_t>(to_size(i)); }},
        {"hnsw.ef_search", [&](const Item& i) { c.hnsw.ef_search = static_cast<std::uint32_t>(to_size(i)); }},
        {"hnsw.level_scale", [&](const Item& i) { c.hnsw.level_scale = to_real(i); }},
        {"hnsw.seed",
         [&](const Item& i) {
             c.hnsw.rng_seed = to_size(i);
             c.hnsw_seed_set = true;
         }},
        {"gateway.backend", [&](const Item& i) { c.gateway.backend = single(i); }},
        {"gateway.record", [&](const Item& i) { c.gateway.record = to_bool(i); }},
        {"gateway.api_base", [&](const Item& i) { c.gateway.api_base = single(i); }},
        {"gateway.generator_model", [&](const Item& i) { c.gateway.generator_model = single(i); }},
        {"gateway.grader_model", [&](const Item& i) { c.gateway.grader_model = single(i); }},
        {"gateway.embedding_model", [&](const Item& i) { c.gateway.embedding_model = single(i); }},
        {"gateway.embedding_dim", [&](const Item& i) { c.gateway.embedding_dim = to_size(i); }},
        {"gateway.embed_seed", [&](const Item& i) { c.gateway.embed_seed = to_size(i); }},
        {"gateway.max_concurrency", [&](const Item& i) { c.gateway.max_concurrency = to_size(i); }},
        {"gateway.max_attempts", [&](const Item& i) { c.gateway.max_attempts = static_cast<int>(to_int(i)); }},
        {"gateway.retry_base_ms", [&](const Item& i) { c.gateway.retry_base_ms = to_real(i); }},
        {"gateway.timeout_seconds", [&](const Item& i) { c.gateway.timeout_seconds = static_cast<int>(to_int(i)); }},
        {"retrieval.top_k", [&](const Item& i) { c.retrieval.top_k = to_size(i); }},
        {"retrieval.context_separator", [&](const Item& i) { c.retrieval.context_separator = single(i); }},
        {"retrieval.system_prompt", [&](const Item& i) { c.prompt.system = single(i); }},
        {"retrieval.user_template", [&](const Item& i) { c.prompt.user_template = single(i); }},
        {"grading.mode", [&](const Item& i) { c.grading.mode = parse_grade_mode(single(i)); }},
        {"grading.rubric", [&](const Item& i) { c.grading.rubric = single(i); }},
        {"grading.grader_id", [&](const Item& i) { c.grading.grader_id = single(i); }},
        {"analytics.plan", [&](const Item& i) { c.analytics.plan = single(i); }},
        {"analytics.first_phase", [&](const Item& i) { c.analytics.first_phase = i.inputs; }},
        {"analytics.second_phase", [&](const Item& i) { c.analytics.second_phase = i.inputs; }},
        {"analytics.split", [&](const Item& i) { c.analytics.split = to_size(i); }},
        {"run.run_id", [&](const Item& i) { c.run.run_id = single(i); }},
        {"run.seed", [&](const Item& i) { c.run.seed = to_size(i); }},
        {"run.clock", [&](const Item& i) { c.run.clock = single(i); }},
        {"run.fixed_time", [&](const Item& i) { c.run.fixed_time = single(i); }},
        {"annotation.host", [&](const Item& i) { c.annotation.host = single(i); }},
        {"annotation.port", [&](const Item& i) { c.annotation.port = static_cast<int>(to_int(i)); }},
        {"annotation.graders", [&](const Item& i) { c.annotation.graders = i.inputs; }},
    };

    std::vector<Item> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    for (const auto& item : items) {
        // CLI11 emits bookkeeping entries for section headers.
        if (item.name == "++" || item.name == "--") continue;
        const std::string key = item.fullname();
        const auto it = setters.find(key);
        if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
        it->second(item);
    }
    return c;
}

inline HarnessConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config file not found: " + path.string());
    auto c = parse_config(in, path.has_parent_path() ? path.parent_path() : fs::path("."));
    c.validate();
    return c;
}

}  // namespace ragmark
