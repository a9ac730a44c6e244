#pragma once

// The harness commands behind the `ragmark` CLI. Each returns an exit code:
// 0 success, 1 validation error, 2 partial failure. Validation problems are
// thrown as ValidationError and mapped to 1 by the caller.

#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragmark/analytics.hpp"
#include "ragmark/annotation.hpp"
#include "ragmark/config.hpp"
#include "ragmark/dataset.hpp"
#include "ragmark/fixture.hpp"
#include "ragmark/gateway.hpp"
#include "ragmark/grader.hpp"
#include "ragmark/ingest.hpp"
#include "ragmark/openai_backend.hpp"
#include "ragmark/rag.hpp"

namespace ragmark {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitPartial = 2 };

inline std::shared_ptr<Backend> make_backend(const HarnessConfig& cfg) {
    std::shared_ptr<Backend> backend;
    const auto& g = cfg.gateway;
    if (g.backend == "replay") {
        backend = std::make_shared<ReplayBackend>(cfg.resolve(cfg.paths.replay_dir), g.embedding_dim, g.embed_seed);
    } else if (g.backend == "simulated") {
        backend = std::make_shared<SimulatedBackend>(g.embedding_dim, g.embed_seed);
    } else if (g.backend == "openai") {
        OpenAiSettings s;
        if (!g.api_base.empty()) s.api_base = g.api_base;
        s.embedding_model = g.embedding_model;
        s.timeout_seconds = g.timeout_seconds;
        backend = std::make_shared<OpenAiBackend>(OpenAiSettings::from_env(s));
    } else {
        throw ValidationError("unknown backend '" + g.backend + "'");
    }
    if (g.record) backend = std::make_shared<RecordingBackend>(backend, cfg.resolve(cfg.paths.replay_dir));
    return backend;
}

inline std::unique_ptr<Gateway> make_gateway(const HarnessConfig& cfg) {
    GatewayOptions o;
    o.max_attempts = cfg.gateway.max_attempts;
    o.retry_base_ms = cfg.gateway.retry_base_ms;
    o.max_concurrency = cfg.gateway.max_concurrency;
    o.seed = cfg.run.seed;
    return std::make_unique<Gateway>(make_backend(cfg), o);
}

inline fs::path run_dir(const HarnessConfig& cfg) { return cfg.resolve(cfg.paths.runs_root) / cfg.run.run_id; }

namespace detail {

inline void refuse_overwrite(const fs::path& p, bool force) {
    if (!force && fs::exists(p)) throw ValidationError(p.string() + " already exists (pass --force to overwrite)");
}

inline std::string template_file_name(GradeMode m) { return "grading-" + std::string(to_string(m)) + ".txt"; }

inline ojson write_template(const fs::path& dir, const std::string& name, const std::string& content) {
    write_file_atomic(dir / "templates" / name, content);
    return {{"file", "templates/" + name}, {"checksum", "fnv1a64:" + to_hex(fnv1a64(content))}};
}

inline void write_meta(const fs::path& dir, const ojson& meta) {
    write_file_atomic(dir / "run-meta.json", meta.dump(2) + "\n");
}

inline ojson read_meta(const fs::path& dir) {
    try {
        return ojson::parse(read_file(dir / "run-meta.json"));
    } catch (const ojson::exception& e) {
        throw ValidationError("malformed run-meta.json: " + std::string(e.what()));
    }
}

}  // namespace detail

inline int cmd_ingest(const HarnessConfig& cfg, bool force, std::ostream& log) {
    const auto docs = load_corpus_dir(cfg.resolve(cfg.paths.corpus_dir));
    if (docs.empty()) throw ValidationError("corpus directory contains no .txt documents");
    const fs::path out = cfg.resolve(cfg.paths.index);
    detail::refuse_overwrite(out, force);

    auto gateway = make_gateway(cfg);
    HnswIndex index(cfg.gateway.embedding_dim, cfg.effective_hnsw());
    const std::size_t entries = ingest_corpus(docs, cfg.chunking, *gateway, index, {cfg.gateway.embedding_model, 16});
    index.freeze();
    const std::string bytes = index.serialize();
    write_file_atomic(out, bytes);
    log << "documents: " << docs.size() << "\nchunks: " << entries << "\nentries: " << index.size()
        << "\nsnapshot: " << out.string() << "\nchecksum: " << to_hex(fnv1a64(bytes)) << "\n";
    return kExitOk;
}

inline int cmd_answer(const HarnessConfig& cfg, bool force, std::ostream& log) {
    const auto records = load_benchmark(cfg.resolve(cfg.paths.benchmark));
    const fs::path index_path = cfg.resolve(cfg.paths.index);
    if (!fs::exists(index_path)) throw ValidationError("index snapshot not found: " + index_path.string());
    const std::string index_bytes = read_file(index_path);
    std::istringstream index_in(index_bytes);
    HnswIndex index = HnswIndex::load(index_in);
    index.freeze();

    const fs::path dir = run_dir(cfg);
    detail::refuse_overwrite(dir / "answers.jsonl", force);
    fs::create_directories(dir);

    const Clock clock = cfg.clock();
    ojson templates = ojson::object();
    templates["generation_system"] = detail::write_template(dir, "generation-system.txt", cfg.prompt.system);
    templates["generation_user"] = detail::write_template(dir, "generation-user.txt", cfg.prompt.user_template);
    for (GradeMode m : {GradeMode::plain, GradeMode::confidence, GradeMode::legacy})
        templates["grading_" + std::string(to_string(m))] =
            detail::write_template(dir, detail::template_file_name(m), grading_template(m));

    ojson meta{{"run_id", cfg.run.run_id},
               {"created_at", clock.now()},
               {"config", cfg.to_json()},
               {"models",
                {{"generator", cfg.gateway.generator_model},
                 {"grader", cfg.gateway.grader_model},
                 {"embedding", cfg.gateway.embedding_model}}},
               {"seeds", {{"run", cfg.run.seed}, {"hnsw", cfg.effective_hnsw().rng_seed}, {"embed", cfg.gateway.embed_seed}}},
               {"index", {{"entries", index.size()}, {"checksum", "fnv1a64:" + to_hex(fnv1a64(index_bytes))}}},
               {"templates", templates}};
    detail::write_meta(dir, meta);

    auto gateway = make_gateway(cfg);
    RagSettings settings{cfg.retrieval, cfg.prompt, cfg.gateway.generator_model, cfg.gateway.embedding_model};
    const auto batch = answer_batch(records, index, *gateway, settings, clock, [&](std::size_t done, std::size_t total) {
        if (done % 25 == 0 || done == total) log << "  " << done << "/" << total << " answered\n";
    });
    write_file_atomic(dir / "answers.jsonl", answers_jsonl(batch.answers));

    log << "answered " << batch.answers.size() << "/" << records.size() << " questions into " << dir.string() << "\n";
    for (const auto& [qid, err] : batch.failures) log << "  failed " << qid << ": " << err << "\n";
    return batch.failures.empty() ? kExitOk : kExitPartial;
}

inline int cmd_grade(const HarnessConfig& cfg, bool force, std::ostream& log) {
    const auto records = load_benchmark(cfg.resolve(cfg.paths.benchmark));
    const fs::path dir = run_dir(cfg);
    if (!fs::exists(dir / "answers.jsonl")) throw ValidationError("no answers.jsonl in " + dir.string());
    const auto answers = load_answers(dir / "answers.jsonl");

    std::map<std::string, const GeneratedAnswer*> by_question;
    for (const auto& a : answers) by_question[a.question_id] = &a;
    std::set<std::string> known;
    for (const auto& r : records) known.insert(r.question_id);
    for (const auto& a : answers)
        if (!known.count(a.question_id))
            throw ValidationError("answers.jsonl has question_id '" + a.question_id + "' that is not in the benchmark");

    std::vector<const BenchmarkRecord*> items;
    for (const auto& r : records)
        if (by_question.count(r.question_id)) items.push_back(&r);
    if (items.size() < records.size())
        log << "note: " << records.size() - items.size() << " benchmark records have no answer and are skipped\n";

    const std::string grader_id = cfg.grader_id();
    std::vector<GradeRecord> kept;
    if (fs::exists(dir / "grades.jsonl")) {
        for (auto& g : load_grades(dir / "grades.jsonl")) {
            if (grader_id_of(g) == grader_id) {
                if (!force)
                    throw ValidationError("grades by '" + grader_id + "' already exist in " + dir.string() +
                                          " (pass --force to replace them)");
                continue;
            }
            kept.push_back(std::move(g));
        }
    }

    auto gateway = make_gateway(cfg);
    const GraderSpec spec{grader_id, cfg.gateway.grader_model, cfg.grading.mode, cfg.rubric()};
    const Clock clock = cfg.clock();
    std::vector<std::optional<GradeRecord>> slots(items.size());
    parallel_for(items.size(), cfg.gateway.max_concurrency, [&](std::size_t i) {
        slots[i] = grade_answer(*items[i], *by_question.at(items[i]->question_id), *gateway, spec, clock);
    });

    std::size_t failures = 0;
    for (auto& s : slots) {
        if (std::holds_alternative<GradeFailure>(*s)) ++failures;
        kept.push_back(std::move(*s));
    }
    write_file_atomic(dir / "grades.jsonl", grades_jsonl(kept));

    if (fs::exists(dir / "run-meta.json")) {
        ojson meta = detail::read_meta(dir);
        const std::string tmpl = grading_template(spec.mode);
        meta["grading"][grader_id] = {{"grader_model", spec.model_id},
                                      {"mode", to_string(spec.mode)},
                                      {"rubric", spec.rubric.name},
                                      {"template", "templates/" + detail::template_file_name(spec.mode)},
                                      {"template_checksum", "fnv1a64:" + to_hex(fnv1a64(tmpl))},
                                      {"graded_at", clock.now()}};
        detail::write_meta(dir, meta);
    }

    log << "graded " << items.size() - failures << "/" << items.size() << " answers as '" << grader_id << "' ("
        << to_string(spec.mode) << " mode)";
    if (failures) log << "; " << failures << " grading failures recorded";
    log << "\n";
    return failures == 0 ? kExitOk : kExitPartial;
}

inline int cmd_report(const HarnessConfig& cfg, const std::optional<fs::path>& compare, bool force, std::ostream& log) {
    const fs::path dir = run_dir(cfg);
    if (!fs::exists(dir / "grades.jsonl")) throw ValidationError("no grades.jsonl in " + dir.string());
    detail::refuse_overwrite(dir / "report.json", force);

    std::vector<std::string> question_ids;
    if (fs::exists(dir / "answers.jsonl")) {
        for (const auto& a : load_answers(dir / "answers.jsonl")) question_ids.push_back(a.question_id);
    }
    auto grades = load_grades(dir / "grades.jsonl");
    if (question_ids.empty()) {
        for (const auto& g : grades)
            if (std::find(question_ids.begin(), question_ids.end(), question_id_of(g)) == question_ids.end())
                question_ids.push_back(question_id_of(g));
    }
    std::set<std::string> run_graders;
    for (const auto& g : grades) run_graders.insert(grader_id_of(g));

    // Graders from a --compare file form the reference; ids that clash with
    // the run's own graders get a suffix.
    std::vector<std::string> compare_graders;
    if (compare) {
        if (!fs::exists(*compare)) throw ValidationError("comparison grades not found: " + compare->string());
        for (auto g : load_grades(*compare)) {
            std::visit(
                [&](auto& r) {
                    if (run_graders.count(r.grader_id)) r.grader_id += "@compare";
                    if (std::find(compare_graders.begin(), compare_graders.end(), r.grader_id) == compare_graders.end())
                        compare_graders.push_back(r.grader_id);
                },
                g);
            grades.push_back(std::move(g));
        }
    }
    if (std::none_of(grades.begin(), grades.end(), [](const auto& g) { return std::holds_alternative<GradeScore>(g); }))
        throw ValidationError("no valid grades to report on");

    const GradeMatrix matrix = GradeMatrix::from_records(question_ids, grades);
    const auto& graders = matrix.graders();
    std::string primary = graders.front();
    if (matrix.has_grader(cfg.grader_id()))
        primary = cfg.grader_id();
    else if (!cfg.grading.grader_id.empty())
        throw ValidationError("grader '" + cfg.grading.grader_id + "' has no grades in this run");

    AgreementReport report;
    report.n_items = question_ids.size();
    std::map<std::string, std::size_t> failures;
    for (const auto& g : grades)
        if (std::holds_alternative<GradeFailure>(g)) ++failures[grader_id_of(g)];
    for (const auto& g : graders) report.graders[g] = summarize(matrix.column(g), failures[g]);

    std::vector<std::string> others = compare_graders;
    if (others.empty())
        for (const auto& g : graders)
            if (g != primary) others.push_back(g);

    const ScoreVector a = matrix.column(primary);
    std::optional<ScoreVector> reference;
    std::string reference_name;
    if (others.size() == 1) {
        reference = matrix.column(others.front());
        reference_name = others.front();
    } else if (others.size() > 1) {
        AggregationPlan plan = cfg.analytics.plan == "two-phase"
                                   ? two_phase_plan(cfg.analytics.first_phase, cfg.analytics.second_phase, cfg.run.seed,
                                                    cfg.analytics.split, question_ids.size())
                                   : median_plan(others, question_ids.size());
        plan.seed = cfg.run.seed;
        reference = apply_plan(matrix, plan).scores;
        reference_name = "reference";
        report.graders[reference_name] = summarize(*reference);
    }
    if (reference) {
        report.comparison = Comparison{primary, reference_name, agreement_counts(a, *reference, false),
                                       agreement_counts(a, *reference, true)};
    }

    std::vector<GradeScore> confident;
    bool all_confident = true;
    for (const auto& g : grades) {
        const auto* s = std::get_if<GradeScore>(&g);
        if (!s || s->grader_id != primary) continue;
        if (s->confidence)
            confident.push_back(*s);
        else
            all_confident = false;
    }
    if (all_confident && !confident.empty()) report.heatmap = confidence_heatmap(confident);

    ojson rj = report.to_json();
    if (reference_name == "reference") rj["reference_plan"] = cfg.analytics.plan;
    write_file_atomic(dir / "report.json", rj.dump(2) + "\n");

    std::string csv;
    if (reference) {
        csv = "question_id," + detail::csv_field(primary) + "," + detail::csv_field(reference_name) +
              ",verdict_a,verdict_b,level_match,binary_match\n";
        for (std::size_t i = 0; i < question_ids.size(); ++i) {
            auto cell = [](const std::optional<int>& s) { return s ? std::to_string(*s) : std::string(); };
            auto verdict = [](const std::optional<int>& s) { return s ? std::string(to_string(to_binary(*s))) : ""; };
            const auto& ra = a[i];
            const auto& rb = (*reference)[i];
            const bool both = ra && rb;
            csv += detail::csv_field(question_ids[i]) + "," + cell(ra) + "," + cell(rb) + "," + verdict(ra) + "," +
                   verdict(rb) + "," + (both ? (*ra == *rb ? "1" : "0") : "") + "," +
                   (both ? (to_binary(*ra) == to_binary(*rb) ? "1" : "0") : "") + "\n";
        }
    } else {
        csv = "question_id,score,verdict\n";
        for (std::size_t i = 0; i < question_ids.size(); ++i)
            csv += detail::csv_field(question_ids[i]) + "," + (a[i] ? std::to_string(*a[i]) : "") + "," +
                   (a[i] ? std::string(to_string(to_binary(*a[i]))) : "") + "\n";
    }
    write_file_atomic(dir / "report.csv", csv);

    std::string dist = "grader,score,count,fraction\n";
    for (const auto& [g, s] : report.graders)
        for (int lvl = 1; lvl <= 5; ++lvl) {
            char frac[32];
            std::snprintf(frac, sizeof(frac), "%.6f", s.histogram.fraction(lvl));
            dist += detail::csv_field(g) + "," + std::to_string(lvl) + "," + std::to_string(s.histogram.count(lvl)) +
                    "," + frac + "\n";
        }
    write_file_atomic(dir / "distribution.csv", dist);

    if (report.heatmap) {
        std::string hm = "score,bucket,count\n";
        for (int score = 1; score <= 5; ++score)
            for (int b = 0; b < ConfidenceHeatmap::kBuckets; ++b)
                hm += std::to_string(score) + "," + ConfidenceHeatmap::bucket_label(b) + "," +
                      std::to_string(report.heatmap->at(score, b)) + "\n";
        write_file_atomic(dir / "heatmap.csv", hm);
    }

    log << "items: " << report.n_items << "\n";
    for (const auto& [g, s] : report.graders) {
        log << "grader " << g << ": " << s.histogram.total() << " graded";
        if (s.reject_rate) log << ", reject rate " << format_percent(*s.reject_rate);
        if (s.failures) log << ", " << s.failures << " failures";
        log << "\n";
    }
    if (report.comparison) {
        const auto& c = *report.comparison;
        log << "per-level agreement (" << c.a << " vs " << c.b << "): "
            << format_ratio_percent(c.level.matches, c.level.compared) << " (" << c.level.matches << "/"
            << c.level.compared << ")\n";
        log << "binary agreement (" << c.a << " vs " << c.b << "): "
            << format_ratio_percent(c.binary.matches, c.binary.compared) << " (" << c.binary.matches << "/"
            << c.binary.compared << ")\n";
        if (c.level.excluded) log << "excluded: " << c.level.excluded << " items missing a grade\n";
    }
    return kExitOk;
}

/// Serves the annotation API for the configured run until interrupted.
inline int cmd_serve(const HarnessConfig& cfg, std::optional<int> port, std::ostream& log) {
    if (cfg.annotation.graders.empty()) throw ValidationError("annotation.graders must list at least one grader");
    const fs::path dir = run_dir(cfg);
    if (!fs::exists(dir / "answers.jsonl")) throw ValidationError("no answers.jsonl in " + dir.string());
    const auto records = load_benchmark(cfg.resolve(cfg.paths.benchmark));
    const auto answers = load_answers(dir / "answers.jsonl");
    AnnotationStore store(records, answers, cfg.annotation.graders, dir / "grades.jsonl", default_rubric(), cfg.clock());
    AnnotationService service(store, cfg.resolve(cfg.paths.static_dir));
    const int p = port.value_or(cfg.annotation.port);
    log << "serving " << store.size() << " items for " << cfg.annotation.graders.size() << " graders on http://"
        << cfg.annotation.host << ":" << p << "/\n";
    log.flush();
    service.listen(cfg.annotation.host, p);
    return kExitOk;
}

inline std::string fixture_config_toml(std::uint64_t seed) {
    return "# Synthetic fixture: replay backend, fixed clock.\n"
           "[paths]\n"
           "corpus_dir = \"corpus\"\n"
           "benchmark = \"benchmark.jsonl\"\n"
           "index = \"index.rgmk\"\n"
           "runs_root = \"runs\"\n"
           "replay_dir = \"replay\"\n"
           "\n[chunking]\nsize = 1000\noverlap = 0.25\nunit = \"character\"\n"
           "\n[hnsw]\nm = 16\nef_construction = 200\nef_search = 64\n"
           "\n[gateway]\nbackend = \"replay\"\ngenerator_model = \"gpt-4\"\ngrader_model = \"gpt-4\"\n"
           "embedding_model = \"text-embedding-ada-002\"\nembedding_dim = 64\nmax_concurrency = 4\n"
           "\n[retrieval]\ntop_k = 3\n"
           "\n[grading]\nmode = \"plain\"\n"
           "\n[analytics]\nplan = \"two-phase\"\nfirst_phase = [\"h1\", \"h2\", \"h3\"]\nsecond_phase = [\"h4\", \"h5\"]\n"
           "split = 52\n"
           "\n[run]\nrun_id = \"run-001\"\nseed = " +
           std::to_string(seed) +
           "\nclock = \"fixed\"\nfixed_time = \"2024-01-01T00:00:00Z\"\n"
           "\n[annotation]\nhost = \"127.0.0.1\"\nport = 8080\ngraders = [\"h1\", \"h2\", \"h3\", \"h4\", \"h5\"]\n";
}

/// Writes a synthetic benchmark, corpus, human grades and config into `out`,
/// then fills `out/replay` by running ingest, answer and all three grading
/// modes once against the simulated model.
inline int cmd_fixture(const fs::path& out, std::uint64_t seed, std::size_t n_items, std::size_t n_docs, bool force,
                       std::ostream& log) {
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw ValidationError(out.string() + " is not empty (pass --force to overwrite)");
    fs::create_directories(out);
    fs::remove_all(out / "replay");
    fs::remove_all(out / "corpus");

    const auto records = synthetic_benchmark(n_items, seed);
    write_benchmark(out / "benchmark.jsonl", records);
    for (const auto& d : synthetic_corpus(n_docs, seed)) write_file_atomic(out / "corpus" / d.name, d.text);
    write_file_atomic(out / "ragmark.toml", fixture_config_toml(seed));

    HarnessConfig cfg = load_config(out / "ragmark.toml");
    write_file_atomic(out / "human-grades.jsonl",
                      grades_jsonl(synthetic_human_grades(records, cfg.analytics.first_phase, cfg.analytics.second_phase,
                                                          cfg.analytics.split, seed, cfg.clock())));

    cfg.gateway.backend = "simulated";
    cfg.gateway.record = true;
    cfg.paths.index = ".record/index.rgmk";
    cfg.paths.runs_root = ".record/runs";
    std::ostringstream quiet;
    cmd_ingest(cfg, true, quiet);
    cmd_answer(cfg, true, quiet);
    for (GradeMode m : {GradeMode::plain, GradeMode::confidence, GradeMode::legacy}) {
        cfg.grading.mode = m;
        cmd_grade(cfg, true, quiet);
    }
    fs::remove_all(out / ".record");

    std::size_t cached = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(out / "replay")) ++cached;
    log << "wrote " << records.size() << " benchmark records, " << n_docs << " corpus documents and " << cached
        << " replay entries to " << out.string() << "\n";
    return kExitOk;
}

}  // namespace ragmark
