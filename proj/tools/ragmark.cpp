#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ragmark/harness.hpp"

namespace {

struct Overrides {
    std::string run_id;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string grader_model;
    std::string grader_id;
    std::optional<std::size_t> top_k;
};

ragmark::HarnessConfig load(const std::string& path, const Overrides& o) {
    auto cfg = ragmark::load_config(path);
    if (!o.run_id.empty()) cfg.run.run_id = o.run_id;
    if (o.seed) cfg.run.seed = *o.seed;
    if (!o.mode.empty()) cfg.grading.mode = ragmark::parse_grade_mode(o.mode);
    if (!o.grader_model.empty()) cfg.gateway.grader_model = o.grader_model;
    if (!o.grader_id.empty()) cfg.grading.grader_id = o.grader_id;
    if (o.top_k) cfg.retrieval.top_k = *o.top_k;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ragmark: retrieval-augmented answer evaluation"};
    app.require_subcommand(1);

    std::string config_path = "ragmark.toml";
    Overrides o;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "harness config (TOML)")->check(CLI::ExistingFile);
        sub->add_option("--run-id", o.run_id, "run identifier");
        sub->add_option("--seed", o.seed, "run seed");
        sub->add_flag("--force", force, "overwrite existing outputs");
    };

    std::string fixture_out = "fixture";
    std::uint64_t fixture_seed = 7;
    std::size_t fixture_items = 155, fixture_docs = 18;
    auto* fixture = app.add_subcommand("fixture", "write a synthetic benchmark, corpus and replay cache");
    fixture->add_option("-o,--out", fixture_out, "output directory");
    fixture->add_option("--seed", fixture_seed, "fixture seed");
    fixture->add_option("--items", fixture_items, "benchmark size")->check(CLI::PositiveNumber);
    fixture->add_option("--docs", fixture_docs, "corpus size")->check(CLI::PositiveNumber);
    fixture->add_flag("--force", force, "overwrite a non-empty directory");

    auto* ingest = app.add_subcommand("ingest", "chunk, embed and index the corpus");
    add_common(ingest);

    auto* answer = app.add_subcommand("answer", "answer every benchmark question");
    add_common(answer);
    answer->add_option("--top-k", o.top_k, "chunks retrieved per question")->check(CLI::PositiveNumber);

    auto* grade = app.add_subcommand("grade", "grade the run's answers with the LLM judge");
    add_common(grade);
    grade->add_option("--mode", o.mode, "plain | confidence | legacy");
    grade->add_option("--grader-model", o.grader_model, "judge model id");
    grade->add_option("--grader-id", o.grader_id, "grader id stored with each grade");

    std::optional<std::string> compare;
    auto* report = app.add_subcommand("report", "score distributions and agreement");
    add_common(report);
    report->add_option("--compare", compare, "extra grades file (e.g. human grades)");
    report->add_option("--grader-id", o.grader_id, "grader compared against the reference");

    std::optional<int> port;
    auto* human = app.add_subcommand("human", "human grading");
    human->require_subcommand(1);
    auto* serve = human->add_subcommand("serve", "serve the annotation API");
    add_common(serve);
    serve->add_option("--port", port, "listen port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : ragmark::kExitValidation;
    }

    try {
        if (fixture->parsed())
            return ragmark::cmd_fixture(fixture_out, fixture_seed, fixture_items, fixture_docs, force, std::cout);
        const auto cfg = load(config_path, o);
        if (ingest->parsed()) return ragmark::cmd_ingest(cfg, force, std::cout);
        if (answer->parsed()) return ragmark::cmd_answer(cfg, force, std::cout);
        if (grade->parsed()) return ragmark::cmd_grade(cfg, force, std::cout);
        if (report->parsed())
            return ragmark::cmd_report(cfg, compare ? std::optional<ragmark::fs::path>(*compare) : std::nullopt,
                                       force, std::cout);
        if (serve->parsed()) return ragmark::cmd_serve(cfg, port, std::cout);
    } catch (const ragmark::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ragmark::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ragmark::kExitPartial;
    }
    return ragmark::kExitOk;
}
