#include <gtest/gtest.h>

#include "ragmark/analytics.hpp"
#include "support/oracles.hpp"

using namespace ragmark;

namespace {

ScoreVector sv(std::initializer_list<int> xs) { return ScoreVector(xs.begin(), xs.end()); }

/// a and b over n items with exactly `matches` equal positions.
std::pair<ScoreVector, ScoreVector> with_matches(std::size_t n, std::size_t matches) {
    ScoreVector a(n, 4), b(n, 4);
    for (std::size_t i = matches; i < n; ++i) b[i] = 3;
    return {a, b};
}

}  // namespace

TEST(Median, Examples) {
    EXPECT_EQ(median_vote(std::vector<int>{2, 4, 5}), 4);
    EXPECT_EQ(median_vote(std::vector<int>{5}), 5);
    EXPECT_EQ(median_vote(std::vector<int>{2, 4}), oracle::lower_median({2, 4}));
    EXPECT_EQ(median_vote(std::vector<int>{2, 4}), 2);
    EXPECT_THROW(median_vote(std::vector<int>{}), ValidationError);
    EXPECT_THROW(median_vote(std::vector<int>{0, 3}), ValidationError);
}

TEST(Median, PermutationInvariantAndBounded) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> s(1, 5);
    for (int t = 0; t < 10000; ++t) {
        std::vector<int> v{s(rng), s(rng), s(rng)};
        const int m = median_vote(v);
        ASSERT_EQ(m, oracle::lower_median(v));
        ASSERT_GE(m, *std::min_element(v.begin(), v.end()));
        ASSERT_LE(m, *std::max_element(v.begin(), v.end()));
        std::sort(v.begin(), v.end());
        do ASSERT_EQ(median_vote(v), m);
        while (std::next_permutation(v.begin(), v.end()));
    }
}

TEST(Sample, SingleGraderAndDeterminism) {
    EXPECT_EQ(sample_vote({{"h4", 3}}, 1).score, 3);
    EXPECT_EQ(sample_vote({{"h4", 3}, {"h5", std::nullopt}}, 1).grader, "h4");
    const std::map<std::string, std::optional<int>> two{{"h4", 2}, {"h5", 5}};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto a = sample_vote(two, seed), b = sample_vote(two, seed);
        EXPECT_EQ(a.grader, b.grader);
        EXPECT_EQ(a.score, b.score);
    }
    EXPECT_THROW(sample_vote({{"h4", std::nullopt}}, 1), ValidationError);
}

TEST(Sample, UniformOverTenThousandItems) {
    std::size_t first = 0;
    const std::map<std::string, std::optional<int>> two{{"h4", 1}, {"h5", 5}};
    for (std::uint64_t i = 0; i < 10000; ++i)
        first += sample_vote(two, splitmix64(2024 ^ fnv1a64("Q" + std::to_string(i)))).grader == "h4";
    EXPECT_NEAR(static_cast<double>(first) / 10000.0, 0.5, 0.02);
}

TEST(Agreement, Examples) {
    const auto a = sv({1, 2, 3, 4, 5, 1, 2, 3, 4, 5});
    EXPECT_EQ(agreement_rate(a, a), 1.0);
    EXPECT_EQ(agreement_rate(sv({1, 2, 3}), sv({2, 3, 4})), 0.0);
    const auto [x, y] = with_matches(155, 46);
    EXPECT_DOUBLE_EQ(agreement_rate(x, y), 46.0 / 155.0);
    EXPECT_THROW(agreement_rate(sv({1}), sv({1, 2})), ValidationError);
    EXPECT_THROW(agreement_rate({std::nullopt}, {3}), ValidationError);
}

TEST(Agreement, MissingExcludedPairwise) {
    const ScoreVector a{1, std::nullopt, 3, 4}, b{1, 2, std::nullopt, 5};
    const auto c = agreement_counts(a, b, false);
    EXPECT_EQ(c.compared, 2u);
    EXPECT_EQ(c.excluded, 2u);
    EXPECT_EQ(c.matches, 1u);
    EXPECT_EQ(binary_agreement_rate(a, b), 1.0);
}

TEST(Agreement, BinaryExamples) {
    EXPECT_EQ(binary_agreement_rate(sv({4, 5, 4}), sv({5, 4, 5})), 1.0);
    EXPECT_EQ(binary_agreement_rate(sv({1}), sv({3})), 1.0);
    ScoreVector a(155, 4), b(155, 4);
    for (std::size_t i = 128; i < 155; ++i) b[i] = 2;
    EXPECT_DOUBLE_EQ(binary_agreement_rate(a, b), 128.0 / 155.0);
}

TEST(Agreement, PropertiesOnRandomPairs) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> s(1, 5);
    for (int t = 0; t < 500; ++t) {
        ScoreVector a(30), b(30);
        for (std::size_t i = 0; i < 30; ++i) {
            a[i] = s(rng);
            b[i] = s(rng);
        }
        ASSERT_EQ(agreement_rate(a, a), 1.0);
        ASSERT_EQ(agreement_rate(a, b), agreement_rate(b, a));
        ASSERT_GE(binary_agreement_rate(a, b), agreement_rate(a, b));
    }
}

TEST(Percent, PublishedFiguresFromUniqueCounts) {
    struct Case {
        std::uint64_t n;
        std::uint64_t printed;  // tenths of a percent, or whole percent when decimals == 0
        int decimals;
        const char* text;
    };
    for (const Case& c : {Case{128, 826, 1, "82.6%"}, Case{46, 297, 1, "29.7%"}, Case{57, 368, 1, "36.8%"},
                          Case{37, 239, 1, "23.9%"}, Case{124, 80, 0, "80%"}}) {
        const auto candidates = oracle::counts_rounding_to(155, c.printed, c.decimals);
        ASSERT_EQ(candidates, std::vector<std::uint64_t>{c.n}) << c.text;
        EXPECT_EQ(format_ratio_percent(c.n, 155, c.decimals), c.text);
    }
    EXPECT_EQ(format_ratio_percent(124, 155, 1), "80.0%");
}

TEST(Percent, AgreesWithOracleEverywhere) {
    for (std::uint64_t d : {1u, 3u, 7u, 155u, 1000u})
        for (std::uint64_t n = 0; n <= d; ++n)
            for (int decimals : {0, 1, 2}) {
                const auto text = format_ratio_percent(n, d, decimals);
                std::string digits;
                for (char ch : text)
                    if (std::isdigit(static_cast<unsigned char>(ch))) digits += ch;
                ASSERT_TRUE(oracle::rounds_to(n, d, std::stoull(digits), decimals)) << n << "/" << d << " " << text;
            }
    EXPECT_EQ(format_ratio_percent(1, 8, 2), "12.50%");
    EXPECT_EQ(format_ratio_percent(1, 16, 1), "6.3%");
    EXPECT_EQ(format_percent(0.5), "50.0%");
    EXPECT_THROW(format_ratio_percent(1, 0), ValidationError);
}

TEST(Distribution, Examples) {
    const auto h = score_distribution(std::vector<int>{4, 4, 5});
    EXPECT_EQ(h.count(4), 2u);
    EXPECT_EQ(h.count(5), 1u);
    EXPECT_EQ(h.count(1), 0u);
    EXPECT_EQ(h.total(), 3u);
    EXPECT_EQ(score_distribution(std::vector<int>{}).total(), 0u);

    std::vector<int> llama(155, 1);
    std::fill(llama.begin(), llama.begin() + 124, 4);
    const auto lh = score_distribution(llama);
    EXPECT_DOUBLE_EQ(lh.fraction(4), 0.8);
    EXPECT_EQ(format_ratio_percent(lh.count(4), lh.total(), 0), "80%");
}

TEST(RejectRate, Examples) {
    EXPECT_EQ(reject_rate(std::vector<int>{5, 5, 5}), 0.0);
    EXPECT_EQ(reject_rate(std::vector<int>{1, 1}), 1.0);
    EXPECT_DOUBLE_EQ(reject_rate(std::vector<int>{1, 2, 3, 4, 5}), 3.0 / 5.0);
    EXPECT_THROW(reject_rate(std::vector<int>{}), ValidationError);
}

TEST(RejectRate, CandidatesForPrintedIntegers) {
    EXPECT_EQ(oracle::counts_rounding_to(155, 77, 0), (std::vector<std::uint64_t>{119, 120}));
    EXPECT_EQ(oracle::counts_rounding_to(155, 72, 0), (std::vector<std::uint64_t>{111, 112}));
}

TEST(Heatmap, Examples) {
    auto grade = [](int score, int conf) { return GradeScore{"q", "g", score, conf, "", "", {}, ""}; };
    const std::vector<GradeScore> uniform(6, grade(4, 80));
    const auto h = confidence_heatmap(uniform);
    ASSERT_EQ(h.cells.size(), 1u);
    EXPECT_EQ(h.at(4, 8), 6u);
    EXPECT_TRUE(confidence_heatmap(std::vector<GradeScore>{}).empty());

    const std::vector<GradeScore> mixed{grade(4, 80), grade(4, 85), grade(3, 100), grade(1, 9)};
    const auto m = confidence_heatmap(mixed);
    // Hand tabulation: (4,[80,90)) x2, (3,[90,100]) x1, (1,[0,10)) x1.
    EXPECT_EQ(m.at(4, 8), 2u);
    EXPECT_EQ(m.at(3, 9), 1u);
    EXPECT_EQ(m.at(1, 0), 1u);
    EXPECT_EQ(m.cells.size(), 3u);
    EXPECT_EQ(ConfidenceHeatmap::bucket_label(9), "[90,100]");
    EXPECT_EQ(ConfidenceHeatmap::bucket_label(0), "[0,10)");

    std::vector<GradeScore> missing{grade(4, 80)};
    missing[0].confidence.reset();
    EXPECT_THROW(confidence_heatmap(missing), ValidationError);
}

namespace {

GradeMatrix synthetic_matrix(std::size_t n, std::uint64_t seed) {
    std::vector<std::string> qids;
    for (std::size_t i = 0; i < n; ++i) qids.push_back("Q" + std::to_string(i + 1));
    GradeMatrix m(qids, {"h1", "h2", "h3", "h4", "h5"});
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> s(1, 5);
    for (std::size_t i = 0; i < n; ++i) {
        const bool first_phase = i < 52;
        for (const char* g : first_phase ? std::vector<const char*>{"h1", "h2", "h3"} : std::vector<const char*>{"h4", "h5"})
            m.set(qids[i], g, s(rng));
    }
    return m;
}

}  // namespace

TEST(Plans, TwoPhaseMatchesManualAggregation) {
    const auto m = synthetic_matrix(155, 12);
    const auto plan = two_phase_plan({"h1", "h2", "h3"}, {"h4", "h5"}, 99);
    const auto merged = apply_plan(m, plan);
    ASSERT_EQ(merged.scores.size(), 155u);
    const auto h1 = m.column("h1"), h2 = m.column("h2"), h3 = m.column("h3"), h4 = m.column("h4"), h5 = m.column("h5");
    std::size_t picked_h4 = 0;
    for (std::size_t i = 0; i < 155; ++i) {
        if (i < 52) {
            EXPECT_EQ(merged.scores[i], oracle::lower_median({*h1[i], *h2[i], *h3[i]}));
            EXPECT_EQ(merged.source[i], "median");
        } else {
            ASSERT_TRUE(merged.source[i] == "h4" || merged.source[i] == "h5");
            EXPECT_EQ(merged.scores[i], merged.source[i] == "h4" ? h4[i] : h5[i]);
            picked_h4 += merged.source[i] == "h4";
        }
    }
    EXPECT_GT(picked_h4, 20u);
    EXPECT_LT(picked_h4, 83u);
    EXPECT_EQ(apply_plan(m, plan).scores, merged.scores);
    EXPECT_EQ(apply_plan(m, plan).source, merged.source);
    auto other = plan;
    other.seed = 100;
    EXPECT_NE(apply_plan(m, other).source, merged.source);
}

TEST(Plans, MedianPlanAndErrors) {
    const auto m = synthetic_matrix(52, 4);
    const auto merged = apply_plan(m, median_plan({"h1", "h2", "h3"}, 52));
    for (std::size_t i = 0; i < 52; ++i)
        EXPECT_EQ(merged.scores[i], oracle::lower_median({*m.get(i, 0), *m.get(i, 1), *m.get(i, 2)}));
    EXPECT_THROW(apply_plan(m, median_plan({"h9"}, 52)), ValidationError);
}

TEST(Matrix, FromRecordsSkipsFailuresAndRejectsUnknownItems) {
    std::vector<GradeRecord> recs{GradeScore{"Q1", "a", 4, std::nullopt, "", "", {}, ""},
                                  GradeFailure{"Q2", "a", "unparseable", "", ""},
                                  GradeScore{"Q2", "b", 2, std::nullopt, "", "", {}, ""}};
    const auto m = GradeMatrix::from_records({"Q1", "Q2"}, recs);
    EXPECT_EQ(m.graders(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(m.column("a"), (ScoreVector{4, std::nullopt}));
    EXPECT_EQ(m.column("b"), (ScoreVector{std::nullopt, 2}));
    recs.push_back(GradeScore{"Q3", "a", 1, std::nullopt, "", "", {}, ""});
    EXPECT_THROW(GradeMatrix::from_records({"Q1", "Q2"}, recs), ValidationError);
}

TEST(Report, JsonFieldsAndOmissions) {
    AgreementReport r;
    r.n_items = 3;
    r.graders["gpt-4"] = summarize(sv({4, 2, 5}), 1);
    auto j = r.to_json();
    EXPECT_FALSE(j.contains("per_level_agreement"));
    EXPECT_FALSE(j.contains("binary_agreement"));
    EXPECT_EQ(j["grading_failures"]["gpt-4"], 1);
    EXPECT_EQ(j["distributions"]["gpt-4"]["counts"]["4"], 1);

    const auto [a, b] = with_matches(155, 46);
    r.comparison = Comparison{"gpt-4", "human", agreement_counts(a, b, false), agreement_counts(a, b, true)};
    j = r.to_json();
    EXPECT_EQ(j["per_level_agreement_text"], "29.7%");
    EXPECT_EQ(j["per_level_matches"], 46);
    EXPECT_EQ(j["binary_agreement"], 46.0 / 155.0);
}
