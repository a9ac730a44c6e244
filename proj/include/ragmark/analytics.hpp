#pragma once

// Agreement and distribution statistics over grader scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragmark/grader.hpp"
#include "ragmark/records.hpp"

namespace ragmark {

/// Scores aligned by item; nullopt where a grader has no (valid) grade.
using ScoreVector = std::vector<std::optional<int>>;

class GradeMatrix {
public:
    GradeMatrix(std::vector<std::string> question_ids, std::vector<std::string> graders)
        : question_ids_(std::move(question_ids)), graders_(std::move(graders)) {
        for (std::size_t i = 0; i < question_ids_.size(); ++i)
            if (!row_.emplace(question_ids_[i], i).second)
                throw ValidationError("duplicate question_id '" + question_ids_[i] + "' in grade matrix");
        for (std::size_t j = 0; j < graders_.size(); ++j)
            if (!col_.emplace(graders_[j], j).second)
                throw ValidationError("duplicate grader '" + graders_[j] + "' in grade matrix");
        cells_.assign(question_ids_.size() * graders_.size(), std::nullopt);
    }

    /// Builds a matrix over `question_ids`; graders appear in first-seen order.
    /// Failure records leave their cell empty.
    static GradeMatrix from_records(std::vector<std::string> question_ids, const std::vector<GradeRecord>& records) {
        std::vector<std::string> graders;
        for (const auto& r : records)
            if (std::find(graders.begin(), graders.end(), grader_id_of(r)) == graders.end())
                graders.push_back(grader_id_of(r));
        GradeMatrix m(std::move(question_ids), std::move(graders));
        for (const auto& r : records) {
            if (const auto* g = std::get_if<GradeScore>(&r)) {
                if (!m.row_.count(g->question_id))
                    throw ValidationError("grade for unknown question_id '" + g->question_id + "'");
                m.set(g->question_id, g->grader_id, g->score);
            }
        }
        return m;
    }

    const std::vector<std::string>& question_ids() const { return question_ids_; }
    const std::vector<std::string>& graders() const { return graders_; }
    bool has_grader(const std::string& g) const { return col_.count(g) != 0; }

    void set(const std::string& question_id, const std::string& grader, int score) {
        if (score < 1 || score > 5) throw ValidationError("score " + std::to_string(score) + " outside 1..5");
        cells_[index(question_id, grader)] = score;
    }

    std::optional<int> get(std::size_t row, std::size_t col) const { return cells_.at(row * graders_.size() + col); }

    ScoreVector column(const std::string& grader) const {
        const auto it = col_.find(grader);
        if (it == col_.end()) throw ValidationError("unknown grader '" + grader + "'");
        ScoreVector out(question_ids_.size());
        for (std::size_t i = 0; i < question_ids_.size(); ++i) out[i] = get(i, it->second);
        return out;
    }

private:
    std::size_t index(const std::string& q, const std::string& g) const {
        const auto r = row_.find(q);
        if (r == row_.end()) throw ValidationError("unknown question_id '" + q + "'");
        const auto c = col_.find(g);
        if (c == col_.end()) throw ValidationError("unknown grader '" + g + "'");
        return r->second * graders_.size() + c->second;
    }

    std::vector<std::string> question_ids_;
    std::vector<std::string> graders_;
    std::unordered_map<std::string, std::size_t> row_, col_;
    std::vector<std::optional<int>> cells_;
};

/// Median score; for an even count, the lower of the two middle values.
inline int median_vote(std::span<const int> scores) {
    if (scores.empty()) throw ValidationError("median of zero scores");
    std::vector<int> s(scores.begin(), scores.end());
    for (int v : s)
        if (v < 1 || v > 5) throw ValidationError("score " + std::to_string(v) + " outside 1..5");
    std::sort(s.begin(), s.end());
    return s[(s.size() - 1) / 2];
}

struct SampledScore {
    int score = 0;
    std::string grader;
};

/// Picks one present grade uniformly at random. Graders are considered in
/// key order, so the pick depends only on the seed and the set of graders.
inline SampledScore sample_vote(const std::map<std::string, std::optional<int>>& scores_by_grader, std::uint64_t seed) {
    std::vector<std::pair<std::string, int>> present;
    for (const auto& [g, s] : scores_by_grader)
        if (s) present.emplace_back(g, *s);
    if (present.empty()) throw ValidationError("no grades to sample from");
    std::uint64_t state = seed;
    auto next = [&state] { return splitmix64(state++); };
    const auto& pick = present[uniform_index(next, present.size())];
    return {pick.second, pick.first};
}

struct AgreementCounts {
    std::size_t matches = 0;
    std::size_t compared = 0;
    std::size_t excluded = 0;  // positions where either side is missing

    double rate() const { return static_cast<double>(matches) / static_cast<double>(compared); }
};

inline AgreementCounts agreement_counts(const ScoreVector& a, const ScoreVector& b, bool binary) {
    if (a.size() != b.size())
        throw ValidationError("score vectors differ in length (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    AgreementCounts c;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i] || !b[i]) {
            ++c.excluded;
            continue;
        }
        ++c.compared;
        const bool same = binary ? to_binary(*a[i]) == to_binary(*b[i]) : *a[i] == *b[i];
        if (same) ++c.matches;
    }
    if (c.compared == 0) throw ValidationError("no comparable positions between score vectors");
    return c;
}

/// Fraction of jointly graded items with identical scores.
inline double agreement_rate(const ScoreVector& a, const ScoreVector& b) { return agreement_counts(a, b, false).rate(); }

/// Same, after mapping both sides to accept/reject.
inline double binary_agreement_rate(const ScoreVector& a, const ScoreVector& b) {
    return agreement_counts(a, b, true).rate();
}

inline ScoreVector to_score_vector(std::span<const int> scores) { return ScoreVector(scores.begin(), scores.end()); }

struct Histogram {
    std::array<std::size_t, 5> counts{};  // counts[0] is score 1

    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
    std::size_t count(int score) const { return counts.at(static_cast<std::size_t>(score - 1)); }
    double fraction(int score) const {
        const auto t = total();
        return t == 0 ? 0.0 : static_cast<double>(count(score)) / static_cast<double>(t);
    }
};

inline Histogram score_distribution(const ScoreVector& scores) {
    Histogram h;
    for (const auto& s : scores) {
        if (!s) continue;
        if (*s < 1 || *s > 5) throw ValidationError("score " + std::to_string(*s) + " outside 1..5");
        ++h.counts[static_cast<std::size_t>(*s - 1)];
    }
    return h;
}

inline Histogram score_distribution(std::span<const int> scores) { return score_distribution(to_score_vector(scores)); }

inline double reject_rate(const Histogram& h) {
    if (h.total() == 0) throw ValidationError("reject rate of zero scores");
    return static_cast<double>(h.count(1) + h.count(2) + h.count(3)) / static_cast<double>(h.total());
}

inline double reject_rate(std::span<const int> scores) { return reject_rate(score_distribution(scores)); }

/// Joint counts of (score, confidence bucket). Buckets are ten points wide;
/// the last one, [90,100], also holds 100.
struct ConfidenceHeatmap {
    static constexpr int kBuckets = 10;
    std::map<std::pair<int, int>, std::size_t> cells;  // (score, bucket) -> count

    static int bucket_of(int confidence) { return std::min(confidence / 10, kBuckets - 1); }
    static std::string bucket_label(int bucket) {
        const int lo = bucket * 10;
        return bucket == kBuckets - 1 ? "[90,100]" : "[" + std::to_string(lo) + "," + std::to_string(lo + 10) + ")";
    }
    std::size_t at(int score, int bucket) const {
        const auto it = cells.find({score, bucket});
        return it == cells.end() ? 0 : it->second;
    }
    bool empty() const { return cells.empty(); }
};

inline ConfidenceHeatmap confidence_heatmap(std::span<const GradeScore> grades) {
    ConfidenceHeatmap h;
    for (const auto& g : grades) {
        validate_grade(g);
        if (!g.confidence)
            throw ValidationError("grade for '" + g.question_id + "' by '" + g.grader_id + "' has no confidence");
        ++h.cells[{g.score, ConfidenceHeatmap::bucket_of(*g.confidence)}];
    }
    return h;
}

/// n/d as a percentage, rounded half-up to `decimals` places in exact integer
/// arithmetic: 128/155 -> "82.6%".
inline std::string format_ratio_percent(std::uint64_t n, std::uint64_t d, int decimals = 1) {
    if (d == 0) throw ValidationError("percentage of an empty denominator");
    std::uint64_t scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    const std::uint64_t scaled = (2 * n * 100 * scale + d) / (2 * d);  // round half up
    std::string out = std::to_string(scaled / scale);
    if (decimals > 0) {
        std::string frac = std::to_string(scaled % scale);
        out += "." + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
    }
    return out + "%";
}

/// Floating-point counterpart; nudges by a tiny epsilon so exact halves round up.
inline std::string format_percent(double fraction, int decimals = 1) {
    const double scale = std::pow(10.0, decimals);
    const double v = std::floor(fraction * 100.0 * scale + 0.5 + 1e-9) / scale;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f%%", decimals, v);
    return buf;
}

enum class VoteMethod { median, sample };

/// One rule of an aggregation plan: items at 1-based positions [first, last]
/// are merged from `graders` using `method`.
struct PlanSegment {
    std::size_t first = 1;
    std::size_t last = 0;
    VoteMethod method = VoteMethod::median;
    std::vector<std::string> graders;
};

struct AggregationPlan {
    std::string name;
    std::vector<PlanSegment> segments;
    std::uint64_t seed = 0;
};

/// Median over every listed grader for all `n_items` items.
inline AggregationPlan median_plan(std::vector<std::string> graders, std::size_t n_items) {
    return {"median", {{1, n_items, VoteMethod::median, std::move(graders)}}, 0};
}

/// Two-phase human protocol: three graders median-voted on items 1-52, then
/// one of two other graders sampled per item for 53-155.
inline AggregationPlan two_phase_plan(std::vector<std::string> first_phase, std::vector<std::string> second_phase,
                                      std::uint64_t seed, std::size_t split = 52, std::size_t n_items = 155) {
    return {"two-phase",
            {{1, split, VoteMethod::median, std::move(first_phase)},
             {split + 1, n_items, VoteMethod::sample, std::move(second_phase)}},
            seed};
}

struct MergedScores {
    ScoreVector scores;
    std::vector<std::string> source;  // per item: "median" or the sampled grader
};

/// Applies the plan to the matrix. Items not covered by any segment, or with
/// no present grade among the segment's graders, stay empty.
inline MergedScores apply_plan(const GradeMatrix& m, const AggregationPlan& plan) {
    MergedScores out;
    const std::size_t n = m.question_ids().size();
    out.scores.assign(n, std::nullopt);
    out.source.assign(n, "");
    std::map<std::string, ScoreVector> cols;
    for (const auto& seg : plan.segments) {
        if (seg.first == 0 || seg.first > seg.last) throw ValidationError("aggregation segment has an empty range");
        for (const auto& g : seg.graders) {
            if (!m.has_grader(g)) throw ValidationError("aggregation plan names unknown grader '" + g + "'");
            if (!cols.count(g)) cols.emplace(g, m.column(g));
        }
    }
    for (const auto& seg : plan.segments) {
        for (std::size_t pos = seg.first; pos <= std::min(seg.last, n); ++pos) {
            const std::size_t i = pos - 1;
            std::map<std::string, std::optional<int>> by_grader;
            std::vector<int> present;
            for (const auto& g : seg.graders) {
                const auto s = cols.at(g)[i];
                by_grader[g] = s;
                if (s) present.push_back(*s);
            }
            if (present.empty()) continue;
            if (seg.method == VoteMethod::median) {
                out.scores[i] = median_vote(present);
                out.source[i] = "median";
            } else {
                const auto pick = sample_vote(by_grader, splitmix64(plan.seed ^ fnv1a64(m.question_ids()[i])));
                out.scores[i] = pick.score;
                out.source[i] = pick.grader;
            }
        }
    }
    return out;
}

struct GraderSummary {
    Histogram histogram;
    std::optional<double> reject_rate;  // absent when the grader scored nothing
    std::size_t failures = 0;
};

struct Comparison {
    std::string a;
    std::string b;
    AgreementCounts level;
    AgreementCounts binary;
};

struct AgreementReport {
    std::size_t n_items = 0;
    std::map<std::string, GraderSummary> graders;
    std::optional<Comparison> comparison;
    std::optional<ConfidenceHeatmap> heatmap;

    ojson to_json() const {
        ojson j;
        j["n_items"] = n_items;
        ojson dist = ojson::object();
        ojson rej = ojson::object();
        ojson fail = ojson::object();
        for (const auto& [g, s] : graders) {
            ojson counts = ojson::object(), fracs = ojson::object();
            for (int lvl = 1; lvl <= 5; ++lvl) {
                counts[std::to_string(lvl)] = s.histogram.count(lvl);
                fracs[std::to_string(lvl)] = s.histogram.fraction(lvl);
            }
            dist[g] = {{"total", s.histogram.total()}, {"counts", counts}, {"fractions", fracs}};
            rej[g] = s.reject_rate ? ojson(*s.reject_rate) : ojson(nullptr);
            fail[g] = s.failures;
        }
        j["distributions"] = dist;
        j["reject_rates"] = rej;
        j["grading_failures"] = fail;
        if (comparison) {
            const auto& c = *comparison;
            j["grader_a"] = c.a;
            j["grader_b"] = c.b;
            j["compared"] = c.level.compared;
            j["excluded"] = c.level.excluded;
            j["per_level_matches"] = c.level.matches;
            j["per_level_agreement"] = c.level.rate();
            j["per_level_agreement_text"] = format_ratio_percent(c.level.matches, c.level.compared);
            j["binary_matches"] = c.binary.matches;
            j["binary_agreement"] = c.binary.rate();
            j["binary_agreement_text"] = format_ratio_percent(c.binary.matches, c.binary.compared);
        }
        if (heatmap) {
            ojson cells = ojson::array();
            for (const auto& [key, count] : heatmap->cells)
                cells.push_back({{"score", key.first},
                                 {"bucket", ConfidenceHeatmap::bucket_label(key.second)},
                                 {"count", count}});
            j["confidence_heatmap"] = cells;
        }
        return j;
    }
};

inline GraderSummary summarize(const ScoreVector& scores, std::size_t failures = 0) {
    GraderSummary s;
    s.histogram = score_distribution(scores);
    if (s.histogram.total() > 0) s.reject_rate = reject_rate(s.histogram);
    s.failures = failures;
    return s;
}

}  // namespace ragmark
