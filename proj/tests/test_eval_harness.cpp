#include <gtest/gtest.h>
#include <fmt/format.h>

#include <random>

#include "ttpmine/error.hpp"
#include "ttpmine/eval_harness.hpp"

using namespace ttpmine;

namespace {

UnseenReport report(const std::string& id, std::set<TechniqueId> techniques, const std::string& date = "2023-01-01") {
    return {id, *Date::parse_iso(date), std::move(techniques)};
}

RecurringPair pair(const TechniqueId& a, const TechniqueId& b, std::set<RelationType> labels = {}) {
    RecurringPair p;
    p.tech_a = a;
    p.tech_b = b;
    p.relation_labels = std::move(labels);
    return p;
}

TechniqueSet set_dated(const std::string& first, const std::string& last) {
    TechniqueSet s;
    s.member_citations = {"x"};
    s.techniques = {"T1001", "T1002"};
    s.representative_date = *Date::parse_iso(first);
    s.latest_date = *Date::parse_iso(last);
    return s;
}

}  // namespace

TEST(Cutoff, LatestMemberDate) {
    const std::vector<TechniqueSet> one = {set_dated("2021-05-01", "2021-05-01")};
    EXPECT_EQ(cutoff_date(one).iso(), "2021-05-01");
    const std::vector<TechniqueSet> merged = {set_dated("2020-01-01", "2022-08-18"), set_dated("2021-01-01", "2021-01-01")};
    EXPECT_EQ(cutoff_date(merged).iso(), "2022-08-18");
    EXPECT_THROW(cutoff_date(std::vector<TechniqueSet>{}), ValidationError);
}

TEST(UnseenManifest, ParsesAndValidates) {
    const auto cutoff = *Date::parse_iso("2022-08-18");
    const Json doc = Json::parse(R"([
        {"id": "b", "published": "2022-09-01", "technique_ids": ["T1082", "T1059.001"]},
        {"citation_key": "a", "published": "2022-08-19", "technique_ids": ["T1082"]},
        {"id": "skip", "published": "2020-01-01", "technique_ids": [], "include": false}
    ])");
    const auto unseen = parse_unseen_manifest(doc, cutoff);
    ASSERT_EQ(unseen.size(), 2u);
    EXPECT_EQ(unseen[0].id, "a");
    EXPECT_EQ(unseen[1].technique_ids.size(), 2u);

    EXPECT_THROW(parse_unseen_manifest(Json::parse(R"([{"id":"a","published":"2022-08-18","technique_ids":["T1082"]}])"), cutoff),
                 ValidationError);
    EXPECT_THROW(parse_unseen_manifest(Json::parse(R"([{"id":"a","published":"2022-09-18","technique_ids":[]}])"), cutoff),
                 ValidationError);
    EXPECT_THROW(parse_unseen_manifest(Json::parse(R"([{"id":"a","published":"2022-09-18","technique_ids":["X1"]}])"), cutoff),
                 ValidationError);
    EXPECT_THROW(parse_unseen_manifest(Json::parse(R"({"id":"a"})"), cutoff), SchemaError);
    EXPECT_THROW(parse_unseen_manifest(
                     Json::parse(R"([{"id":"a","published":"2022-09-18","technique_ids":["T1082"]},
                                     {"id":"a","published":"2022-09-19","technique_ids":["T1083"]}])"),
                     cutoff),
                 ValidationError);
}

TEST(EvA, CountsMeanMedianAndParentMatch) {
    const std::vector<TechniqueId> prevalent = {"T1082", "T1204.002", "T1105"};
    const std::vector<UnseenReport> unseen = {report("r1", {"T1082", "T1204"}), report("r2", {"T1082", "T1105"}),
                                              report("r3", {"T1003"})};
    const auto exact = ev_a(prevalent, unseen, false);
    EXPECT_EQ(exact.prevalent_total, 3u);
    EXPECT_EQ(exact.found, (std::vector<TechniqueId>{"T1082", "T1105"}));
    EXPECT_EQ(exact.missing, (std::vector<TechniqueId>{"T1204.002"}));
    EXPECT_DOUBLE_EQ(exact.mean_per_report, 1.0);
    EXPECT_DOUBLE_EQ(exact.median_per_report, 1.0);
    EXPECT_EQ(exact.unseen_top20.front(), "T1082");
    EXPECT_EQ(exact.top20_overlap, 2u);
    EXPECT_EQ(exact.top20_overlap_parent_match, 3u);

    const auto relaxed = ev_a(prevalent, unseen, true);
    EXPECT_EQ(relaxed.found.size(), 3u);
    EXPECT_DOUBLE_EQ(relaxed.mean_per_report, 4.0 / 3.0);
}

TEST(EvA, NoHitsAndErrors) {
    const std::vector<TechniqueId> prevalent = {"T1082"};
    const std::vector<UnseenReport> unseen = {report("r1", {"T1003"})};
    const auto r = ev_a(prevalent, unseen, false);
    EXPECT_TRUE(r.found.empty());
    EXPECT_DOUBLE_EQ(r.mean_per_report, 0.0);
    EXPECT_THROW(ev_a(prevalent, std::vector<UnseenReport>{}, false), ValidationError);
    EXPECT_THROW(ev_a(std::vector<TechniqueId>{}, unseen, false), ValidationError);
}

TEST(EvB, ValidVersusMatched) {
    const std::vector<RecurringPair> pairs = {
        pair("T1001", "T1002", {RelationType::same_asset, RelationType::follow}),
        pair("T1001", "T1003", {RelationType::alternative}),
        pair("T1004", "T1005"),
    };
    const std::vector<UnseenReport> unseen = {report("r1", {"T1001", "T1002"}), report("r2", {"T1003"}),
                                              report("r3", {"T1001", "T1002", "T1009"})};
    const auto r = ev_b(pairs, unseen);
    EXPECT_EQ(r.pairs_total, 3u);
    EXPECT_EQ(r.valid_pairs, 2u);
    ASSERT_EQ(r.matched.size(), 1u);
    EXPECT_EQ(r.matched[0], (std::pair<TechniqueId, TechniqueId>{"T1001", "T1002"}));
    EXPECT_EQ(r.reports_with_pair, 2u);
    EXPECT_EQ(r.pair_occurrences, 2u);
    EXPECT_DOUBLE_EQ(r.mean_pairs_per_report, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.mean_pairs_per_matching_report, 1.0);
    EXPECT_EQ(r.per_relation_matches.at(RelationType::same_asset), 1u);
    EXPECT_EQ(r.per_relation_matches.at(RelationType::follow), 1u);
    EXPECT_EQ(r.per_relation_matches.at(RelationType::alternative), 0u);
    EXPECT_EQ(r.per_relation_matches.size(), kAllRelations.size());
    EXPECT_THROW(ev_b(std::vector<RecurringPair>{}, unseen), ValidationError);
    EXPECT_THROW(ev_b(pairs, std::vector<UnseenReport>{}), ValidationError);
}

TEST(EvB, CrossCheckAndMonotonicity) {
    std::mt19937_64 rng(19);
    for (int round = 0; round < 100; ++round) {
        std::vector<RecurringPair> pairs;
        for (int i = 0; i < 8; ++i) {
            for (int j = i + 1; j < 8; ++j) {
                if (rng() % 3 == 0) pairs.push_back(pair(fmt::format("T{:04}", 1001 + i), fmt::format("T{:04}", 1001 + j)));
            }
        }
        if (pairs.empty()) continue;
        std::vector<UnseenReport> unseen;
        EvBResult previous;
        EvAResult previous_a;
        const std::vector<TechniqueId> prevalent = {"T1001", "T1003", "T1005"};
        for (int k = 0; k < 8; ++k) {
            std::set<TechniqueId> techniques;
            for (int t = 0; t < 10; ++t) {
                if (rng() % 4 == 0) techniques.insert(fmt::format("T{:04}", 1001 + t));
            }
            if (techniques.empty()) techniques.insert("T1010");
            unseen.push_back(report(fmt::format("r{}", k), techniques));
            const auto b = ev_b(pairs, unseen);
            EXPECT_EQ(b.matched, matched_pairs_by_pair_scan(pairs, unseen));
            EXPECT_LE(b.matched.size(), b.valid_pairs);
            EXPECT_LE(b.valid_pairs, pairs.size());
            EXPECT_LE(b.reports_with_pair, unseen.size());
            EXPECT_GE(b.valid_pairs, previous.valid_pairs);
            EXPECT_GE(b.matched.size(), previous.matched.size());
            const auto a = ev_a(prevalent, unseen, false);
            EXPECT_GE(a.found.size(), previous_a.found.size());
            previous = b;
            previous_a = a;
        }
    }
}

TEST(Summary, JsonAndText) {
    EvaluationSummary s;
    s.cutoff = *Date::parse_iso("2022-08-18");
    s.unseen_reports = 1;
    const std::vector<TechniqueId> prevalent = {"T1082"};
    const std::vector<UnseenReport> unseen = {report("r1", {"T1082", "T1083"})};
    const std::vector<RecurringPair> pairs = {pair("T1082", "T1083")};
    s.ev_a = ev_a(prevalent, unseen, false);
    s.ev_b = ev_b(pairs, unseen);
    const auto doc = evaluation_to_json(s);
    EXPECT_EQ(doc.at("cutoff"), "2022-08-18");
    EXPECT_TRUE(doc.contains("ev_a"));
    EXPECT_TRUE(doc.contains("ev_b"));
    EXPECT_FALSE(evaluation_text(s).empty());
}
