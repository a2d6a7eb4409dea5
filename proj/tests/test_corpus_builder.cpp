#include <gtest/gtest.h>
#include <fmt/format.h>

#include <algorithm>
#include <queue>
#include <random>

#include "test_support.hpp"
#include "ttpmine/corpus_builder.hpp"
#include "ttpmine/error.hpp"

using namespace ttpmine;

namespace {

ReportRecord record(const std::string& key, const std::string& date, std::set<TechniqueId> techniques,
                    std::set<std::string> attribution) {
    ReportRecord r;
    r.citation_key = key;
    r.url = "https://example.org/" + key;
    r.published = Date::parse_iso(date);
    r.technique_ids = std::move(techniques);
    r.attribution = std::move(attribution);
    r.include = true;
    return r;
}

Json manifest_entry(const std::string& key, const Json& published, const std::vector<std::string>& techniques,
                    bool include, const Json& reason = nullptr) {
    return {{"citation_key", key},
            {"published", published},
            {"technique_ids", techniques},
            {"attribution", Json::array({"G0001"})},
            {"include", include},
            {"exclusion_reason", reason}};
}

std::vector<ReportRecord> random_records(std::mt19937_64& rng, int count) {
    std::vector<ReportRecord> out;
    const Date origin(2020, 1, 1);
    for (int i = 0; i < count; ++i) {
        std::set<std::string> attribution;
        for (int g = 0; g < 4; ++g) {
            if (rng() % 3 == 0) attribution.insert("G000" + std::to_string(g));
        }
        std::set<TechniqueId> techniques = {"T100" + std::to_string(rng() % 6), "T101" + std::to_string(rng() % 6)};
        const auto days = std::chrono::days(static_cast<int>(rng() % 200));
        ReportRecord r;
        r.citation_key = "r" + std::to_string(100 + i);
        r.published = Date(origin.days() + days);
        r.technique_ids = techniques;
        r.attribution = attribution;
        r.include = true;
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(Manifest, LoadsWellFormedRecords) {
    const Json doc = Json::array({manifest_entry("c", "2020-01-03", {"T1001", "T1002"}, true),
                                  manifest_entry("a", "2020-01-01", {"T1001", "T1003"}, true),
                                  manifest_entry("b", nullptr, {"T1001"}, false, "no-date")});
    const auto records = parse_manifest(doc, nullptr);
    ASSERT_EQ(records.size(), 3u);
    EXPECT_EQ(records[0].citation_key, "a");
    EXPECT_EQ(included_records(records).size(), 2u);
    EXPECT_EQ(parse_manifest(manifest_to_json(records), nullptr), records);
}

TEST(Manifest, IncludedSingleTechniqueIsRejectedWithHint) {
    const Json doc = Json::array({manifest_entry("a", "2020-01-01", {"T1001"}, true)});
    try {
        parse_manifest(doc, nullptr);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("fewer-than-two-techniques"), std::string::npos);
    }
}

TEST(Manifest, IncludedWithoutDateIsRejected) {
    const Json doc = Json::array({manifest_entry("a", nullptr, {"T1001", "T1002"}, true)});
    EXPECT_THROW(parse_manifest(doc, nullptr), ValidationError);
}

TEST(Manifest, RejectsBadDatesReasonsAndDuplicates) {
    EXPECT_THROW(parse_manifest(Json::array({manifest_entry("a", "2020/01/01", {"T1001", "T1002"}, true)}), nullptr),
                 ValidationError);
    EXPECT_THROW(parse_manifest(Json::array({manifest_entry("a", "2020-01-01", {"T1001"}, false)}), nullptr),
                 ValidationError);
    EXPECT_THROW(parse_manifest(Json::array({manifest_entry("a", "2020-01-01", {"T1001"}, false, "typo")}), nullptr),
                 ValidationError);
    EXPECT_THROW(
        parse_manifest(Json::array({manifest_entry("a", "2020-01-01", {"T1001", "T1002"}, true, "not-english")}),
                       nullptr),
        ValidationError);
    const auto twice = Json::array(
        {manifest_entry("a", "2020-01-01", {"T1001", "T1002"}, true), manifest_entry("a", "2020-01-02", {"T1001", "T1002"}, true)});
    EXPECT_THROW(parse_manifest(twice, nullptr), ValidationError);
}

TEST(Manifest, UnknownTechniqueNamesTheRecord) {
    const auto catalog = parse_bundle(fixture::slurp(fixture::e2e_dir() / "bundle.json"));
    const Json doc = Json::array({manifest_entry("rec-x", "2020-01-01", {"T1082", "T9999"}, true)});
    try {
        parse_manifest(doc, &catalog);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("rec-x"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("T9999"), std::string::npos);
    }
}

TEST(Manifest, TemplateCoversEveryCitation) {
    const auto catalog = parse_bundle(fixture::slurp(fixture::e2e_dir() / "bundle.json"));
    const auto records = manifest_template(catalog);
    EXPECT_EQ(records.size(), catalog.citations.size());
    for (const auto& r : records) {
        EXPECT_EQ(r.include, !r.exclusion_reason.has_value());
        if (r.include) {
            EXPECT_GE(r.technique_ids.size(), 2u);
            EXPECT_TRUE(r.published);
        }
    }
    EXPECT_NO_THROW(parse_manifest(manifest_to_json(records), &catalog));
}

TEST(CandidatePairs, WellMailOneMonthAndFin7FiveYears) {
    const std::vector<ReportRecord> records = {
        record("wellmail-1", "2020-07-16", {"T1001", "T1002"}, {"S0538"}),
        record("wellmail-2", "2020-08-15", {"T1001", "T1003"}, {"S0538"}),
        record("fin7-2017", "2017-03-01", {"T1001", "T1002"}, {"G0046"}),
        record("fin7-2022", "2022-02-28", {"T1001", "T1002"}, {"G0046"}),
        record("other", "2020-07-16", {"T1001", "T1002"}, {"G0099"}),
    };
    const auto pairs = find_candidate_pairs(records);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_EQ(pairs[0].key(), "fin7-2017|fin7-2022");
    EXPECT_EQ(pairs[0].date_gap_days, 1825);
    EXPECT_EQ(pairs[1].common_attribution, std::set<std::string>{"S0538"});
    EXPECT_EQ(pairs[1].date_gap_days, 30);
}

TEST(CandidatePairs, MatchBruteForceForAnyThreadCount) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 20; ++round) {
        const auto records = random_records(rng, 25);
        std::set<std::string> expected;
        for (std::size_t i = 0; i < records.size(); ++i) {
            for (std::size_t j = 0; j < records.size(); ++j) {
                if (i == j || records[i].citation_key > records[j].citation_key) continue;
                for (const auto& g : records[i].attribution) {
                    if (records[j].attribution.contains(g)) {
                        expected.insert(records[i].citation_key + "|" + records[j].citation_key);
                        break;
                    }
                }
            }
        }
        const auto sequential = find_candidate_pairs(records, 1);
        std::set<std::string> got;
        for (const auto& p : sequential) got.insert(p.key());
        EXPECT_EQ(got, expected);
        EXPECT_EQ(find_candidate_pairs(records, 4), sequential);
    }
}

TEST(MonthBucket, RightClosedBoundaries) {
    EXPECT_EQ(month_bucket(0), 1);
    EXPECT_EQ(month_bucket(1), 1);
    EXPECT_EQ(month_bucket(30), 1);
    EXPECT_EQ(month_bucket(31), 2);
    EXPECT_EQ(month_bucket(60), 2);
    EXPECT_EQ(month_bucket(61), 3);
}

TEST(EstimateTau, Examples) {
    const std::vector<double> a = {0.95, 0.85, 0.15, 0.10, 0.05};
    EXPECT_EQ(estimate_tau(a), 2);
    const std::vector<double> b = {1.0, 0.0};
    EXPECT_EQ(estimate_tau(b), 1);
    const std::vector<double> c = {0.9, 0.8, 0.7, 0.1};
    EXPECT_EQ(estimate_tau(c), 3);
}

TEST(EstimateTau, TiesGoToTheLargerIndex) {
    const std::vector<double> r = {1.0, 0.5, 0.5, 0.0};
    EXPECT_EQ(estimate_tau(r), 3);
}

TEST(EstimateTau, ErrorsWithoutADrop) {
    const std::vector<double> flat = {0.3, 0.3, 0.3};
    EXPECT_THROW(estimate_tau(flat), ValidationError);
    const std::vector<double> rising = {0.1, 0.2};
    EXPECT_THROW(estimate_tau(rising), ValidationError);
    const std::vector<double> one = {0.1};
    EXPECT_THROW(estimate_tau(one), ParameterError);
    const std::vector<double> out_of_range = {1.2, 0.1};
    EXPECT_THROW(estimate_tau(out_of_range), ParameterError);
}

TEST(EstimateTau, ScaleFreeUnderAConstantShift) {
    // Multiples of 1/64 keep every difference exact, so the shift cannot perturb ties.
    std::mt19937_64 rng(3);
    for (int round = 0; round < 500; ++round) {
        std::vector<double> r(2 + rng() % 6);
        for (auto& v : r) v = static_cast<double>(rng() % 33) / 64.0;
        bool has_drop = false;
        for (std::size_t i = 0; i + 1 < r.size(); ++i) has_drop |= r[i] > r[i + 1];
        if (!has_drop) continue;
        const int tau = estimate_tau(r);
        // Oracle: largest index among maximal drops.
        double best = -1;
        int expect = 0;
        for (std::size_t i = 0; i + 1 < r.size(); ++i) {
            if (r[i] - r[i + 1] >= best) {
                best = r[i] - r[i + 1];
                expect = static_cast<int>(i + 1);
            }
        }
        EXPECT_EQ(tau, expect);
        auto shifted = r;
        const double c = static_cast<double>(rng() % 32) / 64.0;
        for (auto& v : shifted) v += c;
        EXPECT_EQ(estimate_tau(shifted), tau);
    }
}

TEST(SampleBuckets, DeterministicSubsetsOfTheirBucket) {
    std::vector<DuplicateCandidatePair> pairs;
    for (int i = 0; i < 300; ++i) {
        DuplicateCandidatePair p;
        p.a = fmt::format("a{:03}", i);
        p.b = fmt::format("b{:03}", i);
        p.common_attribution = {"G1"};
        p.date_gap_days = i % 160;
        pairs.push_back(p);
    }
    const auto first = sample_buckets(pairs, 5, 20, 42);
    const auto second = sample_buckets(pairs, 5, 20, 42);
    ASSERT_EQ(first.size(), 5u);
    for (std::size_t b = 0; b < first.size(); ++b) {
        EXPECT_EQ(first[b].sampled_pairs, second[b].sampled_pairs);
        EXPECT_EQ(first[b].sampled_pairs.size(), 20u);
        std::set<std::string> unique(first[b].sampled_pairs.begin(), first[b].sampled_pairs.end());
        EXPECT_EQ(unique.size(), 20u);
        for (const auto& key : first[b].sampled_pairs) {
            const auto i = std::stoi(key.substr(1, 3));
            EXPECT_EQ(month_bucket(i % 160), static_cast<int>(b + 1));
        }
    }
    const auto other = sample_buckets(pairs, 5, 20, 43);
    bool differs = false;
    for (std::size_t b = 0; b < first.size(); ++b) differs |= first[b].sampled_pairs != other[b].sampled_pairs;
    EXPECT_TRUE(differs);
}

TEST(SampleBuckets, SmallBucketsAreEmittedWhole) {
    std::vector<DuplicateCandidatePair> pairs(3);
    for (int i = 0; i < 3; ++i) {
        pairs[i].a = "a" + std::to_string(i);
        pairs[i].b = "b" + std::to_string(i);
        pairs[i].date_gap_days = 10;
    }
    const auto samples = sample_buckets(pairs, 2, 20, 1);
    EXPECT_EQ(samples[0].sampled_pairs.size(), 3u);
    EXPECT_TRUE(samples[1].sampled_pairs.empty());
    EXPECT_THROW(sample_buckets(pairs, 0, 20, 1), ParameterError);
    EXPECT_THROW(sample_buckets(pairs, 5, 0, 1), ParameterError);
}

TEST(ElbowLabels, FractionsPerBucket) {
    const auto labels = parse_elbow_labels("bucket,pair_key,is_duplicate\n1,a|b,1\n1,c|d,0\n2,e|f,false\n2,g|h,true\n");
    const auto r = duplicate_fractions(labels, 2);
    EXPECT_EQ(r, (std::vector<double>{0.5, 0.5}));
    EXPECT_THROW(duplicate_fractions(labels, 3), ValidationError);
    EXPECT_THROW(parse_elbow_labels("bucket,pair_key,is_duplicate\n1,a|b,maybe\n"), ValidationError);
    EXPECT_THROW(parse_elbow_labels("bucket,pair,dup\n"), ValidationError);
}

TEST(Merge, ChainedPairsFormOneComponent) {
    const std::vector<ReportRecord> records = {
        record("A", "2021-01-01", {"T1001", "T1002"}, {"G1"}),
        record("B", "2021-02-10", {"T1002", "T1003"}, {"G1", "G2"}),
        record("C", "2021-03-20", {"T1004", "T1005"}, {"G2"}),
    };
    const auto pairs = find_candidate_pairs(records);
    const auto sets = merge_duplicates(records, pairs, 2);
    ASSERT_EQ(sets.size(), 1u);
    EXPECT_EQ(sets[0].member_citations, (std::set<std::string>{"A", "B", "C"}));
    EXPECT_EQ(sets[0].techniques, (std::set<TechniqueId>{"T1001", "T1002", "T1003", "T1004", "T1005"}));
    EXPECT_EQ(sets[0].representative_date.iso(), "2021-01-01");
    EXPECT_EQ(sets[0].latest_date.iso(), "2021-03-20");
    EXPECT_TRUE(sets[0].merged());
}

TEST(Merge, NoEdgesKeepsSingletons) {
    const std::vector<ReportRecord> records = {
        record("A", "2021-01-01", {"T1001", "T1002"}, {"G1"}),
        record("B", "2021-01-01", {"T1001", "T1002"}, {"G2"}),
        record("C", "2021-01-01", {"T1001", "T1002"}, {}),
    };
    const auto sets = merge_duplicates(records, find_candidate_pairs(records), 2);
    EXPECT_EQ(sets.size(), 3u);
    EXPECT_THROW(merge_duplicates(records, {}, 0), ParameterError);
}

TEST(Merge, GapOfExactlyTauMonthsMerges) {
    const std::vector<ReportRecord> records = {
        record("A", "2021-01-01", {"T1001", "T1002"}, {"G1"}),
        record("B", "2021-03-02", {"T1001", "T1003"}, {"G1"}),  // 60 days
        record("C", "2021-05-02", {"T1001", "T1003"}, {"G1"}),  // 61 days after B
    };
    const auto sets = merge_duplicates(records, find_candidate_pairs(records), 2);
    ASSERT_EQ(sets.size(), 2u);
    EXPECT_EQ(sets[0].member_citations, (std::set<std::string>{"A", "B"}));
}

TEST(Merge, PartitionPathAndOrderProperties) {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 40; ++round) {
        auto records = random_records(rng, 14);
        const auto pairs = find_candidate_pairs(records);
        const int tau = 1 + static_cast<int>(rng() % 3);
        const auto sets = merge_duplicates(records, pairs, tau);

        // Partition: every included record in exactly one set.
        std::size_t members = 0;
        std::set<std::string> seen;
        for (const auto& s : sets) {
            members += s.member_citations.size();
            seen.insert(s.member_citations.begin(), s.member_citations.end());
        }
        EXPECT_EQ(members, records.size());
        EXPECT_EQ(seen.size(), records.size());

        // Brute-force reachability over edges meeting both criteria.
        std::map<std::string, std::set<std::string>> adj;
        for (const auto& a : records) {
            for (const auto& b : records) {
                if (a.citation_key == b.citation_key) continue;
                bool shared = false;
                for (const auto& g : a.attribution) shared |= b.attribution.contains(g);
                if (shared && days_between(*a.published, *b.published) <= tau * 30) {
                    adj[a.citation_key].insert(b.citation_key);
                }
            }
        }
        for (const auto& s : sets) {
            const auto start = *s.member_citations.begin();
            std::set<std::string> reach = {start};
            std::queue<std::string> q;
            q.push(start);
            while (!q.empty()) {
                const auto cur = q.front();
                q.pop();
                for (const auto& n : adj[cur]) {
                    if (reach.insert(n).second) q.push(n);
                }
            }
            EXPECT_EQ(reach, s.member_citations);
            std::set<TechniqueId> unioned;
            for (const auto& r : records) {
                if (s.member_citations.contains(r.citation_key)) unioned.insert(r.technique_ids.begin(), r.technique_ids.end());
            }
            EXPECT_EQ(unioned, s.techniques);
        }

        // Order independence.
        auto shuffled_records = records;
        auto shuffled_pairs = pairs;
        std::shuffle(shuffled_records.begin(), shuffled_records.end(), rng);
        std::shuffle(shuffled_pairs.begin(), shuffled_pairs.end(), rng);
        EXPECT_EQ(merge_duplicates(shuffled_records, shuffled_pairs, tau), sets);
    }
}

TEST(Merge, AttackIdIsStableHashOfMembers) {
    const std::vector<ReportRecord> records = {record("A", "2021-01-01", {"T1001", "T1002"}, {"G1"})};
    const auto sets = merge_duplicates(records, {}, 2);
    EXPECT_EQ(sets[0].attack_id, fnv1a64_hex("A\n"));
}

TEST(CorpusStats, SmallExamples) {
    TechniqueSet a;
    a.member_citations = {"a"};
    a.techniques = {"T1001", "T1002"};
    TechniqueSet b;
    b.member_citations = {"b"};
    b.techniques = {"T1002", "T1003"};
    const std::vector<TechniqueSet> sets = {a, b};
    const auto stats = corpus_stats(sets);
    EXPECT_EQ(stats.total_mentions, 4u);
    EXPECT_EQ(stats.distinct_techniques, 3u);
    EXPECT_DOUBLE_EQ(stats.median_techniques, 2.0);

    TechniqueSet k;
    k.member_citations = {"k"};
    k.techniques = {"T1001", "T1002", "T1003", "T1004", "T1005"};
    const std::vector<TechniqueSet> single = {k};
    EXPECT_EQ(corpus_stats(single).total_mentions, 5u);
    EXPECT_EQ(corpus_stats(single).distinct_techniques, 5u);
    EXPECT_THROW(corpus_stats(std::vector<TechniqueSet>{}), ValidationError);
}

TEST(CorpusJson, RoundTripAndDisjointMembers) {
    const std::vector<ReportRecord> records = {
        record("A", "2021-01-01", {"T1001", "T1002"}, {"G1"}),
        record("B", "2021-01-15", {"T1001", "T1003"}, {"G1"}),
        record("C", "2022-01-15", {"T1001", "T1003"}, {"G1"}),
    };
    const auto sets = merge_duplicates(records, find_candidate_pairs(records), 2);
    EXPECT_EQ(corpus_from_json(corpus_to_json(sets)), sets);
    auto doc = corpus_to_json(sets);
    doc[1]["member_citations"] = Json::array({"A"});
    EXPECT_THROW(corpus_from_json(doc), Error);
}
