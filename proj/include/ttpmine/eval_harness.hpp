#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttpmine/corpus_builder.hpp"
#include "ttpmine/prevalence.hpp"
#include "ttpmine/rule_miner.hpp"

namespace ttpmine {

struct UnseenReport {
    std::string id;
    Date published;
    std::set<TechniqueId> technique_ids;
};

/// Latest member publication date across the corpus.
Date cutoff_date(std::span<const TechniqueSet> corpus);

/// Reads an array of report objects keyed by `id` (or `citation_key`) with
/// `published` and non-empty `technique_ids`. Entries with `"include": false`
/// are skipped. Every report must postdate `cutoff`.
std::vector<UnseenReport> parse_unseen_manifest(const Json& manifest, const Date& cutoff);
std::vector<UnseenReport> load_unseen_manifest(const std::filesystem::path& path, const Date& cutoff);

struct EvAResult {
    std::size_t prevalent_total = 0;
    std::vector<TechniqueId> found;
    std::vector<TechniqueId> missing;
    double mean_per_report = 0.0;
    double median_per_report = 0.0;
    std::vector<TechniqueId> unseen_top20;
    std::size_t top20_overlap = 0;               // exact id match
    std::size_t top20_overlap_parent_match = 0;  // sub-techniques also match their parent id
};

/// With `parent_match`, techniques are compared by their parent id.
EvAResult ev_a(std::span<const TechniqueId> prevalent, std::span<const UnseenReport> unseen, bool parent_match);

struct EvBResult {
    std::size_t pairs_total = 0;
    std::size_t valid_pairs = 0;
    std::vector<std::pair<TechniqueId, TechniqueId>> matched;
    std::size_t reports_with_pair = 0;
    std::size_t pair_occurrences = 0;           // (report, matched pair) incidences
    double mean_pairs_per_report = 0.0;         // over all unseen reports
    double mean_pairs_per_matching_report = 0.0;  // over reports holding at least one pair
    std::map<RelationType, std::size_t> per_relation_matches;
};

EvBResult ev_b(std::span<const RecurringPair> pairs, std::span<const UnseenReport> unseen);

/// Matched pairs found by scanning each pair over the reports; used to
/// cross-check the per-report scan in ev_b.
std::vector<std::pair<TechniqueId, TechniqueId>> matched_pairs_by_pair_scan(std::span<const RecurringPair> pairs,
                                                                            std::span<const UnseenReport> unseen);

struct EvaluationSummary {
    Date cutoff;
    std::size_t unseen_reports = 0;
    bool parent_match = false;
    EvAResult ev_a;
    EvBResult ev_b;
};

Json evaluation_to_json(const EvaluationSummary& summary);
std::string evaluation_text(const EvaluationSummary& summary);

}  // namespace ttpmine
