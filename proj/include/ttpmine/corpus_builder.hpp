#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttpmine/common.hpp"
#include "ttpmine/stix_ingest.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

enum class ExclusionReason {
    not_english,
    inaccessible,
    not_incident,
    fewer_than_two_techniques,
    insecure_url,
    no_attack_description,
    non_report_url,
    no_date,
};

std::string_view to_string(ExclusionReason reason);
std::optional<ExclusionReason> parse_exclusion_reason(std::string_view text);

/// One CTI citation together with the manual filtering decision made for it.
struct ReportRecord {
    std::string citation_key;
    std::string url;
    std::optional<Date> published;
    std::set<TechniqueId> technique_ids;
    std::set<std::string> attribution;
    bool include = false;
    std::optional<ExclusionReason> exclusion_reason;

    bool operator==(const ReportRecord&) const = default;
};

/// Two included reports sharing at least one attributed group or software.
struct DuplicateCandidatePair {
    std::string a;  // a < b
    std::string b;
    std::set<std::string> common_attribution;
    std::int64_t date_gap_days = 0;

    std::string key() const { return a + "|" + b; }
    bool operator==(const DuplicateCandidatePair&) const = default;
};

struct ElbowSample {
    int month_bucket = 0;
    std::vector<std::string> sampled_pairs;
    std::optional<double> duplicate_fraction;
};

struct ElbowLabel {
    int bucket = 0;
    std::string pair_key;
    bool is_duplicate = false;
};

/// One unique cyberattack: a connected component of duplicate reports.
struct TechniqueSet {
    std::string attack_id;
    std::set<std::string> member_citations;
    std::set<TechniqueId> techniques;
    Date representative_date;  // earliest member publication
    Date latest_date;          // latest member publication

    bool merged() const { return member_citations.size() > 1; }
    bool operator==(const TechniqueSet&) const = default;
};

struct CorpusStats {
    std::size_t report_count = 0;
    std::size_t merged_count = 0;
    std::size_t total_mentions = 0;
    std::size_t distinct_techniques = 0;
    double mean_techniques = 0.0;
    double median_techniques = 0.0;
};

/// Validates manifest records. Missing `technique_ids`/`attribution` are filled
/// from the catalog's citation maps when a catalog is given.
std::vector<ReportRecord> parse_manifest(const Json& manifest, const AttackCatalog* catalog);
std::vector<ReportRecord> load_manifest(const std::filesystem::path& path, const AttackCatalog& catalog);
Json manifest_to_json(std::span<const ReportRecord> records);

/// Skeleton manifest for every catalog citation. Records with two or more
/// techniques and a full citation date start out included; reviewers flip the rest.
std::vector<ReportRecord> manifest_template(const AttackCatalog& catalog);

std::vector<ReportRecord> included_records(std::span<const ReportRecord> records);

/// Every unordered pair of included reports with intersecting attribution,
/// sorted by (a, b). Identical output for any thread count.
std::vector<DuplicateCandidatePair> find_candidate_pairs(std::span<const ReportRecord> records,
                                                         unsigned threads = 1);

/// Month bucket i such that the gap lies in ((i-1)*30, i*30] days; same-day
/// pairs fall in bucket 1.
int month_bucket(std::int64_t gap_days);

/// Draws up to `sample_size` pairs without replacement from each of the buckets
/// 1..n_buckets. Deterministic in `seed`.
std::vector<ElbowSample> sample_buckets(std::span<const DuplicateCandidatePair> pairs, int n_buckets,
                                        int sample_size, std::uint64_t seed);

std::vector<ElbowLabel> parse_elbow_labels(std::string_view csv);

/// Fraction of pairs labelled duplicate, per bucket 1..n_buckets.
std::vector<double> duplicate_fractions(std::span<const ElbowLabel> labels, int n_buckets);

/// Index i (1-based) of the largest consecutive drop r_i - r_{i+1}; ties go to
/// the larger index.
int estimate_tau(std::span<const double> fractions);

/// Unions reports joined by a pair that shares attribution and lies at most
/// tau months apart; every connected component becomes one TechniqueSet.
std::vector<TechniqueSet> merge_duplicates(std::span<const ReportRecord> records,
                                           std::span<const DuplicateCandidatePair> pairs, int tau);

CorpusStats corpus_stats(std::span<const TechniqueSet> sets);

Json corpus_to_json(std::span<const TechniqueSet> sets);
std::vector<TechniqueSet> corpus_from_json(const Json& value);

Table candidate_pairs_table(std::span<const DuplicateCandidatePair> pairs);

/// Labelling sheet in the elbow-labels layout, with `is_duplicate` left blank.
Table elbow_samples_table(std::span<const ElbowSample> samples);

}  // namespace ttpmine
