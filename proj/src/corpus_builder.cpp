#include "ttpmine/corpus_builder.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "ttpmine/error.hpp"
#include "ttpmine/parallel.hpp"

namespace ttpmine {

namespace {

constexpr std::array<std::pair<ExclusionReason, std::string_view>, 8> kReasons = {{
    {ExclusionReason::not_english, "not-english"},
    {ExclusionReason::inaccessible, "inaccessible"},
    {ExclusionReason::not_incident, "not-incident"},
    {ExclusionReason::fewer_than_two_techniques, "fewer-than-two-techniques"},
    {ExclusionReason::insecure_url, "insecure-url"},
    {ExclusionReason::no_attack_description, "no-attack-description"},
    {ExclusionReason::non_report_url, "non-report-url"},
    {ExclusionReason::no_date, "no-date"},
}};

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) {
            return;
        }
        if (rank_[a] < rank_[b]) {
            std::swap(a, b);
        }
        parent_[b] = a;
        if (rank_[a] == rank_[b]) {
            ++rank_[a];
        }
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned> rank_;
};

// Unbiased draw in [0, bound) by rejection; std::uniform_int_distribution is
// implementation-defined and would make samples differ between standard libraries.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t value = 0;
    do {
        value = rng();
    } while (value >= limit);
    return value % bound;
}

std::set<std::string> intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::set<std::string> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
    return out;
}

template <typename T>
std::set<T> string_set(const Json& value, std::string_view field, std::string_view record) {
    if (!value.is_array()) {
        throw ValidationError(fmt::format("record '{}': '{}' must be an array", record, field));
    }
    std::set<T> out;
    for (const auto& item : value) {
        if (!item.is_string()) {
            throw ValidationError(fmt::format("record '{}': '{}' must contain strings", record, field));
        }
        out.insert(item.get<std::string>());
    }
    return out;
}

}  // namespace

std::string_view to_string(ExclusionReason reason) {
    for (const auto& [value, text] : kReasons) {
        if (value == reason) {
            return text;
        }
    }
    return "unknown";
}

std::optional<ExclusionReason> parse_exclusion_reason(std::string_view text) {
    for (const auto& [value, name] : kReasons) {
        if (name == text) {
            return value;
        }
    }
    return std::nullopt;
}

std::vector<ReportRecord> parse_manifest(const Json& manifest, const AttackCatalog* catalog) {
    if (!manifest.is_array()) {
        throw ValidationError("manifest: expected a JSON array of report records");
    }
    std::map<std::string, std::set<TechniqueId>> catalog_techniques;
    std::map<std::string, std::set<std::string>> catalog_attribution;
    std::map<std::string, std::string> catalog_urls;
    if (catalog != nullptr) {
        catalog_techniques = build_report_technique_map(*catalog);
        catalog_attribution = extract_attribution(*catalog);
        for (const auto& c : catalog->citations) {
            catalog_urls[c.key] = c.url;
        }
    }

    std::vector<ReportRecord> records;
    std::set<std::string> seen;
    for (std::size_t index = 0; index < manifest.size(); ++index) {
        const Json& item = manifest[index];
        if (!item.is_object()) {
            throw ValidationError(fmt::format("manifest[{}]: expected an object", index));
        }
        ReportRecord record;
        const auto key_it = item.find("citation_key");
        if (key_it == item.end() || !key_it->is_string() || key_it->get<std::string>().empty()) {
            throw ValidationError(fmt::format("manifest[{}]: missing citation_key", index));
        }
        record.citation_key = key_it->get<std::string>();
        const auto& name = record.citation_key;
        if (!seen.insert(name).second) {
            throw ValidationError(fmt::format("record '{}': duplicate citation_key", name));
        }

        if (const auto it = item.find("url"); it != item.end() && it->is_string()) {
            record.url = it->get<std::string>();
        } else if (const auto c = catalog_urls.find(name); c != catalog_urls.end()) {
            record.url = c->second;
        } else {
            record.url = name;
        }

        if (const auto it = item.find("published"); it != item.end() && !it->is_null()) {
            if (!it->is_string()) {
                throw ValidationError(fmt::format("record '{}': published must be an ISO-8601 date string", name));
            }
            record.published = Date::parse_iso(it->get<std::string>());
            if (!record.published) {
                throw ValidationError(fmt::format("record '{}': published '{}' is not an ISO-8601 date (YYYY-MM-DD)",
                                                  name, it->get<std::string>()));
            }
        }

        if (const auto it = item.find("technique_ids"); it != item.end()) {
            record.technique_ids = string_set<TechniqueId>(*it, "technique_ids", name);
        } else if (const auto c = catalog_techniques.find(name); c != catalog_techniques.end()) {
            record.technique_ids = c->second;
        } else {
            throw ValidationError(
                fmt::format("record '{}': no technique_ids given and the citation is not in the catalog", name));
        }
        for (const auto& id : record.technique_ids) {
            if (!is_technique_id(id)) {
                throw ValidationError(fmt::format("record '{}': malformed technique id '{}'", name, id));
            }
            if (catalog != nullptr && catalog->find_technique(id) == nullptr) {
                throw ValidationError(fmt::format("record '{}': unknown technique id '{}'", name, id));
            }
        }

        if (const auto it = item.find("attribution"); it != item.end()) {
            record.attribution = string_set<std::string>(*it, "attribution", name);
        } else if (const auto c = catalog_attribution.find(name); c != catalog_attribution.end()) {
            record.attribution = c->second;
        }

        const auto include_it = item.find("include");
        if (include_it == item.end() || !include_it->is_boolean()) {
            throw ValidationError(fmt::format("record '{}': 'include' must be true or false", name));
        }
        record.include = include_it->get<bool>();

        if (const auto it = item.find("exclusion_reason"); it != item.end() && !it->is_null()) {
            const auto text = it->is_string() ? it->get<std::string>() : std::string{};
            record.exclusion_reason = parse_exclusion_reason(text);
            if (!record.exclusion_reason) {
                throw ValidationError(fmt::format("record '{}': unknown exclusion_reason '{}'", name, text));
            }
        }

        if (record.include) {
            if (record.technique_ids.size() < 2) {
                throw ValidationError(fmt::format(
                    "record '{}': included with {} technique(s); at least two are required "
                    "(exclude it with exclusion_reason \"fewer-than-two-techniques\")",
                    name, record.technique_ids.size()));
            }
            if (!record.published) {
                throw ValidationError(fmt::format(
                    "record '{}': included without a publication date (exclude it with exclusion_reason \"no-date\")",
                    name));
            }
            if (record.exclusion_reason) {
                throw ValidationError(fmt::format("record '{}': included records cannot carry an exclusion_reason", name));
            }
        } else if (!record.exclusion_reason) {
            throw ValidationError(fmt::format("record '{}': excluded records need an exclusion_reason", name));
        }
        records.push_back(std::move(record));
    }
    std::sort(records.begin(), records.end(),
              [](const ReportRecord& a, const ReportRecord& b) { return a.citation_key < b.citation_key; });
    return records;
}

std::vector<ReportRecord> load_manifest(const std::filesystem::path& path, const AttackCatalog& catalog) {
    return parse_manifest(parse_json(read_file(path), path.string()), &catalog);
}

Json manifest_to_json(std::span<const ReportRecord> records) {
    Json out = Json::array();
    for (const auto& r : records) {
        out.push_back({{"citation_key", r.citation_key},
                       {"url", r.url},
                       {"published", r.published ? Json(r.published->iso()) : Json(nullptr)},
                       {"technique_ids", r.technique_ids},
                       {"attribution", r.attribution},
                       {"include", r.include},
                       {"exclusion_reason",
                        r.exclusion_reason ? Json(std::string(to_string(*r.exclusion_reason))) : Json(nullptr)}});
    }
    return out;
}

std::vector<ReportRecord> manifest_template(const AttackCatalog& catalog) {
    const auto techniques = build_report_technique_map(catalog);
    const auto attribution = extract_attribution(catalog);
    std::vector<ReportRecord> out;
    for (const auto& citation : catalog.citations) {
        ReportRecord record;
        record.citation_key = citation.key;
        record.url = citation.url;
        if (citation.date_text) {
            record.published = parse_citation_date(*citation.date_text);
        }
        record.technique_ids = techniques.at(citation.key);
        record.attribution = attribution.at(citation.key);
        if (record.technique_ids.size() < 2) {
            record.exclusion_reason = ExclusionReason::fewer_than_two_techniques;
        } else if (!record.published) {
            record.exclusion_reason = ExclusionReason::no_date;
        }
        record.include = !record.exclusion_reason.has_value();
        out.push_back(std::move(record));
    }
    return out;
}

std::vector<ReportRecord> included_records(std::span<const ReportRecord> records) {
    std::vector<ReportRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [](const ReportRecord& r) { return r.include; });
    return out;
}

std::vector<DuplicateCandidatePair> find_candidate_pairs(std::span<const ReportRecord> records,
                                                         unsigned threads) {
    std::vector<const ReportRecord*> sorted;
    for (const auto& record : records) {
        if (!record.include || !record.published) {
            throw ValidationError(
                fmt::format("candidate pairs need included, dated records; '{}' is not", record.citation_key));
        }
        sorted.push_back(&record);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const ReportRecord* a, const ReportRecord* b) { return a->citation_key < b->citation_key; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i - 1]->citation_key == sorted[i]->citation_key) {
            throw ValidationError(fmt::format("duplicate citation_key '{}'", sorted[i]->citation_key));
        }
    }

    std::vector<std::vector<DuplicateCandidatePair>> partial(chunk_count(sorted.size(), threads));
    for_each_chunk(sorted.size(), threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& out = partial[chunk];
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = i + 1; j < sorted.size(); ++j) {
                auto common = intersect(sorted[i]->attribution, sorted[j]->attribution);
                if (common.empty()) {
                    continue;
                }
                out.push_back({sorted[i]->citation_key, sorted[j]->citation_key, std::move(common),
                               days_between(*sorted[i]->published, *sorted[j]->published)});
            }
        }
    });

    std::vector<DuplicateCandidatePair> pairs;
    for (auto& chunk : partial) {
        std::move(chunk.begin(), chunk.end(), std::back_inserter(pairs));
    }
    return pairs;
}

int month_bucket(std::int64_t gap_days) {
    if (gap_days <= 0) {
        return 1;
    }
    return static_cast<int>((gap_days + kDaysPerMonth - 1) / kDaysPerMonth);
}

std::vector<ElbowSample> sample_buckets(std::span<const DuplicateCandidatePair> pairs, int n_buckets,
                                        int sample_size, std::uint64_t seed) {
    if (n_buckets < 1 || sample_size < 1) {
        throw ParameterError(
            fmt::format("sample_buckets: n_buckets ({}) and sample_size ({}) must be >= 1", n_buckets, sample_size));
    }
    std::vector<std::vector<std::string>> buckets(static_cast<std::size_t>(n_buckets));
    for (const auto& pair : pairs) {
        const int bucket = month_bucket(pair.date_gap_days);
        if (bucket <= n_buckets) {
            buckets[static_cast<std::size_t>(bucket - 1)].push_back(pair.key());
        }
    }

    std::vector<ElbowSample> samples;
    for (int i = 1; i <= n_buckets; ++i) {
        auto& pool = buckets[static_cast<std::size_t>(i - 1)];
        std::sort(pool.begin(), pool.end());
        ElbowSample sample;
        sample.month_bucket = i;
        const auto wanted = static_cast<std::size_t>(sample_size);
        if (pool.size() <= wanted) {
            if (pool.size() < wanted) {
                log::info(fmt::format("elbow bucket {} holds {} pair(s), fewer than the sample size {}; using all",
                                      i, pool.size(), sample_size));
            }
            sample.sampled_pairs = pool;
        } else {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(i)};
            std::mt19937_64 rng(seq);
            for (std::size_t k = 0; k < wanted; ++k) {
                const auto pick = k + draw_below(rng, pool.size() - k);
                std::swap(pool[k], pool[pick]);
            }
            sample.sampled_pairs.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(wanted));
            std::sort(sample.sampled_pairs.begin(), sample.sampled_pairs.end());
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::vector<ElbowLabel> parse_elbow_labels(std::string_view csv) {
    const Table table = parse_csv(csv);
    require_columns(table, {"bucket", "pair_key", "is_duplicate"}, "elbow labels");
    std::vector<ElbowLabel> labels;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        ElbowLabel label;
        label.bucket = static_cast<int>(parse_int(table.text(r, "bucket"), "elbow labels: bucket"));
        label.pair_key = table.text(r, "pair_key");
        const auto& flag = table.text(r, "is_duplicate");
        if (flag == "1" || flag == "true") {
            label.is_duplicate = true;
        } else if (flag == "0" || flag == "false") {
            label.is_duplicate = false;
        } else {
            throw ValidationError(
                fmt::format("elbow labels row {}: is_duplicate must be 0/1/true/false, got '{}'", r + 2, flag));
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

std::vector<double> duplicate_fractions(std::span<const ElbowLabel> labels, int n_buckets) {
    if (n_buckets < 1) {
        throw ParameterError("duplicate_fractions: n_buckets must be >= 1");
    }
    std::vector<std::size_t> total(static_cast<std::size_t>(n_buckets), 0);
    std::vector<std::size_t> duplicates(static_cast<std::size_t>(n_buckets), 0);
    for (const auto& label : labels) {
        if (label.bucket < 1 || label.bucket > n_buckets) {
            throw ValidationError(fmt::format("elbow label for '{}' has bucket {} outside 1..{}", label.pair_key,
                                              label.bucket, n_buckets));
        }
        const auto i = static_cast<std::size_t>(label.bucket - 1);
        ++total[i];
        duplicates[i] += label.is_duplicate ? 1 : 0;
    }
    std::vector<double> fractions;
    for (std::size_t i = 0; i < total.size(); ++i) {
        if (total[i] == 0) {
            throw ValidationError(fmt::format("elbow labels: bucket {} has no labelled pairs", i + 1));
        }
        fractions.push_back(static_cast<double>(duplicates[i]) / static_cast<double>(total[i]));
    }
    return fractions;
}

int estimate_tau(std::span<const double> fractions) {
    if (fractions.size() < 2) {
        throw ParameterError("estimate_tau: need at least two duplicate fractions");
    }
    for (const double r : fractions) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw ParameterError(fmt::format("estimate_tau: fraction {} outside [0, 1]", r));
        }
    }
    int tau = 0;
    double largest_drop = 0.0;
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
        const double drop = fractions[i] - fractions[i + 1];
        if (drop > 0.0 && drop >= largest_drop) {
            largest_drop = drop;
            tau = static_cast<int>(i + 1);
        }
    }
    if (tau == 0) {
        throw ValidationError("estimate_tau: no elbow detectable (duplicate fractions never decrease)");
    }
    return tau;
}

std::vector<TechniqueSet> merge_duplicates(std::span<const ReportRecord> records,
                                           std::span<const DuplicateCandidatePair> pairs, int tau) {
    if (tau < 1) {
        throw ParameterError(fmt::format("merge_duplicates: tau must be >= 1, got {}", tau));
    }
    std::vector<const ReportRecord*> included;
    for (const auto& record : records) {
        if (record.include) {
            if (!record.published) {
                throw ValidationError(fmt::format("record '{}' is included but undated", record.citation_key));
            }
            included.push_back(&record);
        }
    }
    std::sort(included.begin(), included.end(),
              [](const ReportRecord* a, const ReportRecord* b) { return a->citation_key < b->citation_key; });
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < included.size(); ++i) {
        if (!index.emplace(included[i]->citation_key, i).second) {
            throw ValidationError(fmt::format("duplicate citation_key '{}'", included[i]->citation_key));
        }
    }

    const std::int64_t max_gap = static_cast<std::int64_t>(tau) * kDaysPerMonth;
    DisjointSet components(included.size());
    for (const auto& pair : pairs) {
        const auto a = index.find(pair.a);
        const auto b = index.find(pair.b);
        if (a == index.end() || b == index.end()) {
            throw ValidationError(fmt::format("pair '{}' references a report that is not included", pair.key()));
        }
        const auto& ra = *included[a->second];
        const auto& rb = *included[b->second];
        if (intersect(ra.attribution, rb.attribution).empty()) {
            continue;
        }
        if (days_between(*ra.published, *rb.published) <= max_gap) {
            components.unite(a->second, b->second);
        }
    }

    std::map<std::size_t, std::vector<const ReportRecord*>> members;
    for (std::size_t i = 0; i < included.size(); ++i) {
        members[components.find(i)].push_back(included[i]);
    }

    std::vector<TechniqueSet> sets;
    for (const auto& [root, group] : members) {
        TechniqueSet set;
        set.representative_date = *group.front()->published;
        set.latest_date = *group.front()->published;
        for (const auto* record : group) {
            set.member_citations.insert(record->citation_key);
            set.techniques.insert(record->technique_ids.begin(), record->technique_ids.end());
            set.representative_date = std::min(set.representative_date, *record->published);
            set.latest_date = std::max(set.latest_date, *record->published);
        }
        std::string joined;
        for (const auto& key : set.member_citations) {
            joined += key;
            joined += '\n';
        }
        set.attack_id = fnv1a64_hex(joined);
        sets.push_back(std::move(set));
    }
    std::sort(sets.begin(), sets.end(), [](const TechniqueSet& a, const TechniqueSet& b) {
        return *a.member_citations.begin() < *b.member_citations.begin();
    });
    return sets;
}

CorpusStats corpus_stats(std::span<const TechniqueSet> sets) {
    if (sets.empty()) {
        throw ValidationError("corpus_stats: empty corpus");
    }
    CorpusStats stats;
    stats.report_count = sets.size();
    std::set<TechniqueId> distinct;
    std::vector<double> sizes;
    for (const auto& set : sets) {
        stats.total_mentions += set.techniques.size();
        stats.merged_count += set.merged() ? 1 : 0;
        distinct.insert(set.techniques.begin(), set.techniques.end());
        sizes.push_back(static_cast<double>(set.techniques.size()));
    }
    stats.distinct_techniques = distinct.size();
    stats.mean_techniques = mean(sizes);
    stats.median_techniques = median(sizes);
    return stats;
}

Json corpus_to_json(std::span<const TechniqueSet> sets) {
    Json out = Json::array();
    for (const auto& set : sets) {
        out.push_back({{"attack_id", set.attack_id},
                       {"member_citations", set.member_citations},
                       {"techniques", set.techniques},
                       {"representative_date", set.representative_date.iso()},
                       {"latest_date", set.latest_date.iso()}});
    }
    return out;
}

std::vector<TechniqueSet> corpus_from_json(const Json& value) {
    if (!value.is_array()) {
        throw SchemaError("corpus: expected a JSON array of technique sets");
    }
    std::vector<TechniqueSet> sets;
    std::set<std::string> members_seen;
    try {
        for (const auto& item : value) {
            TechniqueSet set;
            set.attack_id = item.at("attack_id").get<std::string>();
            set.member_citations = item.at("member_citations").get<std::set<std::string>>();
            set.techniques = item.at("techniques").get<std::set<TechniqueId>>();
            const auto first = Date::parse_iso(item.at("representative_date").get<std::string>());
            const auto last = Date::parse_iso(item.at("latest_date").get<std::string>());
            if (!first || !last || *last < *first) {
                throw SchemaError(fmt::format("corpus: set '{}' has invalid dates", set.attack_id));
            }
            set.representative_date = *first;
            set.latest_date = *last;
            if (set.member_citations.empty() || set.techniques.empty()) {
                throw SchemaError(fmt::format("corpus: set '{}' must have members and techniques", set.attack_id));
            }
            for (const auto& member : set.member_citations) {
                if (!members_seen.insert(member).second) {
                    throw SchemaError(fmt::format("corpus: citation '{}' belongs to two sets", member));
                }
            }
            sets.push_back(std::move(set));
        }
    } catch (const Json::exception& e) {
        throw SchemaError(fmt::format("corpus JSON: {}", e.what()));
    }
    return sets;
}

Table candidate_pairs_table(std::span<const DuplicateCandidatePair> pairs) {
    Table table{{"citation_a", "citation_b", "common_attribution", "date_gap_days", "month_bucket"}, {}};
    for (const auto& pair : pairs) {
        table.rows.push_back({pair.a, pair.b, fmt::format("{}", fmt::join(pair.common_attribution, ";")),
                              std::int64_t{pair.date_gap_days}, std::int64_t{month_bucket(pair.date_gap_days)}});
    }
    return table;
}

Table elbow_samples_table(std::span<const ElbowSample> samples) {
    Table table{{"bucket", "pair_key", "is_duplicate"}, {}};
    for (const auto& sample : samples) {
        for (const auto& key : sample.sampled_pairs) {
            table.rows.push_back({std::int64_t{sample.month_bucket}, key, std::string{}});
        }
    }
    return table;
}

}  // namespace ttpmine
