#include "ttpmine/eval_harness.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "ttpmine/error.hpp"

namespace ttpmine {

Date cutoff_date(std::span<const TechniqueSet> corpus) {
    if (corpus.empty()) {
        throw ValidationError("cutoff date of an empty corpus");
    }
    Date latest = corpus.front().latest_date;
    for (const auto& set : corpus) {
        latest = std::max(latest, set.latest_date);
    }
    return latest;
}

std::vector<UnseenReport> parse_unseen_manifest(const Json& manifest, const Date& cutoff) {
    if (!manifest.is_array()) {
        throw SchemaError("unseen manifest must be a JSON array of report objects");
    }
    std::vector<UnseenReport> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& entry = manifest[i];
        if (!entry.is_object()) {
            throw SchemaError(fmt::format("unseen manifest entry {} is not an object", i));
        }
        if (entry.contains("include") && entry["include"].is_boolean() && !entry["include"].get<bool>()) {
            continue;
        }
        UnseenReport report;
        const char* key = entry.contains("id") ? "id" : "citation_key";
        if (!entry.contains(key) || !entry[key].is_string() || entry[key].get<std::string>().empty()) {
            throw SchemaError(fmt::format("unseen manifest entry {} needs a string id", i));
        }
        report.id = entry[key].get<std::string>();
        if (!seen.insert(report.id).second) {
            throw ValidationError(fmt::format("unseen manifest: duplicate id '{}'", report.id));
        }
        if (!entry.contains("published") || !entry["published"].is_string()) {
            throw SchemaError(fmt::format("unseen report '{}' needs a published date", report.id));
        }
        const auto published = Date::parse_iso(entry["published"].get<std::string>());
        if (!published) {
            throw ValidationError(fmt::format("unseen report '{}': published '{}' is not YYYY-MM-DD", report.id,
                                              entry["published"].get<std::string>()));
        }
        if (!(*published > cutoff)) {
            throw ValidationError(fmt::format("unseen report '{}' is dated {}, not after the corpus cutoff {}",
                                              report.id, published->iso(), cutoff.iso()));
        }
        report.published = *published;
        if (!entry.contains("technique_ids") || !entry["technique_ids"].is_array()) {
            throw SchemaError(fmt::format("unseen report '{}' needs a technique_ids array", report.id));
        }
        for (const auto& id : entry["technique_ids"]) {
            if (!id.is_string() || !is_technique_id(id.get<std::string>())) {
                throw ValidationError(fmt::format("unseen report '{}': bad technique id {}", report.id, id.dump()));
            }
            report.technique_ids.insert(id.get<std::string>());
        }
        if (report.technique_ids.empty()) {
            throw ValidationError(fmt::format("unseen report '{}' lists no techniques", report.id));
        }
        out.push_back(std::move(report));
    }
    std::sort(out.begin(), out.end(), [](const UnseenReport& a, const UnseenReport& b) { return a.id < b.id; });
    return out;
}

std::vector<UnseenReport> load_unseen_manifest(const std::filesystem::path& path, const Date& cutoff) {
    return parse_unseen_manifest(parse_json(read_file(path), path.string()), cutoff);
}

namespace {

void require_unseen(std::span<const UnseenReport> unseen) {
    if (unseen.empty()) {
        throw ValidationError("evaluation needs at least one unseen report");
    }
}

bool mentions(const UnseenReport& report, const TechniqueId& id, bool parent_match) {
    if (!parent_match) {
        return report.technique_ids.contains(id);
    }
    const auto base = base_technique_id(id);
    return std::any_of(report.technique_ids.begin(), report.technique_ids.end(),
                       [&](const TechniqueId& t) { return base_technique_id(t) == base; });
}

}  // namespace

EvAResult ev_a(std::span<const TechniqueId> prevalent, std::span<const UnseenReport> unseen, bool parent_match) {
    if (prevalent.empty()) {
        throw ValidationError("EV-A needs at least one prevalent technique");
    }
    require_unseen(unseen);
    EvAResult result;
    const std::set<TechniqueId> targets(prevalent.begin(), prevalent.end());
    result.prevalent_total = targets.size();

    for (const auto& id : targets) {
        const bool found = std::any_of(unseen.begin(), unseen.end(),
                                       [&](const UnseenReport& r) { return mentions(r, id, parent_match); });
        (found ? result.found : result.missing).push_back(id);
    }

    std::vector<double> per_report;
    for (const auto& report : unseen) {
        const auto hits = std::count_if(targets.begin(), targets.end(),
                                        [&](const TechniqueId& id) { return mentions(report, id, parent_match); });
        per_report.push_back(static_cast<double>(hits));
    }
    result.mean_per_report = mean(per_report);
    result.median_per_report = median(per_report);

    std::map<TechniqueId, std::size_t> frequency;
    for (const auto& report : unseen) {
        for (const auto& id : report.technique_ids) {
            ++frequency[id];
        }
    }
    std::vector<std::pair<TechniqueId, std::size_t>> ranked(frequency.begin(), frequency.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < ranked.size() && i < 20; ++i) {
        result.unseen_top20.push_back(ranked[i].first);
    }
    std::set<TechniqueId> top_bases;
    for (const auto& id : result.unseen_top20) {
        top_bases.insert(base_technique_id(id));
    }
    const std::set<TechniqueId> top(result.unseen_top20.begin(), result.unseen_top20.end());
    for (const auto& id : targets) {
        if (top.contains(id)) {
            ++result.top20_overlap;
        }
        if (top_bases.contains(base_technique_id(id))) {
            ++result.top20_overlap_parent_match;
        }
    }
    return result;
}

EvBResult ev_b(std::span<const RecurringPair> pairs, std::span<const UnseenReport> unseen) {
    if (pairs.empty()) {
        throw ValidationError("EV-B needs at least one recurring pair");
    }
    require_unseen(unseen);
    EvBResult result;
    result.pairs_total = pairs.size();

    std::set<TechniqueId> universe;
    for (const auto& report : unseen) {
        universe.insert(report.technique_ids.begin(), report.technique_ids.end());
    }
    std::vector<const RecurringPair*> valid;
    for (const auto& pair : pairs) {
        if (universe.contains(pair.tech_a) && universe.contains(pair.tech_b)) {
            valid.push_back(&pair);
        }
    }
    result.valid_pairs = valid.size();

    std::set<const RecurringPair*> matched;
    std::vector<double> per_report;
    for (const auto& report : unseen) {
        std::size_t hits = 0;
        for (const auto* pair : valid) {
            if (report.technique_ids.contains(pair->tech_a) && report.technique_ids.contains(pair->tech_b)) {
                ++hits;
                matched.insert(pair);
            }
        }
        per_report.push_back(static_cast<double>(hits));
        result.pair_occurrences += hits;
        if (hits > 0) {
            ++result.reports_with_pair;
        }
    }
    result.mean_pairs_per_report = mean(per_report);
    result.mean_pairs_per_matching_report =
        result.reports_with_pair == 0
            ? 0.0
            : static_cast<double>(result.pair_occurrences) / static_cast<double>(result.reports_with_pair);

    for (const auto relation : kAllRelations) {
        result.per_relation_matches[relation] = 0;
    }
    for (const auto* pair : matched) {
        result.matched.emplace_back(pair->tech_a, pair->tech_b);
        for (const auto relation : pair->relation_labels) {
            ++result.per_relation_matches[relation];
        }
    }
    std::sort(result.matched.begin(), result.matched.end());
    return result;
}

std::vector<std::pair<TechniqueId, TechniqueId>> matched_pairs_by_pair_scan(std::span<const RecurringPair> pairs,
                                                                            std::span<const UnseenReport> unseen) {
    std::vector<std::pair<TechniqueId, TechniqueId>> out;
    for (const auto& pair : pairs) {
        for (const auto& report : unseen) {
            if (report.technique_ids.contains(pair.tech_a) && report.technique_ids.contains(pair.tech_b)) {
                out.emplace_back(pair.tech_a, pair.tech_b);
                break;
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Json evaluation_to_json(const EvaluationSummary& summary) {
    const auto& a = summary.ev_a;
    const auto& b = summary.ev_b;
    Json matched = Json::array();
    for (const auto& [x, y] : b.matched) {
        matched.push_back(Json::array({x, y}));
    }
    Json per_relation = Json::object();
    for (const auto& [relation, count] : b.per_relation_matches) {
        per_relation[std::string(to_string(relation))] = count;
    }
    return {
        {"cutoff", summary.cutoff.iso()},
        {"unseen_reports", summary.unseen_reports},
        {"parent_match", summary.parent_match},
        {"ev_a",
         {{"prevalent_total", a.prevalent_total},
          {"prevalent_found", a.found.size()},
          {"found", a.found},
          {"missing", a.missing},
          {"mean_prevalent_per_report", a.mean_per_report},
          {"median_prevalent_per_report", a.median_per_report},
          {"unseen_top20", a.unseen_top20},
          {"top20_overlap", a.top20_overlap},
          {"top20_overlap_parent_match", a.top20_overlap_parent_match}}},
        {"ev_b",
         {{"pairs_total", b.pairs_total},
          {"valid_pairs", b.valid_pairs},
          {"matched_pairs", b.matched.size()},
          {"matched", matched},
          {"reports_with_pair", b.reports_with_pair},
          {"pair_occurrences", b.pair_occurrences},
          {"mean_pairs_per_report", b.mean_pairs_per_report},
          {"mean_pairs_per_matching_report", b.mean_pairs_per_matching_report},
          {"per_relation_matches", per_relation}}},
    };
}

std::string evaluation_text(const EvaluationSummary& summary) {
    const auto& a = summary.ev_a;
    const auto& b = summary.ev_b;
    std::string out;
    out += fmt::format("cutoff: {}\nunseen reports: {}\nparent match: {}\n\n", summary.cutoff.iso(),
                       summary.unseen_reports, summary.parent_match ? "on" : "off");
    out += fmt::format("EV-A prevalent found: {}/{}\n", a.found.size(), a.prevalent_total);
    if (!a.missing.empty()) {
        out += fmt::format("EV-A missing: {}\n", fmt::join(a.missing, ", "));
    }
    out += fmt::format("EV-A prevalent per report: mean {}, median {}\n", format_number(a.mean_per_report),
                       format_number(a.median_per_report));
    out += fmt::format("EV-A top-20 overlap: {} exact, {} by parent id\n\n", a.top20_overlap,
                       a.top20_overlap_parent_match);
    out += fmt::format("EV-B valid pairs: {}/{}\n", b.valid_pairs, b.pairs_total);
    out += fmt::format("EV-B matched pairs: {}\n", b.matched.size());
    out += fmt::format("EV-B reports with a pair: {}/{}\n", b.reports_with_pair, summary.unseen_reports);
    out += fmt::format("EV-B pairs per report: {} over all reports, {} over reports with a pair\n",
                       format_number(b.mean_pairs_per_report), format_number(b.mean_pairs_per_matching_report));
    for (const auto& [relation, count] : b.per_relation_matches) {
        out += fmt::format("EV-B matched {}: {}\n", to_string(relation), count);
    }
    return out;
}

}  // namespace ttpmine
