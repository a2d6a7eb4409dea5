#include "ttpmine/stix_ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <unordered_map>

#include <fmt/format.h>

#include "ttpmine/error.hpp"

namespace ttpmine {

namespace {

constexpr std::array<std::string_view, 3> kAttackSources = {"mitre-attack", "mitre-mobile-attack",
                                                            "mitre-ics-attack"};

bool is_attack_source(std::string_view name) {
    return std::find(kAttackSources.begin(), kAttackSources.end(), name) != kAttackSources.end();
}

std::string string_field(const Json& object, const char* key) {
    const auto it = object.find(key);
    if (it == object.end() || !it->is_string()) {
        return {};
    }
    return it->get<std::string>();
}

bool bool_field(const Json& object, const char* key) {
    const auto it = object.find(key);
    return it != object.end() && it->is_boolean() && it->get<bool>();
}

const Json& references_of(const Json& object) {
    static const Json empty = Json::array();
    const auto it = object.find("external_references");
    if (it == object.end() || !it->is_array()) {
        return empty;
    }
    return *it;
}

// ATT&CK id (Txxxx, TAxxxx, Gxxxx, Sxxxx) carried by the object's own reference.
std::string attack_external_id(const Json& object) {
    for (const auto& ref : references_of(object)) {
        if (ref.is_object() && is_attack_source(string_field(ref, "source_name"))) {
            auto id = string_field(ref, "external_id");
            if (!id.empty()) {
                return id;
            }
        }
    }
    return {};
}

struct RawCitation {
    std::string source_name;
    std::string url;
    std::optional<std::string> date_text;
};

// References with a URL and no external_id are citations; the rest point at
// catalog entries (ATT&CK, CAPEC, ...).
std::vector<std::pair<std::string, RawCitation>> citations_of(const Json& object) {
    std::vector<std::pair<std::string, RawCitation>> out;
    for (const auto& ref : references_of(object)) {
        if (!ref.is_object() || ref.contains("external_id")) {
            continue;
        }
        const auto url = string_field(ref, "url");
        if (url.empty()) {
            continue;
        }
        auto key = normalize_citation_url(url);
        if (key.empty()) {
            continue;
        }
        out.emplace_back(std::move(key),
                         RawCitation{string_field(ref, "source_name"), url,
                                     citation_date_text(string_field(ref, "description"))});
    }
    return out;
}

struct TechniqueCandidate {
    TechniqueRecord record;
    std::string stix_id;
    std::vector<std::string> phase_names;
};

// Among objects sharing an ATT&CK id, prefer the active one, then the smallest STIX id.
bool preferred(const TechniqueCandidate& a, const TechniqueCandidate& b) {
    if (a.record.revoked_or_deprecated != b.record.revoked_or_deprecated) {
        return !a.record.revoked_or_deprecated;
    }
    return a.stix_id < b.stix_id;
}

struct CitationBuilder {
    std::map<std::string, std::vector<RawCitation>> seen;

    void add(const std::string& key, RawCitation citation) { seen[key].push_back(std::move(citation)); }

    std::vector<CitationEntry> finish() {
        std::vector<CitationEntry> out;
        out.reserve(seen.size());
        for (auto& [key, raws] : seen) {
            std::sort(raws.begin(), raws.end(), [](const RawCitation& a, const RawCitation& b) {
                if (a.source_name != b.source_name) {
                    return a.source_name < b.source_name;
                }
                if (a.url != b.url) {
                    return a.url < b.url;
                }
                return a.date_text < b.date_text;
            });
            CitationEntry entry{key, raws.front().source_name, raws.front().url, std::nullopt};
            for (const auto& raw : raws) {
                if (raw.date_text) {
                    entry.date_text = raw.date_text;
                    break;
                }
            }
            out.push_back(std::move(entry));
        }
        return out;
    }
};

std::string sniff_spec_version(const Json& root, const Json& objects) {
    if (auto v = string_field(root, "spec_version"); !v.empty()) {
        return v;
    }
    for (const auto& object : objects) {
        if (object.is_object()) {
            if (auto v = string_field(object, "spec_version"); !v.empty()) {
                return v;
            }
        }
    }
    return "2.0";
}

}  // namespace

const TechniqueRecord* AttackCatalog::find_technique(std::string_view id) const {
    const auto it = std::lower_bound(techniques.begin(), techniques.end(), id,
                                     [](const TechniqueRecord& t, std::string_view v) { return t.id < v; });
    return it != techniques.end() && it->id == id ? &*it : nullptr;
}

const TacticRecord* AttackCatalog::find_tactic(std::string_view id) const {
    const auto it = std::lower_bound(tactics.begin(), tactics.end(), id,
                                     [](const TacticRecord& t, std::string_view v) { return t.id < v; });
    return it != tactics.end() && it->id == id ? &*it : nullptr;
}

std::string normalize_citation_url(std::string_view url) {
    while (!url.empty() && std::isspace(static_cast<unsigned char>(url.front()))) {
        url.remove_prefix(1);
    }
    while (!url.empty() && std::isspace(static_cast<unsigned char>(url.back()))) {
        url.remove_suffix(1);
    }
    if (const auto hash = url.find('#'); hash != std::string_view::npos) {
        url = url.substr(0, hash);
    }
    std::string out(url);
    const auto scheme_end = out.find("://");
    const std::size_t authority_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto authority_end = out.find_first_of("/?", authority_begin);
    if (authority_end == std::string::npos) {
        authority_end = out.size();
    }
    std::transform(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(authority_end), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    while (out.size() > authority_begin && out.back() == '/') {
        out.pop_back();
    }
    return out;
}

std::optional<std::string> citation_date_text(std::string_view description) {
    static const std::regex pattern(R"(\((\d{4}(?:, [A-Z][a-z]+(?: \d{1,2})?)?)\))");
    std::match_results<std::string_view::const_iterator> match;
    if (std::regex_search(description.begin(), description.end(), match, pattern)) {
        return match[1].str();
    }
    return std::nullopt;
}

std::optional<Date> parse_citation_date(std::string_view date_text) {
    static constexpr std::array<std::string_view, 12> kMonths = {
        "January", "February", "March",     "April",   "May",      "June",
        "July",    "August",   "September", "October", "November", "December"};
    static const std::regex pattern(R"(^(\d{4}), ([A-Z][a-z]+) (\d{1,2})$)");
    std::match_results<std::string_view::const_iterator> match;
    if (!std::regex_match(date_text.begin(), date_text.end(), match, pattern)) {
        return std::nullopt;
    }
    const auto month_it = std::find(kMonths.begin(), kMonths.end(), match[2].str());
    if (month_it == kMonths.end()) {
        return std::nullopt;
    }
    const auto month = static_cast<unsigned>(month_it - kMonths.begin() + 1);
    std::chrono::year_month_day ymd{std::chrono::year{std::stoi(match[1].str())},
                                    std::chrono::month{month},
                                    std::chrono::day{static_cast<unsigned>(std::stoi(match[3].str()))}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    return Date{std::chrono::sys_days{ymd}};
}

AttackCatalog parse_bundle(std::string_view raw) {
    const Json root = parse_json(raw, "STIX bundle");
    if (!root.is_object()) {
        throw SchemaError("STIX bundle: top-level value must be an object");
    }
    const auto objects_it = root.find("objects");
    if (objects_it == root.end() || !objects_it->is_array()) {
        throw SchemaError("STIX bundle: missing 'objects' array");
    }
    const Json& objects = *objects_it;

    AttackCatalog catalog;
    catalog.spec_version = sniff_spec_version(root, objects);

    std::map<std::string, TacticRecord> tactics_by_id;
    std::map<std::string, TechniqueCandidate> techniques_by_id;
    std::unordered_map<std::string, std::string> technique_by_stix;
    std::unordered_map<std::string, std::string> actor_by_stix;
    std::vector<const Json*> relationships;
    CitationBuilder citations;

    for (std::size_t index = 0; index < objects.size(); ++index) {
        const Json& object = objects[index];
        if (!object.is_object()) {
            throw SchemaError(fmt::format("STIX bundle: objects[{}] is not an object", index));
        }
        const auto type = string_field(object, "type");
        if (type.empty()) {
            throw SchemaError(fmt::format("STIX bundle: objects[{}] has no type", index));
        }
        const auto stix_id = string_field(object, "id");

        if (type == "x-mitre-tactic") {
            const auto id = attack_external_id(object);
            if (!is_tactic_id(id)) {
                throw SchemaError(fmt::format("tactic {} has malformed ATT&CK id '{}'", stix_id, id));
            }
            tactics_by_id.insert_or_assign(
                id, TacticRecord{id, string_field(object, "name"), string_field(object, "x_mitre_shortname")});
        } else if (type == "attack-pattern") {
            const auto id = attack_external_id(object);
            if (!is_technique_id(id)) {
                throw SchemaError(fmt::format("technique {} has malformed ATT&CK id '{}'", stix_id, id));
            }
            TechniqueCandidate candidate;
            candidate.stix_id = stix_id;
            candidate.record.id = id;
            candidate.record.name = string_field(object, "name");
            candidate.record.is_subtechnique = id.find('.') != std::string::npos;
            if (candidate.record.is_subtechnique) {
                candidate.record.parent_id = base_technique_id(id);
            }
            candidate.record.revoked_or_deprecated =
                bool_field(object, "revoked") || bool_field(object, "x_mitre_deprecated");
            if (const auto phases = object.find("kill_chain_phases"); phases != object.end() && phases->is_array()) {
                for (const auto& phase : *phases) {
                    if (phase.is_object() && string_field(phase, "kill_chain_name").starts_with("mitre-")) {
                        candidate.phase_names.push_back(string_field(phase, "phase_name"));
                    }
                }
            }
            technique_by_stix[stix_id] = id;
            for (auto& [key, citation] : citations_of(object)) {
                citations.add(key, std::move(citation));
            }
            auto [it, inserted] = techniques_by_id.try_emplace(id, candidate);
            if (!inserted && preferred(candidate, it->second)) {
                it->second = std::move(candidate);
            }
        } else if (type == "intrusion-set" || type == "malware" || type == "tool") {
            auto actor = attack_external_id(object);
            if (actor.empty()) {
                actor = stix_id;
            }
            actor_by_stix[stix_id] = actor;
            for (auto& [key, citation] : citations_of(object)) {
                catalog.attribution[key].insert(actor);
                citations.add(key, std::move(citation));
            }
        } else if (type == "relationship") {
            relationships.push_back(&object);
        }
    }

    // Relationships may precede the objects they reference, hence the second pass.
    for (const Json* relationship : relationships) {
        const Json& rel = *relationship;
        if (string_field(rel, "relationship_type") != "uses" || bool_field(rel, "revoked") ||
            bool_field(rel, "x_mitre_deprecated")) {
            continue;
        }
        const auto source = actor_by_stix.find(string_field(rel, "source_ref"));
        if (source == actor_by_stix.end()) {
            continue;
        }
        const auto target_ref = string_field(rel, "target_ref");
        const auto technique = technique_by_stix.find(target_ref);
        const auto target_actor = actor_by_stix.find(target_ref);
        if (technique != technique_by_stix.end()) {
            ++catalog.procedure_count;
        } else if (target_actor == actor_by_stix.end()) {
            continue;
        }
        for (auto& [key, citation] : citations_of(rel)) {
            auto& actors = catalog.attribution[key];
            actors.insert(source->second);
            if (technique != technique_by_stix.end()) {
                catalog.technique_citations[key].insert(technique->second);
            } else {
                actors.insert(target_actor->second);
            }
            citations.add(key, std::move(citation));
        }
    }

    std::unordered_map<std::string, std::string> tactic_by_shortname;
    for (auto& [id, tactic] : tactics_by_id) {
        tactic_by_shortname[tactic.shortname] = id;
        catalog.tactics.push_back(tactic);
    }

    for (auto& [id, candidate] : techniques_by_id) {
        for (const auto& phase : candidate.phase_names) {
            if (const auto it = tactic_by_shortname.find(phase); it != tactic_by_shortname.end()) {
                candidate.record.tactic_ids.insert(it->second);
            }
        }
    }
    for (auto& [id, candidate] : techniques_by_id) {
        auto& record = candidate.record;
        if (record.tactic_ids.empty() && record.parent_id) {
            if (const auto parent = techniques_by_id.find(*record.parent_id); parent != techniques_by_id.end()) {
                record.tactic_ids = parent->second.record.tactic_ids;
            }
        }
        if (record.tactic_ids.empty() && !record.revoked_or_deprecated) {
            throw SchemaError(fmt::format("technique {} has no resolvable tactic", id));
        }
        catalog.techniques.push_back(record);
    }

    catalog.citations = citations.finish();
    return catalog;
}

std::map<std::string, std::set<TechniqueId>> build_report_technique_map(const AttackCatalog& catalog) {
    std::map<std::string, std::set<TechniqueId>> out;
    for (const auto& citation : catalog.citations) {
        const auto it = catalog.technique_citations.find(citation.key);
        out.emplace(citation.key, it == catalog.technique_citations.end() ? std::set<TechniqueId>{} : it->second);
    }
    return out;
}

std::map<std::string, std::set<std::string>> extract_attribution(const AttackCatalog& catalog) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& citation : catalog.citations) {
        const auto it = catalog.attribution.find(citation.key);
        out.emplace(citation.key, it == catalog.attribution.end() ? std::set<std::string>{} : it->second);
    }
    return out;
}

CatalogSummary summarize(const AttackCatalog& catalog) {
    CatalogSummary summary;
    summary.tactics = catalog.tactics.size();
    summary.procedures = catalog.procedure_count;
    summary.citations = catalog.citations.size();
    for (const auto& tactic : catalog.tactics) {
        summary.techniques_per_tactic[tactic.id] = 0;
    }
    for (const auto& technique : catalog.techniques) {
        if (technique.revoked_or_deprecated) {
            ++summary.revoked_or_deprecated;
            continue;
        }
        ++summary.techniques;
        if (technique.is_subtechnique) {
            ++summary.subtechniques;
        }
        for (const auto& tactic : technique.tactic_ids) {
            ++summary.techniques_per_tactic[tactic];
        }
    }
    return summary;
}

Json catalog_to_json(const AttackCatalog& catalog) {
    Json out = Json::object();
    out["spec_version"] = catalog.spec_version;
    out["procedure_count"] = catalog.procedure_count;

    Json tactics = Json::array();
    for (const auto& t : catalog.tactics) {
        tactics.push_back({{"id", t.id}, {"name", t.name}, {"shortname", t.shortname}});
    }
    out["tactics"] = std::move(tactics);

    Json techniques = Json::array();
    for (const auto& t : catalog.techniques) {
        techniques.push_back({{"id", t.id},
                              {"name", t.name},
                              {"tactic_ids", t.tactic_ids},
                              {"is_subtechnique", t.is_subtechnique},
                              {"parent_id", t.parent_id ? Json(*t.parent_id) : Json(nullptr)},
                              {"revoked_or_deprecated", t.revoked_or_deprecated}});
    }
    out["techniques"] = std::move(techniques);

    Json citations = Json::array();
    for (const auto& c : catalog.citations) {
        citations.push_back({{"key", c.key},
                             {"source_name", c.source_name},
                             {"url", c.url},
                             {"date_text", c.date_text ? Json(*c.date_text) : Json(nullptr)}});
    }
    out["citations"] = std::move(citations);
    out["attribution"] = catalog.attribution;
    out["technique_citations"] = catalog.technique_citations;
    return out;
}

AttackCatalog catalog_from_json(const Json& value) {
    try {
        AttackCatalog catalog;
        catalog.spec_version = value.at("spec_version").get<std::string>();
        catalog.procedure_count = value.at("procedure_count").get<std::size_t>();
        for (const auto& t : value.at("tactics")) {
            catalog.tactics.push_back({t.at("id").get<std::string>(), t.at("name").get<std::string>(),
                                       t.at("shortname").get<std::string>()});
        }
        for (const auto& t : value.at("techniques")) {
            TechniqueRecord record;
            record.id = t.at("id").get<std::string>();
            record.name = t.at("name").get<std::string>();
            record.tactic_ids = t.at("tactic_ids").get<std::set<std::string>>();
            record.is_subtechnique = t.at("is_subtechnique").get<bool>();
            if (!t.at("parent_id").is_null()) {
                record.parent_id = t.at("parent_id").get<std::string>();
            }
            record.revoked_or_deprecated = t.at("revoked_or_deprecated").get<bool>();
            if (!is_technique_id(record.id) || record.is_subtechnique != (record.id.find('.') != std::string::npos) ||
                record.is_subtechnique != record.parent_id.has_value()) {
                throw SchemaError(fmt::format("catalog: inconsistent technique record '{}'", record.id));
            }
            catalog.techniques.push_back(std::move(record));
        }
        for (const auto& c : value.at("citations")) {
            CitationEntry entry{c.at("key").get<std::string>(), c.at("source_name").get<std::string>(),
                                c.at("url").get<std::string>(), std::nullopt};
            if (!c.at("date_text").is_null()) {
                entry.date_text = c.at("date_text").get<std::string>();
            }
            catalog.citations.push_back(std::move(entry));
        }
        catalog.attribution = value.at("attribution").get<std::map<std::string, std::set<std::string>>>();
        catalog.technique_citations =
            value.at("technique_citations").get<std::map<std::string, std::set<TechniqueId>>>();

        auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
        std::sort(catalog.tactics.begin(), catalog.tactics.end(), by_id);
        std::sort(catalog.techniques.begin(), catalog.techniques.end(), by_id);
        std::sort(catalog.citations.begin(), catalog.citations.end(),
                  [](const auto& a, const auto& b) { return a.key < b.key; });
        for (std::size_t i = 1; i < catalog.citations.size(); ++i) {
            if (catalog.citations[i - 1].key == catalog.citations[i].key) {
                throw SchemaError(fmt::format("catalog: duplicate citation key '{}'", catalog.citations[i].key));
            }
        }
        for (const auto& [key, ids] : catalog.technique_citations) {
            for (const auto& id : ids) {
                if (catalog.find_technique(id) == nullptr) {
                    throw SchemaError(fmt::format("catalog: citation '{}' maps unknown technique '{}'", key, id));
                }
            }
        }
        return catalog;
    } catch (const Json::exception& e) {
        throw SchemaError(fmt::format("catalog JSON: {}", e.what()));
    }
}

}  // namespace ttpmine
