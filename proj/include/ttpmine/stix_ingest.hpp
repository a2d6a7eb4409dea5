#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ttpmine/common.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

struct TacticRecord {
    std::string id;         // TAxxxx
    std::string name;
    std::string shortname;  // kill-chain phase name, e.g. "initial-access"

    bool operator==(const TacticRecord&) const = default;
};

struct TechniqueRecord {
    TechniqueId id;
    std::string name;
    std::set<std::string> tactic_ids;
    bool is_subtechnique = false;
    std::optional<TechniqueId> parent_id;
    bool revoked_or_deprecated = false;

    bool operator==(const TechniqueRecord&) const = default;
};

/// One cited external reference, keyed by normalized URL.
struct CitationEntry {
    std::string key;
    std::string source_name;
    std::string url;
    std::optional<std::string> date_text;  // e.g. "2020, July 16"

    bool operator==(const CitationEntry&) const = default;
};

/// Typed view of an ATT&CK STIX bundle. All vectors are sorted by id/key, so two
/// bundles holding the same objects in a different order yield equal catalogs.
struct AttackCatalog {
    std::string spec_version;
    std::vector<TacticRecord> tactics;
    std::vector<TechniqueRecord> techniques;
    std::vector<CitationEntry> citations;
    // citation key -> group/software ids attributed by the objects citing it
    std::map<std::string, std::set<std::string>> attribution;
    // citation key -> technique ids whose procedures cite it
    std::map<std::string, std::set<TechniqueId>> technique_citations;
    // "uses" relationships from a group or software to a technique
    std::size_t procedure_count = 0;

    const TechniqueRecord* find_technique(std::string_view id) const;
    const TacticRecord* find_tactic(std::string_view id) const;

    bool operator==(const AttackCatalog&) const = default;
};

struct CatalogSummary {
    std::size_t tactics = 0;
    // Active counts exclude revoked and deprecated techniques.
    std::size_t techniques = 0;
    std::size_t subtechniques = 0;
    std::size_t revoked_or_deprecated = 0;
    std::size_t procedures = 0;
    std::size_t citations = 0;
    std::map<std::string, std::size_t> techniques_per_tactic;
};

/// Parses a STIX 2.0/2.1 bundle. Unknown object types are skipped.
/// Throws ParseError on malformed JSON and SchemaError on a missing `objects` array.
AttackCatalog parse_bundle(std::string_view raw);

/// Every citation key, mapped to the techniques whose procedures cite it
/// (possibly none).
std::map<std::string, std::set<TechniqueId>> build_report_technique_map(const AttackCatalog& catalog);

/// Every citation key, mapped to the groups/software attributed by objects citing it.
std::map<std::string, std::set<std::string>> extract_attribution(const AttackCatalog& catalog);

CatalogSummary summarize(const AttackCatalog& catalog);

/// Lowercases scheme and host, drops the fragment and any trailing slash.
std::string normalize_citation_url(std::string_view url);

/// Extracts "(2017, March 6)"-style dates from a citation description.
std::optional<std::string> citation_date_text(std::string_view description);

/// Full calendar date from citation date text; nullopt when month or day is missing.
std::optional<Date> parse_citation_date(std::string_view date_text);

Json catalog_to_json(const AttackCatalog& catalog);
AttackCatalog catalog_from_json(const Json& value);

}  // namespace ttpmine
