#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttpmine/common.hpp"

namespace ttpmine {

/// Human-coded reason two techniques co-occur. follow and require are directed.
enum class RelationType {
    same_asset,
    follow,
    implementation_overlap,
    happens_together,
    require,
    alternative,
    same_platform,
};

inline constexpr std::array<RelationType, 7> kAllRelations = {
    RelationType::same_asset,       RelationType::follow,      RelationType::implementation_overlap,
    RelationType::happens_together, RelationType::require,     RelationType::alternative,
    RelationType::same_platform,
};

std::string_view to_string(RelationType relation);

/// Accepts the snake_case names plus case, space and hyphen variants ("Same asset").
std::optional<RelationType> parse_relation(std::string_view text);

constexpr bool is_directed(RelationType relation) {
    return relation == RelationType::follow || relation == RelationType::require;
}

enum class Orientation { ab, ba, none };

std::string_view to_string(Orientation orientation);
std::optional<Orientation> parse_orientation(std::string_view text);

/// One row of the annotation file `tech_a,tech_b,relation,direction`.
struct RelationAnnotation {
    TechniqueId tech_a;
    TechniqueId tech_b;
    RelationType relation = RelationType::same_asset;
    Orientation direction = Orientation::none;
};

/// Directed relations must carry ab or ba.
std::vector<RelationAnnotation> parse_annotations(std::string_view csv);

}  // namespace ttpmine
