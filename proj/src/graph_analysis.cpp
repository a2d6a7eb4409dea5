#include "ttpmine/graph_analysis.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "ttpmine/error.hpp"

namespace ttpmine {

std::string_view to_string(RelationType relation) {
    switch (relation) {
        case RelationType::same_asset: return "same_asset";
        case RelationType::follow: return "follow";
        case RelationType::implementation_overlap: return "implementation_overlap";
        case RelationType::happens_together: return "happens_together";
        case RelationType::require: return "require";
        case RelationType::alternative: return "alternative";
        case RelationType::same_platform: return "same_platform";
    }
    return "unknown";
}

std::optional<RelationType> parse_relation(std::string_view text) {
    std::string key;
    for (const char c : text) {
        if (c == ' ' || c == '-' || c == '_') {
            if (!key.empty() && key.back() != '_') {
                key.push_back('_');
            }
        } else {
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    while (!key.empty() && key.back() == '_') {
        key.pop_back();
    }
    for (const auto relation : kAllRelations) {
        if (to_string(relation) == key) {
            return relation;
        }
    }
    if (key == "platform") return RelationType::same_platform;
    if (key == "asset") return RelationType::same_asset;
    if (key == "happen_together") return RelationType::happens_together;
    if (key == "follows") return RelationType::follow;
    if (key == "requires") return RelationType::require;
    return std::nullopt;
}

std::string_view to_string(Orientation orientation) {
    switch (orientation) {
        case Orientation::ab: return "ab";
        case Orientation::ba: return "ba";
        case Orientation::none: return "none";
    }
    return "none";
}

std::optional<Orientation> parse_orientation(std::string_view text) {
    if (text == "ab") return Orientation::ab;
    if (text == "ba") return Orientation::ba;
    if (text == "none" || text.empty()) return Orientation::none;
    return std::nullopt;
}

std::vector<RelationAnnotation> parse_annotations(std::string_view csv) {
    const auto table = parse_csv(csv);
    if (table.columns.empty() && table.rows.empty()) {
        return {};
    }
    require_columns(table, {"tech_a", "tech_b", "relation", "direction"}, "relation annotations");
    std::vector<RelationAnnotation> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        RelationAnnotation annotation;
        annotation.tech_a = table.text(r, "tech_a");
        annotation.tech_b = table.text(r, "tech_b");
        if (!is_technique_id(annotation.tech_a) || !is_technique_id(annotation.tech_b) ||
            annotation.tech_a == annotation.tech_b) {
            throw ValidationError(fmt::format("annotation row {}: '{}','{}' is not a pair of distinct technique ids",
                                              r + 2, annotation.tech_a, annotation.tech_b));
        }
        const auto relation = parse_relation(table.text(r, "relation"));
        if (!relation) {
            throw ValidationError(
                fmt::format("annotation row {}: unknown relation '{}'", r + 2, table.text(r, "relation")));
        }
        annotation.relation = *relation;
        const auto direction = parse_orientation(table.text(r, "direction"));
        if (!direction) {
            throw ValidationError(fmt::format("annotation row {}: direction must be ab, ba or none, got '{}'", r + 2,
                                              table.text(r, "direction")));
        }
        if (is_directed(*relation) && *direction == Orientation::none) {
            throw ValidationError(fmt::format("annotation row {}: relation {} is directed and needs ab or ba",
                                              r + 2, to_string(*relation)));
        }
        annotation.direction = *direction;
        out.push_back(std::move(annotation));
    }
    return out;
}

void TechniqueGraph::add_edge(Edge edge) {
    if (edge.from == edge.to) {
        throw ValidationError(fmt::format("self-loop on {}", edge.from));
    }
    if (!nodes.contains(edge.from) || !nodes.contains(edge.to)) {
        throw ValidationError(fmt::format("edge {} - {} has an endpoint outside the graph", edge.from, edge.to));
    }
    if (!directed && edge.to < edge.from) {
        std::swap(edge.from, edge.to);
    }
    edges.insert(std::move(edge));
}

TechniqueGraph build_graph(std::span<const RecurringPair> pairs, std::span<const RelationAnnotation> annotations,
                           std::optional<RelationType> relation) {
    std::set<std::pair<TechniqueId, TechniqueId>> known;
    for (const auto& pair : pairs) {
        known.insert(std::minmax(pair.tech_a, pair.tech_b));
    }
    for (const auto& annotation : annotations) {
        if (!known.contains(std::minmax(annotation.tech_a, annotation.tech_b))) {
            throw ValidationError(fmt::format("annotation {},{} ({}) does not match a recurring pair",
                                              annotation.tech_a, annotation.tech_b, to_string(annotation.relation)));
        }
        if (is_directed(annotation.relation) && annotation.direction == Orientation::none) {
            throw ValidationError(fmt::format("annotation {},{}: relation {} needs an orientation", annotation.tech_a,
                                              annotation.tech_b, to_string(annotation.relation)));
        }
    }

    TechniqueGraph graph;
    graph.relation = relation;
    if (!relation) {
        for (const auto& [a, b] : known) {
            graph.nodes.insert(a);
            graph.nodes.insert(b);
        }
        for (const auto& [a, b] : known) {
            graph.add_edge({a, b, std::nullopt});
        }
        return graph;
    }

    graph.directed = is_directed(*relation);
    std::vector<Edge> edges;
    for (const auto& annotation : annotations) {
        if (annotation.relation != *relation) {
            continue;
        }
        Edge edge{annotation.tech_a, annotation.tech_b, relation};
        if (graph.directed && annotation.direction == Orientation::ba) {
            std::swap(edge.from, edge.to);
        }
        graph.nodes.insert(edge.from);
        graph.nodes.insert(edge.to);
        edges.push_back(std::move(edge));
    }
    for (auto& edge : edges) {
        graph.add_edge(std::move(edge));
    }
    return graph;
}

namespace {

double normalizer(const TechniqueGraph& graph, bool conventional) {
    const auto n = static_cast<double>(graph.nodes.size());
    return conventional ? n - 1.0 : n;
}

}  // namespace

std::map<TechniqueId, double> degree_centrality(const TechniqueGraph& graph, bool conventional) {
    if (graph.directed) {
        throw GraphTypeError("degree centrality needs an undirected graph; use directed_centrality");
    }
    std::map<TechniqueId, double> out;
    if (graph.nodes.empty()) {
        return out;
    }
    std::map<TechniqueId, std::size_t> degree;
    for (const auto& node : graph.nodes) {
        degree[node] = 0;
    }
    for (const auto& edge : graph.edges) {
        ++degree[edge.from];
        ++degree[edge.to];
    }
    const double denominator = normalizer(graph, conventional);
    for (const auto& [node, d] : degree) {
        out[node] = denominator > 0 ? static_cast<double>(d) / denominator : 0.0;
    }
    return out;
}

std::map<TechniqueId, DirectedCentrality> directed_centrality(const TechniqueGraph& graph, bool conventional) {
    if (!graph.directed) {
        throw GraphTypeError("directed centrality needs a directed graph; use degree_centrality");
    }
    std::map<TechniqueId, DirectedCentrality> out;
    for (const auto& node : graph.nodes) {
        out[node] = {};
    }
    for (const auto& edge : graph.edges) {
        out[edge.to].in += 1.0;
        out[edge.from].out += 1.0;
    }
    const double denominator = normalizer(graph, conventional);
    for (auto& [node, c] : out) {
        c.in = denominator > 0 ? c.in / denominator : 0.0;
        c.out = denominator > 0 ? c.out / denominator : 0.0;
    }
    return out;
}

std::map<TechniqueId, std::size_t> partner_count(const TechniqueGraph& graph) {
    std::map<TechniqueId, std::set<TechniqueId>> neighbours;
    for (const auto& node : graph.nodes) {
        neighbours[node];
    }
    for (const auto& edge : graph.edges) {
        neighbours[edge.from].insert(edge.to);
        neighbours[edge.to].insert(edge.from);
    }
    std::map<TechniqueId, std::size_t> out;
    for (const auto& [node, set] : neighbours) {
        out[node] = set.size();
    }
    return out;
}

std::vector<Ranked> top_k(const std::map<TechniqueId, double>& scores, int k) {
    if (k < 1) {
        throw ParameterError(fmt::format("top-k needs k >= 1, got {}", k));
    }
    std::vector<Ranked> ranked;
    for (const auto& [id, score] : scores) {
        ranked.push_back({id, score});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    if (ranked.size() > static_cast<std::size_t>(k)) {
        ranked.resize(static_cast<std::size_t>(k));
    }
    return ranked;
}

const std::vector<std::string>& centrality_columns() {
    static const std::vector<std::string> columns = {"node", "relation", "delta", "delta_in", "delta_out", "eta"};
    return columns;
}

Table centrality_table(const TechniqueGraph& graph, bool conventional) {
    Table table{centrality_columns(), {}};
    const std::string relation = graph.relation ? std::string(to_string(*graph.relation)) : "all";
    const auto eta = partner_count(graph);
    if (graph.directed) {
        for (const auto& [node, c] : directed_centrality(graph, conventional)) {
            table.rows.push_back({node, relation, std::string{}, c.in, c.out,
                                  static_cast<std::int64_t>(eta.at(node))});
        }
    } else {
        for (const auto& [node, delta] : degree_centrality(graph, conventional)) {
            table.rows.push_back({node, relation, delta, std::string{}, std::string{},
                                  static_cast<std::int64_t>(eta.at(node))});
        }
    }
    return table;
}

std::string to_dot(const TechniqueGraph& graph) {
    std::string out = graph.directed ? "digraph" : "graph";
    const std::string name = graph.relation ? std::string(to_string(*graph.relation)) : "all_pairs";
    out += fmt::format(" {} {{\n", name);
    for (const auto& node : graph.nodes) {
        out += fmt::format("  \"{}\";\n", node);
    }
    const char* arrow = graph.directed ? "->" : "--";
    for (const auto& edge : graph.edges) {
        out += fmt::format("  \"{}\" {} \"{}\";\n", edge.from, arrow, edge.to);
    }
    out += "}\n";
    return out;
}

}  // namespace ttpmine
