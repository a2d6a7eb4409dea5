#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttpmine/relation.hpp"
#include "ttpmine/rule_miner.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

struct Edge {
    TechniqueId from;  // for undirected edges, from < to
    TechniqueId to;
    std::optional<RelationType> relation;  // empty on the all-pairs graph

    auto operator<=>(const Edge&) const = default;
};

struct TechniqueGraph {
    std::set<TechniqueId> nodes;
    std::set<Edge> edges;
    bool directed = false;
    std::optional<RelationType> relation;

    /// Throws ValidationError on a self-loop or an endpoint outside `nodes`.
    void add_edge(Edge edge);
};

/// Without `relation`, the undirected graph of all pairs (one edge per pair,
/// whatever its labels). With `relation`, only pairs carrying that label, on
/// the node set those edges touch; follow and require give directed graphs.
TechniqueGraph build_graph(std::span<const RecurringPair> pairs, std::span<const RelationAnnotation> annotations,
                           std::optional<RelationType> relation = std::nullopt);

/// deg(v) / |nodes|, or deg(v) / (|nodes| - 1) with `conventional`.
std::map<TechniqueId, double> degree_centrality(const TechniqueGraph& graph, bool conventional = false);

struct DirectedCentrality {
    double in = 0.0;
    double out = 0.0;
};

std::map<TechniqueId, DirectedCentrality> directed_centrality(const TechniqueGraph& graph,
                                                              bool conventional = false);

/// Number of distinct neighbours, ignoring direction.
std::map<TechniqueId, std::size_t> partner_count(const TechniqueGraph& graph);

struct Ranked {
    TechniqueId id;
    double score = 0.0;
};

/// Highest scores first, ties by ascending id.
std::vector<Ranked> top_k(const std::map<TechniqueId, double>& scores, int k);

Table centrality_table(const TechniqueGraph& graph, bool conventional = false);
const std::vector<std::string>& centrality_columns();

std::string to_dot(const TechniqueGraph& graph);

}  // namespace ttpmine
