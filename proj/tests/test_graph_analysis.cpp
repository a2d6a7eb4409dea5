#include <gtest/gtest.h>
#include <fmt/format.h>

#include <algorithm>
#include <random>

#include "ttpmine/error.hpp"
#include "ttpmine/graph_analysis.hpp"

using namespace ttpmine;

namespace {

std::vector<RecurringPair> pairs_of(const std::vector<std::pair<TechniqueId, TechniqueId>>& edges) {
    std::vector<RecurringPair> out;
    for (const auto& [a, b] : edges) {
        RecurringPair p;
        p.tech_a = std::min(a, b);
        p.tech_b = std::max(a, b);
        out.push_back(p);
    }
    return out;
}

const std::vector<std::pair<TechniqueId, TechniqueId>> kExample = {
    {"T1001", "T1002"}, {"T1001", "T1003"}, {"T1001", "T1004"}, {"T1002", "T1003"}, {"T1003", "T1004"}};

std::vector<RelationAnnotation> label_all(const std::vector<std::pair<TechniqueId, TechniqueId>>& edges,
                                          RelationType relation, Orientation direction) {
    std::vector<RelationAnnotation> out;
    for (const auto& [a, b] : edges) out.push_back({a, b, relation, direction});
    return out;
}

}  // namespace

TEST(Centrality, WorkedUndirectedExample) {
    const auto pairs = pairs_of(kExample);
    const auto g = build_graph(pairs, {});
    EXPECT_FALSE(g.directed);
    EXPECT_EQ(g.edges.size(), 5u);
    const auto delta = degree_centrality(g);
    EXPECT_DOUBLE_EQ(delta.at("T1001"), 0.75);
    EXPECT_DOUBLE_EQ(delta.at("T1002"), 0.5);
    EXPECT_DOUBLE_EQ(delta.at("T1003"), 0.75);
    EXPECT_DOUBLE_EQ(delta.at("T1004"), 0.5);
    EXPECT_DOUBLE_EQ(degree_centrality(g, true).at("T1001"), 1.0);
}

TEST(Centrality, WorkedDirectedExample) {
    const auto pairs = pairs_of(kExample);
    const auto labels = label_all(kExample, RelationType::follow, Orientation::ab);
    const auto g = build_graph(pairs, labels, RelationType::follow);
    EXPECT_TRUE(g.directed);
    const auto c = directed_centrality(g);
    EXPECT_DOUBLE_EQ(c.at("T1003").in, 0.5);
    EXPECT_DOUBLE_EQ(c.at("T1001").out, 0.75);
    EXPECT_DOUBLE_EQ(c.at("T1001").in, 0.0);
    EXPECT_DOUBLE_EQ(c.at("T1004").out, 0.0);
    EXPECT_THROW(degree_centrality(g), GraphTypeError);
    EXPECT_THROW(directed_centrality(build_graph(pairs, {})), GraphTypeError);
}

TEST(Centrality, BaOrientationReversesTheEdge) {
    const auto pairs = pairs_of({{"T1001", "T1002"}});
    const std::vector<RelationAnnotation> labels = {{"T1001", "T1002", RelationType::require, Orientation::ba}};
    const auto g = build_graph(pairs, labels, RelationType::require);
    ASSERT_EQ(g.edges.size(), 1u);
    EXPECT_EQ(g.edges.begin()->from, "T1002");
    EXPECT_EQ(g.edges.begin()->to, "T1001");
}

TEST(Centrality, CompleteGraphAndIsolatedNode) {
    TechniqueGraph k4;
    k4.nodes = {"T1001", "T1002", "T1003", "T1004"};
    for (const auto& a : k4.nodes) {
        for (const auto& b : k4.nodes) {
            if (a < b) k4.add_edge({a, b, std::nullopt});
        }
    }
    for (const auto& [id, d] : degree_centrality(k4)) EXPECT_DOUBLE_EQ(d, 0.75) << id;

    TechniqueGraph lone;
    lone.nodes = {"T1001", "T1002", "T1003"};
    lone.add_edge({"T1002", "T1001", std::nullopt});
    const auto d = degree_centrality(lone);
    EXPECT_DOUBLE_EQ(d.at("T1003"), 0.0);
    EXPECT_EQ(lone.edges.begin()->from, "T1001");
    EXPECT_TRUE(degree_centrality(TechniqueGraph{}).empty());

    TechniqueGraph sink;
    sink.directed = true;
    sink.nodes = {"T1001", "T1002", "T1003", "T1004"};
    sink.add_edge({"T1001", "T1004", std::nullopt});
    sink.add_edge({"T1002", "T1004", std::nullopt});
    const auto c = directed_centrality(sink);
    EXPECT_DOUBLE_EQ(c.at("T1004").in, 0.5);
    EXPECT_DOUBLE_EQ(c.at("T1004").out, 0.0);
    EXPECT_DOUBLE_EQ(c.at("T1003").in + c.at("T1003").out, 0.0);
}

TEST(Graph, RejectsBadEdgesAndLabels) {
    TechniqueGraph g;
    g.nodes = {"T1001", "T1002"};
    EXPECT_THROW(g.add_edge({"T1001", "T1001", std::nullopt}), ValidationError);
    EXPECT_THROW(g.add_edge({"T1001", "T1009", std::nullopt}), ValidationError);

    const auto pairs = pairs_of({{"T1001", "T1002"}});
    const std::vector<RelationAnnotation> unknown = {{"T1001", "T1003", RelationType::alternative, Orientation::none}};
    EXPECT_THROW(build_graph(pairs, unknown), ValidationError);
    const std::vector<RelationAnnotation> unoriented = {{"T1001", "T1002", RelationType::follow, Orientation::none}};
    EXPECT_THROW(build_graph(pairs, unoriented, RelationType::follow), ValidationError);
}

TEST(Graph, EmptyLabelsWithRelationFilterGiveNoEdges) {
    const auto pairs = pairs_of(kExample);
    const auto g = build_graph(pairs, parse_annotations(""), RelationType::same_asset);
    EXPECT_TRUE(g.edges.empty());
    EXPECT_TRUE(g.nodes.empty());
}

TEST(Graph, MultiLabelPairsCollapseOnTheAllPairsGraph) {
    const auto pairs = pairs_of({{"T1001", "T1002"}, {"T1001", "T1003"}, {"T1001", "T1004"}});
    const std::vector<RelationAnnotation> labels = {
        {"T1001", "T1002", RelationType::same_asset, Orientation::none},
        {"T1001", "T1002", RelationType::alternative, Orientation::none},
        {"T1001", "T1002", RelationType::follow, Orientation::ab},
    };
    const auto all = build_graph(pairs, labels);
    const auto eta = partner_count(all);
    EXPECT_EQ(eta.at("T1001"), 3u);
    EXPECT_EQ(eta.at("T1002"), 1u);
    const auto asset = build_graph(pairs, labels, RelationType::same_asset);
    EXPECT_EQ(asset.nodes, (std::set<TechniqueId>{"T1001", "T1002"}));
    EXPECT_EQ(partner_count(asset).at("T1002"), 1u);
}

TEST(Graph, DegreeSumsAndSubsetInvariants) {
    std::mt19937_64 rng(31);
    const std::array<RelationType, 3> relations = {RelationType::same_asset, RelationType::follow,
                                                   RelationType::happens_together};
    for (int round = 0; round < 100; ++round) {
        std::vector<std::pair<TechniqueId, TechniqueId>> edges;
        std::vector<RelationAnnotation> labels;
        for (int i = 0; i < 9; ++i) {
            for (int j = i + 1; j < 9; ++j) {
                if (rng() % 3) continue;
                const auto a = fmt::format("T{:04}", 1001 + i);
                const auto b = fmt::format("T{:04}", 1001 + j);
                edges.emplace_back(a, b);
                const auto rel = relations[rng() % relations.size()];
                labels.push_back({a, b, rel, is_directed(rel) ? (rng() % 2 ? Orientation::ab : Orientation::ba)
                                                              : Orientation::none});
            }
        }
        const auto pairs = pairs_of(edges);
        const auto all = build_graph(pairs, labels);
        const auto delta = degree_centrality(all);
        const double n = static_cast<double>(all.nodes.size());
        double degree_sum = 0;
        for (const auto& [id, d] : delta) {
            degree_sum += d * n;
            EXPECT_LE(d, (n - 1) / n + 1e-12);
        }
        EXPECT_NEAR(degree_sum, 2.0 * static_cast<double>(all.edges.size()), 1e-9);

        std::set<std::pair<TechniqueId, TechniqueId>> all_edges;
        for (const auto& e : all.edges) all_edges.insert({e.from, e.to});
        for (const auto rel : relations) {
            const auto g = build_graph(pairs, labels, rel);
            for (const auto& e : g.edges) EXPECT_TRUE(all_edges.contains(std::minmax(e.from, e.to)));
            if (!g.directed) continue;
            double in = 0, out = 0;
            const double m = static_cast<double>(g.nodes.size());
            for (const auto& [id, c] : directed_centrality(g)) {
                in += c.in * m;
                out += c.out * m;
            }
            EXPECT_NEAR(in, static_cast<double>(g.edges.size()), 1e-9);
            EXPECT_NEAR(out, static_cast<double>(g.edges.size()), 1e-9);
        }
    }
}

TEST(Graph, RelabelingPermutesCentrality) {
    const auto pairs = pairs_of(kExample);
    const std::map<TechniqueId, TechniqueId> rename = {
        {"T1001", "T1504"}, {"T1002", "T1503"}, {"T1003", "T1502"}, {"T1004", "T1501"}};
    std::vector<std::pair<TechniqueId, TechniqueId>> renamed;
    for (const auto& [a, b] : kExample) renamed.emplace_back(rename.at(a), rename.at(b));
    const auto before = degree_centrality(build_graph(pairs, {}));
    const auto after = degree_centrality(build_graph(pairs_of(renamed), {}));
    for (const auto& [id, d] : before) EXPECT_DOUBLE_EQ(after.at(rename.at(id)), d);
}

TEST(TopK, TiesAndBounds) {
    const std::map<TechniqueId, double> scores = {{"T1003", 0.1}, {"T1002", 0.5}, {"T1001", 0.5}};
    const auto two = top_k(scores, 2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].id, "T1001");
    EXPECT_EQ(two[1].id, "T1002");
    EXPECT_EQ(top_k(scores, 10).size(), 3u);
    EXPECT_EQ(top_k(scores, 10)[2].id, "T1003");
    EXPECT_THROW(top_k(scores, 0), ParameterError);
}

TEST(Annotations, ParseVariants) {
    const auto labels = parse_annotations(
        "tech_a,tech_b,relation,direction\nT1001,T1002,Same asset,none\nT1001,T1003,follow,ba\nT1002,T1003,"
        "implementation-overlap,\n");
    ASSERT_EQ(labels.size(), 3u);
    EXPECT_EQ(labels[0].relation, RelationType::same_asset);
    EXPECT_EQ(labels[1].direction, Orientation::ba);
    EXPECT_EQ(labels[2].relation, RelationType::implementation_overlap);
    EXPECT_THROW(parse_annotations("tech_a,tech_b,relation,direction\nT1001,T1002,friendship,none\n"),
                 ValidationError);
    EXPECT_THROW(parse_annotations("tech_a,tech_b,relation,direction\nT1001,T1002,require,none\n"), ValidationError);
    EXPECT_THROW(parse_annotations("tech_a,tech_b,relation,direction\nT1001,T1001,alternative,none\n"),
                 ValidationError);
    EXPECT_THROW(parse_annotations("a,b\n"), ValidationError);
}

TEST(Output, CentralityTableAndDot) {
    const auto pairs = pairs_of(kExample);
    const auto t = centrality_table(build_graph(pairs, {}));
    EXPECT_EQ(t.columns, centrality_columns());
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.text(0, "relation"), "all");
    const auto dot = to_dot(build_graph(pairs, label_all(kExample, RelationType::follow, Orientation::ab),
                                        RelationType::follow));
    EXPECT_NE(dot.find("digraph"), std::string::npos);
    EXPECT_NE(dot.find("->"), std::string::npos);
}
