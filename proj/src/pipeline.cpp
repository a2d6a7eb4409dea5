#include "ttpmine/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <iostream>
#include <limits>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "ttpmine/corpus_builder.hpp"
#include "ttpmine/error.hpp"
#include "ttpmine/eval_harness.hpp"
#include "ttpmine/graph_analysis.hpp"
#include "ttpmine/prevalence.hpp"
#include "ttpmine/rule_miner.hpp"
#include "ttpmine/stix_ingest.hpp"

namespace ttpmine {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r");
    return std::string(text.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty()) {
        throw ValidationError(fmt::format("config: {} expects a number, got '{}'", key, value));
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ValidationError(fmt::format("config: {} expects true or false, got '{}'", key, value));
}

OutputFormat parse_format(const std::string& value) {
    if (value == "csv") return OutputFormat::csv;
    if (value == "json") return OutputFormat::json;
    throw ValidationError(fmt::format("format must be csv or json, got '{}'", value));
}

RelationType parse_relation_or_throw(const std::string& value) {
    const auto relation = parse_relation(value);
    if (!relation) {
        throw ValidationError(fmt::format("unknown relation '{}'", value));
    }
    return *relation;
}

void apply_key(PipelineConfig& c, const std::string& key, const std::string& value) {
    if (key == "bundle_path") c.bundle_path = value;
    else if (key == "manifest_path") c.manifest_path = value;
    else if (key == "unseen_manifest_path") c.unseen_manifest_path = value;
    else if (key == "annotation_path") c.annotation_path = value;
    else if (key == "elbow_labels_path") c.elbow_labels_path = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "tau") {
        c.tau = parse_number<int>(key, value);
        c.tau_explicit = true;
    }
    else if (key == "min_support") c.min_support = parse_number<double>(key, value);
    else if (key == "phi_min") c.phi_min = parse_number<double>(key, value);
    else if (key == "alpha_rules") c.alpha_rules = parse_number<double>(key, value);
    else if (key == "alpha_trend") c.alpha_trend = parse_number<double>(key, value);
    else if (key == "trend_years") c.trend_years = value;
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "output_format") c.output_format = parse_format(value);
    else if (key == "n_buckets") c.n_buckets = parse_number<int>(key, value);
    else if (key == "sample_size") c.sample_size = parse_number<int>(key, value);
    else if (key == "threads") c.threads = parse_number<unsigned>(key, value);
    else if (key == "yates") c.yates = parse_bool(key, value);
    else if (key == "universe") c.universe = value;
    else if (key == "parent_match") c.parent_match = parse_bool(key, value);
    else if (key == "top_k") c.top_k = parse_number<int>(key, value);
    else if (key == "conventional_normalization") c.conventional_normalization = parse_bool(key, value);
    else if (key == "exclude_revoked") c.exclude_revoked = parse_bool(key, value);
    else if (key == "relation") c.relation = parse_relation_or_throw(value);
    else {
        // Suggest the closest key within half its length.
        std::string best;
        std::size_t best_distance = std::numeric_limits<std::size_t>::max();
        for (const auto& known : config_keys()) {
            const auto d = edit_distance(key, known);
            if (d <= std::max<std::size_t>(2, known.size() / 2) && d < best_distance) {
                best_distance = d;
                best = known;
            }
        }
        throw ValidationError(best.empty() ? fmt::format("config: unknown key '{}'", key)
                                           : fmt::format("config: unknown key '{}' (did you mean '{}'?)", key, best));
    }
}

}  // namespace

std::vector<std::string> config_keys() {
    return {"bundle_path", "manifest_path", "unseen_manifest_path", "annotation_path", "elbow_labels_path",
            "output_dir",  "tau",           "min_support",          "phi_min",         "alpha_rules",
            "alpha_trend", "trend_years",   "seed",                 "output_format",   "n_buckets",
            "sample_size", "threads",       "yates",                "universe",        "parent_match",
            "top_k",       "conventional_normalization",            "exclude_revoked", "relation"};
}

PipelineConfig validate_config(std::string_view text) {
    PipelineConfig config;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto cut = text.find('\n');
        std::string_view line = text.substr(0, cut);
        text = cut == std::string_view::npos ? std::string_view{} : text.substr(cut + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        const auto content = trim(line);
        if (content.empty()) {
            continue;
        }
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(fmt::format("config line {}: expected key = value", line_no));
        }
        const auto key = trim(std::string_view(content).substr(0, eq));
        const auto value = trim(std::string_view(content).substr(eq + 1));
        if (!seen.insert(key).second) {
            throw ValidationError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        }
        apply_key(config, key, value);
    }
    check_config(config);
    return config;
}

TrendYears parse_trend_years(std::string_view text) {
    TrendYears out;
    const std::string value(text);
    if (const auto dash = value.find('-'); dash != std::string::npos && dash > 0) {
        const int first = parse_number<int>("trend_years", value.substr(0, dash));
        const int last = parse_number<int>("trend_years", value.substr(dash + 1));
        if (last - first < 1) {
            throw ParameterError(fmt::format("trend_years range '{}' must span at least two years", value));
        }
        out.range = {first, last};
        return out;
    }
    const int count = parse_number<int>("trend_years", value);
    if (count < 2) {
        throw ParameterError(fmt::format("trend_years must be at least 2, got {}", count));
    }
    out.count = count;
    return out;
}

void check_config(const PipelineConfig& c) {
    if (!(c.min_support > 0.0 && c.min_support <= 1.0)) {
        throw ParameterError(fmt::format("min_support must lie in (0, 1], got {}", c.min_support));
    }
    if (!(c.phi_min >= 0.0 && c.phi_min <= 1.0)) {
        throw ParameterError(fmt::format("phi_min must lie in [0, 1], got {}", c.phi_min));
    }
    if (!(c.alpha_rules > 0.0 && c.alpha_rules < 1.0)) {
        throw ParameterError(fmt::format("alpha_rules must lie in (0, 1), got {}", c.alpha_rules));
    }
    if (!(c.alpha_trend > 0.0 && c.alpha_trend < 1.0)) {
        throw ParameterError(fmt::format("alpha_trend must lie in (0, 1), got {}", c.alpha_trend));
    }
    if (c.tau < 1) {
        throw ParameterError(fmt::format("tau must be at least 1 month, got {}", c.tau));
    }
    if (c.n_buckets < 2) {
        throw ParameterError(fmt::format("n_buckets must be at least 2, got {}", c.n_buckets));
    }
    if (c.sample_size < 1) {
        throw ParameterError(fmt::format("sample_size must be at least 1, got {}", c.sample_size));
    }
    if (c.threads < 1 || c.threads > 256) {
        throw ParameterError(fmt::format("threads must lie in [1, 256], got {}", c.threads));
    }
    if (c.top_k < 1) {
        throw ParameterError(fmt::format("top_k must be at least 1, got {}", c.top_k));
    }
    if (c.universe != "catalog" && c.universe != "corpus") {
        throw ParameterError(fmt::format("universe must be catalog or corpus, got '{}'", c.universe));
    }
    parse_trend_years(c.trend_years);
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::corpus: return "corpus";
        case Stage::prevalence: return "prevalence";
        case Stage::mine: return "mine";
        case Stage::graph: return "graph";
        case Stage::eval: return "eval";
    }
    return "unknown";
}

namespace {

using Digests = std::map<std::string, std::string>;

struct StageContext {
    const PipelineConfig& config;
    Digests& inputs;
    Digests artifacts;

    std::string table_name(std::string_view stem) const {
        return fmt::format("{}.{}", stem, config.output_format == OutputFormat::json ? "json" : "csv");
    }

    void write(const std::string& name, const std::string& content) {
        write_file_atomic(config.output_dir / name, content);
        artifacts[name] = sha256_hex(content);
        log::info(fmt::format("wrote {}", (config.output_dir / name).string()));
    }

    void write_table(std::string_view stem, const Table& table) {
        write(table_name(stem), render(table, config.output_format));
    }

    std::string read_input(const std::string& label, const std::string& path) {
        if (path.empty()) {
            throw ValidationError(fmt::format("missing required input: {}", label));
        }
        auto content = read_file(path);
        inputs[label] = sha256_hex(content);
        return content;
    }

    fs::path upstream(std::string_view name, std::string_view producer) const {
        const auto path = config.output_dir / std::string(name);
        if (!fs::exists(path)) {
            throw ValidationError(fmt::format("missing upstream artifact {}; run `ttpmine {}` first",
                                              path.string(), producer));
        }
        return path;
    }

    std::string read_upstream(std::string_view name, std::string_view producer) {
        const auto content = read_file(upstream(name, producer));
        inputs[std::string(name)] = sha256_hex(content);
        return content;
    }

    // Tables may have been written in either format by an earlier run.
    Table read_upstream_table(std::string_view stem, std::string_view producer,
                              const std::vector<std::string>& columns) {
        const bool json_first = config.output_format == OutputFormat::json;
        for (const auto* ext : {json_first ? "json" : "csv", json_first ? "csv" : "json"}) {
            const auto name = fmt::format("{}.{}", stem, ext);
            const auto path = config.output_dir / name;
            if (fs::exists(path)) {
                inputs[name] = sha256_hex(read_file(path));
                return read_table(path, columns);
            }
        }
        throw ValidationError(fmt::format("missing upstream artifact {}; run `ttpmine {}` first",
                                          (config.output_dir / table_name(stem)).string(), producer));
    }

    AttackCatalog catalog() {
        return catalog_from_json(parse_json(read_upstream("catalog.json", "ingest"), "catalog.json"));
    }

    std::vector<TechniqueSet> corpus() {
        auto sets = corpus_from_json(parse_json(read_upstream("corpus.json", "corpus"), "corpus.json"));
        if (config.exclude_revoked) {
            const auto cat = catalog();
            for (auto& set : sets) {
                std::erase_if(set.techniques, [&](const TechniqueId& id) {
                    const auto* record = cat.find_technique(id);
                    return record != nullptr && record->revoked_or_deprecated;
                });
            }
        }
        return sets;
    }

    std::vector<RelationAnnotation> annotations() {
        if (config.annotation_path.empty()) {
            return {};
        }
        return parse_annotations(read_input("annotations", config.annotation_path));
    }
};

Json summary_json(const CatalogSummary& s, const std::string& spec_version) {
    return {{"spec_version", spec_version},
            {"tactics", s.tactics},
            {"techniques", s.techniques},
            {"subtechniques", s.subtechniques},
            {"revoked_or_deprecated", s.revoked_or_deprecated},
            {"procedures", s.procedures},
            {"citations", s.citations},
            {"techniques_per_tactic", s.techniques_per_tactic}};
}

Json stats_json(const CorpusStats& s) {
    return {{"technique_sets", s.report_count},         {"merged_sets", s.merged_count},
            {"total_mentions", s.total_mentions},       {"distinct_techniques", s.distinct_techniques},
            {"mean_techniques", s.mean_techniques},     {"median_techniques", s.median_techniques}};
}

void stage_ingest(StageContext& ctx) {
    const auto raw = ctx.read_input("bundle", ctx.config.bundle_path);
    const auto catalog = parse_bundle(raw);
    const auto summary = summarize(catalog);
    ctx.write("catalog.json", canonical_json(catalog_to_json(catalog)));
    const auto summary_doc = summary_json(summary, catalog.spec_version);
    ctx.write("catalog_summary.json", canonical_json(summary_doc));
    ctx.write("manifest_template.json", canonical_json(manifest_to_json(manifest_template(catalog))));
    if (ctx.config.echo_summaries) {
        std::cout << summary_doc.dump(2) << "\n";
    }
}

void stage_corpus(StageContext& ctx) {
    const auto& config = ctx.config;
    const auto catalog = ctx.catalog();
    auto records = parse_manifest(parse_json(ctx.read_input("manifest", config.manifest_path), config.manifest_path),
                                  &catalog);
    if (config.exclude_revoked) {
        for (auto& record : records) {
            std::erase_if(record.technique_ids, [&](const TechniqueId& id) {
                const auto* t = catalog.find_technique(id);
                return t != nullptr && t->revoked_or_deprecated;
            });
            if (record.include && record.technique_ids.size() < 2) {
                record.include = false;
                record.exclusion_reason = ExclusionReason::fewer_than_two_techniques;
            }
        }
    }
    const auto included = included_records(records);
    const auto pairs = find_candidate_pairs(included, config.threads);
    ctx.write_table("candidate_pairs", candidate_pairs_table(pairs));
    const auto samples = sample_buckets(pairs, config.n_buckets, config.sample_size, config.seed);
    ctx.write_table("elbow_samples", elbow_samples_table(samples));

    Json summary = Json::object();
    int tau = config.tau;
    if (!config.elbow_labels_path.empty()) {
        const auto labels = parse_elbow_labels(ctx.read_input("elbow_labels", config.elbow_labels_path));
        const auto fractions = duplicate_fractions(labels, config.n_buckets);
        summary["duplicate_fractions"] = fractions;
        const int estimated = estimate_tau(fractions);
        summary["estimated_tau"] = estimated;
        if (!config.tau_explicit) {
            tau = estimated;
        } else if (estimated != tau) {
            log::warn(fmt::format("elbow labels suggest tau = {}, using the configured tau = {}", estimated, tau));
        }
    }
    const auto sets = merge_duplicates(included, pairs, tau);
    summary["tau"] = tau;
    summary["candidate_pairs"] = pairs.size();
    summary["included_reports"] = included.size();
    summary["stats"] = stats_json(corpus_stats(sets));
    ctx.write("corpus.json", canonical_json(corpus_to_json(sets)));
    ctx.write("corpus_summary.json", canonical_json(summary));
    if (ctx.config.echo_summaries) {
        std::cout << summary["stats"].dump(2) << "\n";
    }
}

std::vector<int> resolve_years(const std::vector<TechniqueSet>& corpus, const std::string& spec) {
    const auto years = parse_trend_years(spec);
    if (years.count) {
        return trend_window(corpus, *years.count);
    }
    std::vector<int> out;
    for (int y = years.range->first; y <= years.range->second; ++y) {
        out.push_back(y);
    }
    return out;
}

void stage_prevalence(StageContext& ctx) {
    const auto& config = ctx.config;
    const auto catalog = ctx.catalog();
    const auto corpus = ctx.corpus();

    std::set<TechniqueId> universe;
    if (config.universe == "catalog") {
        for (const auto& t : catalog.techniques) {
            if (!t.revoked_or_deprecated) {
                universe.insert(t.id);
            }
        }
    }
    for (const auto& set : corpus) {
        universe.insert(set.techniques.begin(), set.techniques.end());
    }
    const auto frequency = technique_frequency(corpus, &universe);
    const auto years = resolve_years(corpus, config.trend_years);
    const auto series = yearly_series(corpus, universe, years);
    const auto trends = analyze_trends(series, config.alpha_trend, config.threads);
    std::map<TechniqueId, Trend> classes;
    for (const auto& [id, result] : trends) {
        classes[id] = result.classification;
    }
    const auto matrix = build_matrix(percentile_bins(frequency), classes, frequency, corpus.size());
    const auto prevalent = prevalent_techniques(matrix);
    ctx.write_table("prevalence_matrix", matrix_table(matrix));
    ctx.write_table("prevalent_techniques", prevalent_table(prevalent, &catalog));
    ctx.write_table("technique_trends", trends_table(trends, matrix));
    log::info(fmt::format("{} prevalent techniques over {} technique sets, years {}-{}", prevalent.size(),
                          corpus.size(), years.front(), years.back()));
}

void stage_mine(StageContext& ctx) {
    const auto& config = ctx.config;
    const auto corpus = ctx.corpus();
    const auto itemsets = itemsets_of(corpus);
    const auto candidates = mine_pairs(itemsets, config.min_support, config.threads);
    FilterOptions options;
    options.phi_min = config.phi_min;
    options.alpha = config.alpha_rules;
    options.yates = config.yates;
    auto filtered = filter_pairs(candidates, options);
    attach_relation_labels(filtered.kept, ctx.annotations());
    const auto summary = summarize_pairs(candidates.size(), filtered.kept);

    Json histogram = Json::object();
    for (const auto& [strength, count] : summary.strength_histogram) {
        histogram[std::string(to_string(strength))] = count;
    }
    std::map<std::string, std::size_t> dropped;
    for (const auto& d : filtered.dropped) {
        ++dropped[d.reason];
    }
    const Json doc = {{"technique_sets", itemsets.size()},
                      {"min_support", config.min_support},
                      {"phi_min", config.phi_min},
                      {"alpha", config.alpha_rules},
                      {"yates", config.yates},
                      {"candidate_pairs", summary.candidate_pairs},
                      {"ordered_rules", summary.ordered_rules},
                      {"recurring_pairs", summary.recurring_pairs},
                      {"distinct_techniques", summary.distinct_techniques},
                      {"strength_histogram", histogram},
                      {"median_lift", summary.median_lift},
                      {"dropped", dropped}};
    ctx.write_table("recurring_pairs", recurring_pairs_table(filtered.kept));
    ctx.write("mining_summary.json", canonical_json(doc));
    if (ctx.config.echo_summaries) {
        std::cout << doc.dump(2) << "\n";
    }
}

void stage_graph(StageContext& ctx) {
    const auto& config = ctx.config;
    const auto pairs =
        recurring_pairs_from_table(ctx.read_upstream_table("recurring_pairs", "mine", recurring_pair_columns()));
    const auto annotations = ctx.annotations();

    std::vector<std::optional<RelationType>> selections;
    if (config.relation) {
        selections.push_back(config.relation);
    } else {
        selections.push_back(std::nullopt);
        std::set<RelationType> present;
        for (const auto& a : annotations) {
            present.insert(a.relation);
        }
        selections.insert(selections.end(), present.begin(), present.end());
    }

    Table centrality{centrality_columns(), {}};
    Table top{{"relation", "measure", "rank", "node", "score"}, {}};
    for (const auto& selection : selections) {
        const auto graph = build_graph(pairs, annotations, selection);
        const auto part = centrality_table(graph, config.conventional_normalization);
        centrality.rows.insert(centrality.rows.end(), part.rows.begin(), part.rows.end());
        const std::string name = selection ? std::string(to_string(*selection)) : "all";

        std::vector<std::pair<std::string, std::map<TechniqueId, double>>> measures;
        if (graph.directed) {
            std::map<TechniqueId, double> in;
            std::map<TechniqueId, double> out;
            for (const auto& [node, c] : directed_centrality(graph, config.conventional_normalization)) {
                in[node] = c.in;
                out[node] = c.out;
            }
            measures.emplace_back("delta_in", std::move(in));
            measures.emplace_back("delta_out", std::move(out));
        } else {
            measures.emplace_back("delta", degree_centrality(graph, config.conventional_normalization));
        }
        std::map<TechniqueId, double> eta;
        for (const auto& [node, count] : partner_count(graph)) {
            eta[node] = static_cast<double>(count);
        }
        measures.emplace_back("eta", std::move(eta));
        for (const auto& [measure, scores] : measures) {
            const auto ranked = top_k(scores, config.top_k);
            for (std::size_t i = 0; i < ranked.size(); ++i) {
                top.rows.push_back({name, measure, static_cast<std::int64_t>(i + 1), ranked[i].id, ranked[i].score});
            }
        }
        ctx.write(fmt::format("graph_{}.dot", name), to_dot(graph));
    }
    ctx.write_table("centrality", centrality);
    ctx.write_table("top_techniques", top);
}

void stage_eval(StageContext& ctx) {
    const auto& config = ctx.config;
    const auto corpus = ctx.corpus();
    EvaluationSummary summary;
    summary.cutoff = cutoff_date(corpus);
    summary.parent_match = config.parent_match;
    const auto unseen = parse_unseen_manifest(
        parse_json(ctx.read_input("unseen_manifest", config.unseen_manifest_path), config.unseen_manifest_path),
        summary.cutoff);
    summary.unseen_reports = unseen.size();

    const auto prevalent_rows =
        ctx.read_upstream_table("prevalent_techniques", "prevalence", {"id", "name", "tactic", "pct_reports", "cell"});
    std::vector<TechniqueId> prevalent;
    for (std::size_t r = 0; r < prevalent_rows.rows.size(); ++r) {
        prevalent.push_back(prevalent_rows.text(r, "id"));
    }
    const auto pairs =
        recurring_pairs_from_table(ctx.read_upstream_table("recurring_pairs", "mine", recurring_pair_columns()));
    summary.ev_a = ev_a(prevalent, unseen, config.parent_match);
    summary.ev_b = ev_b(pairs, unseen);
    ctx.write("evaluation.json", canonical_json(evaluation_to_json(summary)));
    const auto text = evaluation_text(summary);
    ctx.write("evaluation.txt", text);
    if (ctx.config.echo_summaries) {
        std::cout << text;
    }
}

Json config_json(const PipelineConfig& c) {
    // output_dir and threads are left out: neither may change any artifact.
    return {{"bundle_path", c.bundle_path},
            {"manifest_path", c.manifest_path},
            {"unseen_manifest_path", c.unseen_manifest_path},
            {"annotation_path", c.annotation_path},
            {"elbow_labels_path", c.elbow_labels_path},
            {"tau", c.tau},
            {"tau_explicit", c.tau_explicit},
            {"min_support", c.min_support},
            {"phi_min", c.phi_min},
            {"alpha_rules", c.alpha_rules},
            {"alpha_trend", c.alpha_trend},
            {"trend_years", c.trend_years},
            {"seed", c.seed},
            {"output_format", c.output_format == OutputFormat::json ? "json" : "csv"},
            {"n_buckets", c.n_buckets},
            {"sample_size", c.sample_size},
            {"yates", c.yates},
            {"universe", c.universe},
            {"parent_match", c.parent_match},
            {"top_k", c.top_k},
            {"conventional_normalization", c.conventional_normalization},
            {"exclude_revoked", c.exclude_revoked},
            {"relation", c.relation ? Json(std::string(to_string(*c.relation))) : Json(nullptr)}};
}

}  // namespace

std::map<std::string, std::string> run_stage(Stage stage, const PipelineConfig& config, Digests& input_digests) {
    StageContext ctx{config, input_digests, {}};
    log::info(fmt::format("stage {}", to_string(stage)));
    switch (stage) {
        case Stage::ingest: stage_ingest(ctx); break;
        case Stage::corpus: stage_corpus(ctx); break;
        case Stage::prevalence: stage_prevalence(ctx); break;
        case Stage::mine: stage_mine(ctx); break;
        case Stage::graph: stage_graph(ctx); break;
        case Stage::eval: stage_eval(ctx); break;
    }
    return ctx.artifacts;
}

void run_pipeline(const std::vector<Stage>& stages, const PipelineConfig& config, std::string_view subcommand) {
    check_config(config);
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) {
        throw IoError(fmt::format("cannot create output directory {}: {}", config.output_dir.string(), ec.message()));
    }
    Digests inputs;
    Digests artifacts;
    for (const auto stage : stages) {
        const auto written = run_stage(stage, config, inputs);
        artifacts.insert(written.begin(), written.end());
    }
    // Artifacts produced within this run are not external inputs.
    for (const auto& [name, digest] : artifacts) {
        inputs.erase(name);
    }
    const Json manifest = {{"tool", "ttpmine"},
                           {"version", std::string(kToolVersion)},
                           {"subcommand", std::string(subcommand)},
                           {"config", config_json(config)},
                           {"input_sha256", inputs},
                           {"artifact_sha256", artifacts}};
    write_file_atomic(config.output_dir / "run_manifest.json", canonical_json(manifest));
}

namespace {

struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::string> bundle, manifest, unseen, annotations, elbow_labels, out, format, trend_years,
        universe, relation;
    std::optional<int> tau, n_buckets, sample_size, top_k;
    std::optional<double> min_support, phi_min, alpha, alpha_rules, alpha_trend;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool yates = false, parent_match = false, conventional = false, exclude_revoked = false;
    bool quiet = false, verbose = false;
};

void add_common(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config_path, "key = value configuration file");
    app->add_option("--out", o.out, "output directory (default: out)");
    app->add_option("--format", o.format, "table format: csv or json");
    app->add_option("--threads", o.threads, "worker threads; results do not depend on it");
    app->add_flag("--exclude-revoked", o.exclude_revoked, "drop revoked or deprecated techniques");
    app->add_flag("-q,--quiet", o.quiet, "only log warnings and errors");
    app->add_flag("-v,--verbose", o.verbose, "log debug detail");
}

void add_ingest(CLI::App* app, Overrides& o) {
    app->add_option("--bundle", o.bundle, "ATT&CK STIX bundle");
}

void add_corpus(CLI::App* app, Overrides& o) {
    app->add_option("--manifest", o.manifest, "curated report manifest (JSON)");
    app->add_option("--tau", o.tau, "merge window in 30-day months");
    app->add_option("--elbow-labels", o.elbow_labels, "labelled elbow sample CSV");
    app->add_option("--seed", o.seed, "sampling seed");
    app->add_option("--n-buckets", o.n_buckets, "number of month buckets");
    app->add_option("--sample-size", o.sample_size, "pairs sampled per bucket");
}

void add_prevalence(CLI::App* app, Overrides& o, bool alpha_alias) {
    if (alpha_alias) {
        app->add_option("--alpha", o.alpha_trend, "Mann-Kendall significance level");
    }
    app->add_option("--trend-years", o.trend_years, "K most recent years, or YYYY-YYYY");
    app->add_option("--universe", o.universe, "catalog or corpus");
}

void add_mine(CLI::App* app, Overrides& o, bool alpha_alias) {
    if (alpha_alias) {
        app->add_option("--alpha", o.alpha_rules, "chi-square significance level");
    }
    app->add_option("--min-support", o.min_support, "minimum pair support");
    app->add_option("--phi-min", o.phi_min, "minimum phi coefficient");
    app->add_flag("--yates", o.yates, "Yates continuity correction");
    app->add_option("--annotations", o.annotations, "relation annotation CSV");
}

void add_graph(CLI::App* app, Overrides& o, bool with_annotations) {
    if (with_annotations) {
        app->add_option("--annotations", o.annotations, "relation annotation CSV");
    }
    app->add_option("--relation", o.relation, "restrict to one relation type");
    app->add_option("--top-k", o.top_k, "entries per top-k listing");
    app->add_flag("--conventional-normalization", o.conventional, "divide degrees by |nodes| - 1");
}

void add_eval(CLI::App* app, Overrides& o) {
    app->add_option("--unseen", o.unseen, "unseen report manifest (JSON)");
    app->add_flag("--parent-match", o.parent_match, "match sub-techniques by parent id");
}

PipelineConfig resolve_config(const Overrides& o) {
    PipelineConfig c;
    if (o.config_path) {
        c = validate_config(read_file(*o.config_path));
        // Relative input paths inside a config file are relative to that file;
        // output_dir stays relative to the working directory.
        const auto base = fs::path(*o.config_path).parent_path();
        for (auto* path : {&c.bundle_path, &c.manifest_path, &c.unseen_manifest_path, &c.annotation_path,
                           &c.elbow_labels_path}) {
            if (!path->empty() && fs::path(*path).is_relative()) {
                *path = (base / *path).string();
            }
        }
    }
    if (o.bundle) c.bundle_path = *o.bundle;
    if (o.manifest) c.manifest_path = *o.manifest;
    if (o.unseen) c.unseen_manifest_path = *o.unseen;
    if (o.annotations) c.annotation_path = *o.annotations;
    if (o.elbow_labels) c.elbow_labels_path = *o.elbow_labels;
    if (o.out) c.output_dir = *o.out;
    if (o.format) c.output_format = parse_format(*o.format);
    if (o.trend_years) c.trend_years = *o.trend_years;
    if (o.universe) c.universe = *o.universe;
    if (o.relation) c.relation = parse_relation_or_throw(*o.relation);
    if (o.tau) {
        c.tau = *o.tau;
        c.tau_explicit = true;
    }
    if (o.n_buckets) c.n_buckets = *o.n_buckets;
    if (o.sample_size) c.sample_size = *o.sample_size;
    if (o.top_k) c.top_k = *o.top_k;
    if (o.min_support) c.min_support = *o.min_support;
    if (o.phi_min) c.phi_min = *o.phi_min;
    if (o.alpha_rules) c.alpha_rules = *o.alpha_rules;
    if (o.alpha_trend) c.alpha_trend = *o.alpha_trend;
    if (o.seed) c.seed = *o.seed;
    if (o.threads) c.threads = *o.threads;
    c.yates = c.yates || o.yates;
    c.parent_match = c.parent_match || o.parent_match;
    c.conventional_normalization = c.conventional_normalization || o.conventional;
    c.exclude_revoked = c.exclude_revoked || o.exclude_revoked;
    check_config(c);
    return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Mine prevalent and recurring ATT&CK techniques from CTI report corpora", "ttpmine"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    Overrides o;

    auto* ingest = app.add_subcommand("ingest", "parse a STIX bundle into catalog.json");
    auto* corpus = app.add_subcommand("corpus", "build de-duplicated technique sets");
    auto* prevalence = app.add_subcommand("prevalence", "frequency/trend matrix and prevalent techniques");
    auto* mine = app.add_subcommand("mine", "recurring technique pairs");
    auto* graph = app.add_subcommand("graph", "relation graphs and centrality");
    auto* eval = app.add_subcommand("eval", "evaluate findings on unseen reports");
    auto* all = app.add_subcommand("all", "run every stage in order");

    for (auto* sub : {ingest, corpus, prevalence, mine, graph, eval, all}) {
        add_common(sub, o);
    }
    add_ingest(ingest, o);
    add_corpus(corpus, o);
    add_prevalence(prevalence, o, true);
    add_mine(mine, o, true);
    add_graph(graph, o, true);
    add_eval(eval, o);

    add_ingest(all, o);
    add_corpus(all, o);
    add_prevalence(all, o, false);
    add_mine(all, o, false);
    add_graph(all, o, false);
    add_eval(all, o);
    all->add_option("--alpha-trend", o.alpha_trend, "Mann-Kendall significance level");
    all->add_option("--alpha-rules", o.alpha_rules, "chi-square significance level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    log::set_level(o.quiet ? log::Level::warn : o.verbose ? log::Level::debug : log::Level::info);
    try {
        auto config = resolve_config(o);
        config.echo_summaries = !o.quiet;
        const auto* chosen = app.get_subcommands().front();
        const auto name = chosen->get_name();
        std::vector<Stage> stages;
        if (name == "all") {
            stages = {Stage::ingest, Stage::corpus, Stage::prevalence, Stage::mine, Stage::graph};
            if (!config.unseen_manifest_path.empty()) {
                stages.push_back(Stage::eval);
            }
        } else {
            for (const auto stage : {Stage::ingest, Stage::corpus, Stage::prevalence, Stage::mine, Stage::graph,
                                     Stage::eval}) {
                if (to_string(stage) == name) {
                    stages.push_back(stage);
                }
            }
        }
        run_pipeline(stages, config, name);
        return 0;
    } catch (const IoError& e) {
        log::error(e.what());
        return 2;
    } catch (const ParseError& e) {
        log::error(fmt::format("{} (byte offset {})", e.what(), e.byte_offset()));
        return 1;
    } catch (const Error& e) {
        log::error(e.what());
        return 1;
    }
}

}  // namespace ttpmine
