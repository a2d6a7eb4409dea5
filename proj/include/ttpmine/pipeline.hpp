#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttpmine/relation.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct PipelineConfig {
    std::string bundle_path;
    std::string manifest_path;
    std::string unseen_manifest_path;
    std::string annotation_path;
    std::string elbow_labels_path;
    std::filesystem::path output_dir = "out";

    int tau = 2;                // months
    bool tau_explicit = false;  // set by config or flag; otherwise elbow labels may override
    double min_support = 0.005;
    double phi_min = 0.20;
    double alpha_rules = 0.05;
    double alpha_trend = 0.05;
    std::string trend_years = "5";  // K most recent years, or YYYY-YYYY
    std::uint64_t seed = 1;
    OutputFormat output_format = OutputFormat::csv;

    int n_buckets = 5;
    int sample_size = 20;
    unsigned threads = 1;
    bool yates = false;
    std::string universe = "catalog";  // catalog | corpus
    bool parent_match = false;
    int top_k = 5;
    bool conventional_normalization = false;
    bool exclude_revoked = false;
    std::optional<RelationType> relation;

    bool echo_summaries = true;  // stage summaries on stdout; off with --quiet
};

/// Parses the `key = value` configuration format (`#` starts a comment) on top
/// of the defaults, then checks every range. Unknown keys are rejected with the
/// closest known key as a suggestion.
PipelineConfig validate_config(std::string_view text);

/// Throws ParameterError naming the first out-of-range field.
void check_config(const PipelineConfig& config);

std::vector<std::string> config_keys();

/// Explicit trend years: the K most recent corpus years or an inclusive range.
struct TrendYears {
    std::optional<int> count;
    std::optional<std::pair<int, int>> range;
};

TrendYears parse_trend_years(std::string_view text);

enum class Stage { ingest, corpus, prevalence, mine, graph, eval };

std::string_view to_string(Stage stage);

/// Runs one stage, reading upstream artifacts from `config.output_dir`, and
/// returns the written artifact file names with their SHA-256 digests.
std::map<std::string, std::string> run_stage(Stage stage, const PipelineConfig& config,
                                             std::map<std::string, std::string>& input_digests);

/// Runs the stages in order and writes run_manifest.json.
void run_pipeline(const std::vector<Stage>& stages, const PipelineConfig& config, std::string_view subcommand);

/// Full command-line entry point. Returns 0 on success, 1 on a validation
/// error, 2 on an I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace ttpmine
