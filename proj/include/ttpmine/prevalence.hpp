#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttpmine/corpus_builder.hpp"
#include "ttpmine/stix_ingest.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

enum class Trend { increasing, no_trend, decreasing };
enum class FrequencyBin { low, medium, high };

std::string_view to_string(Trend trend);
std::string_view to_string(FrequencyBin bin);

/// Share of each year's technique sets that mention one technique.
struct YearlySeries {
    TechniqueId technique_id;
    std::vector<int> years;
    std::vector<double> values;
};

struct TrendResult {
    TechniqueId technique_id;
    std::int64_t s_statistic = 0;
    double variance = 0.0;  // tie-corrected Var(S)
    double z_score = 0.0;
    double p_value = 1.0;
    Trend classification = Trend::no_trend;
};

struct MatrixCell {
    Trend trend = Trend::no_trend;
    FrequencyBin bin = FrequencyBin::low;
    std::vector<TechniqueId> techniques;  // sorted by id
    double median_pct = 0.0;              // median of 100 * frequency / corpus size
    double mention_share = 0.0;           // fraction of all analyzed mentions
};

struct PrevalenceMatrix {
    // Row-major: trend (increasing, no_trend, decreasing) x bin (low, medium, high).
    std::array<MatrixCell, 9> cells;
    std::map<TechniqueId, std::size_t> frequency;
    std::size_t corpus_size = 0;
    std::size_t total_mentions = 0;

    const MatrixCell& cell(Trend trend, FrequencyBin bin) const;
    double report_pct(const TechniqueId& id) const;
};

struct PrevalentTechnique {
    TechniqueId id;
    double pct_reports = 0.0;
    Trend trend = Trend::no_trend;
    FrequencyBin bin = FrequencyBin::low;
};

/// Number of technique sets mentioning each technique. Techniques in `universe`
/// that no set mentions are reported with 0.
std::map<TechniqueId, std::size_t> technique_frequency(std::span<const TechniqueSet> corpus,
                                                       const std::set<TechniqueId>* universe = nullptr);

/// The `count` most recent distinct years of the sets' representative dates, ascending.
std::vector<int> trend_window(std::span<const TechniqueSet> corpus, int count);

/// Per-technique yearly shares over `years`. Every year must hold at least one set.
std::map<TechniqueId, YearlySeries> yearly_series(std::span<const TechniqueSet> corpus,
                                                  const std::set<TechniqueId>& techniques,
                                                  std::span<const int> years);

/// Mann-Kendall test with tie-corrected variance and continuity-corrected Z.
/// Series shorter than four points are classified no_trend.
TrendResult mann_kendall(std::span<const double> values, double alpha, bool warn_short = true);
TrendResult mann_kendall(const YearlySeries& series, double alpha);

/// Trend test for every series, in technique-id order; `threads` does not change the result.
std::map<TechniqueId, TrendResult> analyze_trends(const std::map<TechniqueId, YearlySeries>& series,
                                                  double alpha, unsigned threads = 1);

/// Nearest-rank 33rd/67th percentile cut points. high: value > p67,
/// medium: p33 < value <= p67, low otherwise.
std::map<TechniqueId, FrequencyBin> percentile_bins(const std::map<TechniqueId, double>& values);
std::map<TechniqueId, FrequencyBin> percentile_bins(const std::map<TechniqueId, std::size_t>& frequencies);

PrevalenceMatrix build_matrix(const std::map<TechniqueId, FrequencyBin>& bins,
                              const std::map<TechniqueId, Trend>& trends,
                              const std::map<TechniqueId, std::size_t>& frequency, std::size_t corpus_size);

/// high/increasing, high/no_trend and medium/increasing techniques, by
/// descending report percentage (ties by id).
std::vector<PrevalentTechnique> prevalent_techniques(const PrevalenceMatrix& matrix);

Table matrix_table(const PrevalenceMatrix& matrix);
Table prevalent_table(std::span<const PrevalentTechnique> prevalent, const AttackCatalog* catalog);
Table trends_table(const std::map<TechniqueId, TrendResult>& trends, const PrevalenceMatrix& matrix);

}  // namespace ttpmine
