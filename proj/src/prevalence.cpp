#include "ttpmine/prevalence.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ttpmine/error.hpp"
#include "ttpmine/parallel.hpp"

namespace ttpmine {

namespace {

constexpr std::array<Trend, 3> kTrends = {Trend::increasing, Trend::no_trend, Trend::decreasing};
constexpr std::array<FrequencyBin, 3> kBins = {FrequencyBin::low, FrequencyBin::medium, FrequencyBin::high};

std::size_t cell_index(Trend trend, FrequencyBin bin) {
    return static_cast<std::size_t>(trend) * 3 + static_cast<std::size_t>(bin);
}

int sign(double x) {
    return (x > 0.0) - (x < 0.0);
}

// 1-based nearest rank for the given percentile, in integer arithmetic.
std::size_t nearest_rank(std::size_t n, std::size_t percentile) {
    return std::max<std::size_t>(1, (percentile * n + 99) / 100);
}

std::string cell_label(FrequencyBin bin, Trend trend) {
    return fmt::format("{}/{}", to_string(bin), to_string(trend));
}

}  // namespace

std::string_view to_string(Trend trend) {
    switch (trend) {
        case Trend::increasing: return "increasing";
        case Trend::no_trend: return "no_trend";
        case Trend::decreasing: return "decreasing";
    }
    return "unknown";
}

std::string_view to_string(FrequencyBin bin) {
    switch (bin) {
        case FrequencyBin::low: return "low";
        case FrequencyBin::medium: return "medium";
        case FrequencyBin::high: return "high";
    }
    return "unknown";
}

const MatrixCell& PrevalenceMatrix::cell(Trend trend, FrequencyBin bin) const {
    return cells[cell_index(trend, bin)];
}

double PrevalenceMatrix::report_pct(const TechniqueId& id) const {
    const auto it = frequency.find(id);
    if (it == frequency.end() || corpus_size == 0) {
        return 0.0;
    }
    return 100.0 * static_cast<double>(it->second) / static_cast<double>(corpus_size);
}

std::map<TechniqueId, std::size_t> technique_frequency(std::span<const TechniqueSet> corpus,
                                                       const std::set<TechniqueId>* universe) {
    std::map<TechniqueId, std::size_t> frequency;
    if (universe != nullptr) {
        for (const auto& id : *universe) {
            frequency.emplace(id, 0);
        }
    }
    for (const auto& set : corpus) {
        for (const auto& id : set.techniques) {
            ++frequency[id];
        }
    }
    return frequency;
}

std::vector<int> trend_window(std::span<const TechniqueSet> corpus, int count) {
    if (count < 2) {
        throw ParameterError(fmt::format("trend window needs at least two years, got {}", count));
    }
    std::set<int> years;
    for (const auto& set : corpus) {
        years.insert(set.representative_date.year());
    }
    std::vector<int> window(years.begin(), years.end());
    if (window.size() > static_cast<std::size_t>(count)) {
        window.erase(window.begin(), window.end() - count);
    }
    return window;
}

std::map<TechniqueId, YearlySeries> yearly_series(std::span<const TechniqueSet> corpus,
                                                  const std::set<TechniqueId>& techniques,
                                                  std::span<const int> years) {
    std::map<int, std::size_t> year_slot;
    for (std::size_t i = 0; i < years.size(); ++i) {
        year_slot[years[i]] = i;
    }
    std::vector<std::size_t> totals(years.size(), 0);
    std::map<TechniqueId, std::vector<std::size_t>> counts;
    for (const auto& id : techniques) {
        counts.emplace(id, std::vector<std::size_t>(years.size(), 0));
    }
    for (const auto& set : corpus) {
        const auto slot = year_slot.find(set.representative_date.year());
        if (slot == year_slot.end()) {
            continue;
        }
        ++totals[slot->second];
        for (const auto& id : set.techniques) {
            if (auto it = counts.find(id); it != counts.end()) {
                ++it->second[slot->second];
            }
        }
    }
    for (std::size_t i = 0; i < years.size(); ++i) {
        if (totals[i] == 0) {
            throw ValidationError(fmt::format("trend window year {} has no technique sets", years[i]));
        }
    }

    std::map<TechniqueId, YearlySeries> out;
    for (const auto& [id, per_year] : counts) {
        YearlySeries series{id, std::vector<int>(years.begin(), years.end()), {}};
        for (std::size_t i = 0; i < years.size(); ++i) {
            series.values.push_back(static_cast<double>(per_year[i]) / static_cast<double>(totals[i]));
        }
        out.emplace(id, std::move(series));
    }
    return out;
}

TrendResult mann_kendall(std::span<const double> values, double alpha, bool warn_short) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParameterError(fmt::format("Mann-Kendall alpha must lie in (0, 1), got {}", alpha));
    }
    const std::size_t n = values.size();
    if (n < 2) {
        throw ValidationError(fmt::format("Mann-Kendall needs at least two points, got {}", n));
    }
    TrendResult result;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            result.s_statistic += sign(values[j] - values[i]);
        }
    }

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) {
            ++j;
        }
        const auto t = static_cast<double>(j - i);
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j;
    }
    const auto nd = static_cast<double>(n);
    result.variance = (nd * (nd - 1.0) * (2.0 * nd + 5.0) - tie_term) / 18.0;

    const auto s = static_cast<double>(result.s_statistic);
    if (result.variance > 0.0) {
        if (result.s_statistic > 0) {
            result.z_score = (s - 1.0) / std::sqrt(result.variance);
        } else if (result.s_statistic < 0) {
            result.z_score = (s + 1.0) / std::sqrt(result.variance);
        }
    }
    result.p_value = normal_two_sided_p(result.z_score);

    if (n < 4) {
        if (warn_short) {
            log::warn(fmt::format("Mann-Kendall on {} points is unreliable; classified as no trend", n));
        }
        return result;
    }
    if (result.p_value < alpha) {
        if (result.z_score > 0.0) {
            result.classification = Trend::increasing;
        } else if (result.z_score < 0.0) {
            result.classification = Trend::decreasing;
        }
    }
    return result;
}

TrendResult mann_kendall(const YearlySeries& series, double alpha) {
    if (series.years.size() != series.values.size()) {
        throw ValidationError(fmt::format("series for {} has {} years but {} values", series.technique_id,
                                          series.years.size(), series.values.size()));
    }
    auto result = mann_kendall(series.values, alpha);
    result.technique_id = series.technique_id;
    return result;
}

std::map<TechniqueId, TrendResult> analyze_trends(const std::map<TechniqueId, YearlySeries>& series,
                                                  double alpha, unsigned threads) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParameterError(fmt::format("trend alpha must lie in (0, 1), got {}", alpha));
    }
    std::vector<const YearlySeries*> items;
    for (const auto& [id, s] : series) {
        items.push_back(&s);
    }
    if (!items.empty() && items.front()->values.size() < 4) {
        log::warn(fmt::format("trend window has {} year(s); every technique is classified as no trend",
                              items.front()->values.size()));
    }
    std::vector<TrendResult> results(items.size());
    for_each_chunk(items.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            results[i] = mann_kendall(items[i]->values, alpha, false);
            results[i].technique_id = items[i]->technique_id;
        }
    });
    std::map<TechniqueId, TrendResult> out;
    for (auto& result : results) {
        auto id = result.technique_id;
        out.emplace(std::move(id), std::move(result));
    }
    return out;
}

std::map<TechniqueId, FrequencyBin> percentile_bins(const std::map<TechniqueId, double>& values) {
    std::map<TechniqueId, FrequencyBin> bins;
    if (values.empty()) {
        return bins;
    }
    std::vector<double> sorted;
    sorted.reserve(values.size());
    for (const auto& [id, v] : values) {
        sorted.push_back(v);
    }
    std::sort(sorted.begin(), sorted.end());
    const double p33 = sorted[nearest_rank(sorted.size(), 33) - 1];
    const double p67 = sorted[nearest_rank(sorted.size(), 67) - 1];
    for (const auto& [id, v] : values) {
        if (v > p67) {
            bins.emplace(id, FrequencyBin::high);
        } else if (v > p33) {
            bins.emplace(id, FrequencyBin::medium);
        } else {
            bins.emplace(id, FrequencyBin::low);
        }
    }
    return bins;
}

std::map<TechniqueId, FrequencyBin> percentile_bins(const std::map<TechniqueId, std::size_t>& frequencies) {
    std::map<TechniqueId, double> values;
    for (const auto& [id, f] : frequencies) {
        values.emplace(id, static_cast<double>(f));
    }
    return percentile_bins(values);
}

PrevalenceMatrix build_matrix(const std::map<TechniqueId, FrequencyBin>& bins,
                              const std::map<TechniqueId, Trend>& trends,
                              const std::map<TechniqueId, std::size_t>& frequency, std::size_t corpus_size) {
    if (corpus_size == 0) {
        throw ValidationError("build_matrix: empty corpus");
    }
    PrevalenceMatrix matrix;
    matrix.corpus_size = corpus_size;
    for (const auto trend : kTrends) {
        for (const auto bin : kBins) {
            auto& cell = matrix.cells[cell_index(trend, bin)];
            cell.trend = trend;
            cell.bin = bin;
        }
    }
    for (const auto& [id, bin] : bins) {
        const auto trend = trends.find(id);
        if (trend == trends.end()) {
            throw ValidationError(fmt::format("technique {} has a frequency bin but no trend", id));
        }
        const auto f = frequency.find(id);
        const std::size_t count = f == frequency.end() ? 0 : f->second;
        matrix.frequency.emplace(id, count);
        matrix.total_mentions += count;
        matrix.cells[cell_index(trend->second, bin)].techniques.push_back(id);
    }
    for (auto& cell : matrix.cells) {
        std::vector<double> pcts;
        std::size_t mentions = 0;
        for (const auto& id : cell.techniques) {
            pcts.push_back(matrix.report_pct(id));
            mentions += matrix.frequency.at(id);
        }
        cell.median_pct = median(pcts);
        cell.mention_share = matrix.total_mentions == 0
                                 ? 0.0
                                 : static_cast<double>(mentions) / static_cast<double>(matrix.total_mentions);
    }
    return matrix;
}

std::vector<PrevalentTechnique> prevalent_techniques(const PrevalenceMatrix& matrix) {
    std::vector<PrevalentTechnique> out;
    const std::array<std::pair<FrequencyBin, Trend>, 3> qualifying = {{{FrequencyBin::high, Trend::increasing},
                                                                       {FrequencyBin::high, Trend::no_trend},
                                                                       {FrequencyBin::medium, Trend::increasing}}};
    for (const auto& [bin, trend] : qualifying) {
        for (const auto& id : matrix.cell(trend, bin).techniques) {
            out.push_back({id, matrix.report_pct(id), trend, bin});
        }
    }
    std::sort(out.begin(), out.end(), [&](const PrevalentTechnique& a, const PrevalentTechnique& b) {
        const auto fa = matrix.frequency.at(a.id);
        const auto fb = matrix.frequency.at(b.id);
        if (fa != fb) {
            return fa > fb;
        }
        return a.id < b.id;
    });
    return out;
}

Table matrix_table(const PrevalenceMatrix& matrix) {
    Table table{{"trend", "bin", "count", "median_pct", "mention_share", "technique_ids"}, {}};
    for (const auto& cell : matrix.cells) {
        table.rows.push_back({std::string(to_string(cell.trend)), std::string(to_string(cell.bin)),
                              static_cast<std::int64_t>(cell.techniques.size()), cell.median_pct, cell.mention_share,
                              fmt::format("{}", fmt::join(cell.techniques, ";"))});
    }
    return table;
}

Table prevalent_table(std::span<const PrevalentTechnique> prevalent, const AttackCatalog* catalog) {
    Table table{{"id", "name", "tactic", "pct_reports", "cell"}, {}};
    for (const auto& p : prevalent) {
        std::string name;
        std::string tactic;
        if (catalog != nullptr) {
            if (const auto* record = catalog->find_technique(p.id)) {
                name = record->name;
                tactic = fmt::format("{}", fmt::join(record->tactic_ids, ";"));
            }
        }
        table.rows.push_back({p.id, name, tactic, p.pct_reports, cell_label(p.bin, p.trend)});
    }
    return table;
}

Table trends_table(const std::map<TechniqueId, TrendResult>& trends, const PrevalenceMatrix& matrix) {
    Table table{{"technique_id", "frequency", "pct_reports", "s_statistic", "variance", "z_score", "p_value", "trend",
                 "bin"},
                {}};
    std::map<TechniqueId, FrequencyBin> bin_of;
    for (const auto& cell : matrix.cells) {
        for (const auto& id : cell.techniques) {
            bin_of.emplace(id, cell.bin);
        }
    }
    for (const auto& [id, t] : trends) {
        const auto bin = bin_of.find(id);
        if (bin == bin_of.end()) {
            continue;
        }
        table.rows.push_back({id, static_cast<std::int64_t>(matrix.frequency.at(id)), matrix.report_pct(id),
                              t.s_statistic, t.variance, t.z_score, t.p_value,
                              std::string(to_string(t.classification)), std::string(to_string(bin->second))});
    }
    return table;
}

}  // namespace ttpmine
