#include "ttpmine/rule_miner.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "ttpmine/error.hpp"
#include "ttpmine/parallel.hpp"

namespace ttpmine {

namespace {

using Bits = std::vector<std::uint64_t>;

std::int64_t and_count(const Bits& a, const Bits& b) {
    std::int64_t count = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        count += std::popcount(a[w] & b[w]);
    }
    return count;
}

double ratio(std::int64_t num, std::int64_t den) {
    return static_cast<double>(num) / static_cast<double>(den);
}

void require_defined(const ContingencyTable& table, std::string_view measure) {
    if (table.has_zero_marginal()) {
        throw UndefinedMeasureError(fmt::format("{} is undefined for a table with a zero marginal ({}, {}, {}, {})",
                                                measure, table.n11, table.n10, table.n01, table.n00));
    }
}

}  // namespace

std::vector<Itemset> itemsets_of(std::span<const TechniqueSet> corpus) {
    std::vector<Itemset> out;
    out.reserve(corpus.size());
    for (const auto& set : corpus) {
        out.push_back(set.techniques);
    }
    return out;
}

std::string_view to_string(Strength strength) {
    switch (strength) {
        case Strength::weak: return "weak";
        case Strength::moderate: return "moderate";
        case Strength::strong: return "strong";
        case Strength::very_strong: return "very_strong";
    }
    return "unknown";
}

std::optional<Strength> parse_strength(std::string_view text) {
    for (const auto s : {Strength::weak, Strength::moderate, Strength::strong, Strength::very_strong}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    return std::nullopt;
}

Strength strength_of(double phi_value, const StrengthThresholds& thresholds) {
    if (phi_value >= thresholds.very_strong) {
        return Strength::very_strong;
    }
    if (phi_value >= thresholds.strong) {
        return Strength::strong;
    }
    if (phi_value >= thresholds.moderate) {
        return Strength::moderate;
    }
    return Strength::weak;
}

std::vector<CandidatePair> mine_pairs(std::span<const Itemset> corpus, double min_support, unsigned threads) {
    if (!(min_support > 0.0 && min_support <= 1.0)) {
        throw ParameterError(fmt::format("min_support must lie in (0, 1], got {}", min_support));
    }
    if (corpus.empty()) {
        throw ValidationError("mine_pairs: empty corpus");
    }
    const auto n = static_cast<std::int64_t>(corpus.size());
    const std::size_t words = (corpus.size() + 63) / 64;

    std::map<TechniqueId, Bits> vertical;
    for (std::size_t row = 0; row < corpus.size(); ++row) {
        for (const auto& id : corpus[row]) {
            auto [it, inserted] = vertical.try_emplace(id);
            if (inserted) {
                it->second.assign(words, 0);
            }
            it->second[row / 64] |= std::uint64_t{1} << (row % 64);
        }
    }

    // A pair can only reach min_support if both of its items do.
    struct Item {
        const TechniqueId* id;
        const Bits* bits;
        std::int64_t count;
    };
    std::vector<Item> items;
    for (const auto& [id, bits] : vertical) {
        const auto count = and_count(bits, bits);
        if (ratio(count, n) >= min_support) {
            items.push_back({&id, &bits, count});
        }
    }

    std::vector<std::vector<CandidatePair>> partial(chunk_count(items.size(), threads));
    for_each_chunk(items.size(), threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& out = partial[chunk];
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = i + 1; j < items.size(); ++j) {
                const auto n11 = and_count(*items[i].bits, *items[j].bits);
                if (n11 == 0 || ratio(n11, n) < min_support) {
                    continue;
                }
                CandidatePair pair;
                pair.tech_a = *items[i].id;
                pair.tech_b = *items[j].id;
                pair.table.n11 = n11;
                pair.table.n10 = items[i].count - n11;
                pair.table.n01 = items[j].count - n11;
                pair.table.n00 = n - items[i].count - items[j].count + n11;
                pair.support = ratio(n11, n);
                pair.confidence_ab = ratio(n11, items[i].count);
                pair.confidence_ba = ratio(n11, items[j].count);
                out.push_back(std::move(pair));
            }
        }
    });

    std::vector<CandidatePair> pairs;
    for (auto& chunk : partial) {
        std::move(chunk.begin(), chunk.end(), std::back_inserter(pairs));
    }
    return pairs;
}

ContingencyTable contingency(const TechniqueId& a, const TechniqueId& b, std::span<const Itemset> corpus) {
    if (a == b) {
        throw ParameterError(fmt::format("contingency: a technique cannot be paired with itself ({})", a));
    }
    ContingencyTable table;
    for (const auto& set : corpus) {
        const bool has_a = set.contains(a);
        const bool has_b = set.contains(b);
        if (has_a && has_b) {
            ++table.n11;
        } else if (has_a) {
            ++table.n10;
        } else if (has_b) {
            ++table.n01;
        } else {
            ++table.n00;
        }
    }
    return table;
}

double phi(const ContingencyTable& table) {
    require_defined(table, "phi");
    const double numerator = static_cast<double>(table.n11) * static_cast<double>(table.n00) -
                             static_cast<double>(table.n10) * static_cast<double>(table.n01);
    const double denominator =
        std::sqrt(static_cast<double>(table.a_present()) * static_cast<double>(table.a_absent())) *
        std::sqrt(static_cast<double>(table.b_present()) * static_cast<double>(table.b_absent()));
    return numerator / denominator;
}

ChiSquare chi_square(const ContingencyTable& table, bool yates) {
    require_defined(table, "chi-square");
    const auto n = static_cast<double>(table.total());
    const std::array<std::array<double, 2>, 2> observed = {{
        {static_cast<double>(table.n11), static_cast<double>(table.n10)},
        {static_cast<double>(table.n01), static_cast<double>(table.n00)},
    }};
    const std::array<double, 2> row = {static_cast<double>(table.a_present()), static_cast<double>(table.a_absent())};
    const std::array<double, 2> column = {static_cast<double>(table.b_present()),
                                          static_cast<double>(table.b_absent())};
    // Cell [0][1] counts A present / B absent, so columns index B presence.
    ChiSquare result;
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            const double expected = row[r] * column[c] / n;
            double deviation = std::fabs(observed[r][c] - expected);
            if (yates) {
                deviation = std::max(0.0, deviation - 0.5);
            }
            result.statistic += deviation * deviation / expected;
        }
    }
    result.p_value = chi2_1df_upper_tail(result.statistic);
    return result;
}

FilterResult filter_pairs(std::span<const CandidatePair> candidates, const FilterOptions& options) {
    if (!(options.phi_min >= 0.0 && options.phi_min <= 1.0)) {
        throw ParameterError(fmt::format("phi_min must lie in [0, 1], got {}", options.phi_min));
    }
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
        throw ParameterError(fmt::format("alpha must lie in (0, 1), got {}", options.alpha));
    }
    FilterResult result;
    for (const auto& candidate : candidates) {
        if (candidate.table.has_zero_marginal()) {
            result.dropped.push_back({candidate.tech_a, candidate.tech_b, "degenerate marginal"});
            continue;
        }
        const double phi_value = phi(candidate.table);
        if (phi_value < options.phi_min) {
            result.dropped.push_back({candidate.tech_a, candidate.tech_b, "phi below threshold"});
            continue;
        }
        const auto chi = chi_square(candidate.table, options.yates);
        if (!(chi.p_value < options.alpha)) {
            result.dropped.push_back({candidate.tech_a, candidate.tech_b, "not significant"});
            continue;
        }
        RecurringPair pair;
        pair.tech_a = candidate.tech_a;
        pair.tech_b = candidate.tech_b;
        pair.table = candidate.table;
        pair.support = candidate.support;
        pair.confidence_ab = candidate.confidence_ab;
        pair.confidence_ba = candidate.confidence_ba;
        pair.direction = candidate.confidence_ba > candidate.confidence_ab ? Direction::ba : Direction::ab;
        pair.phi = phi_value;
        pair.chi2 = chi.statistic;
        pair.p_value = chi.p_value;
        pair.lift = candidate.confidence_ab / ratio(candidate.table.b_present(), candidate.table.total());
        pair.strength = strength_of(phi_value, options.thresholds);
        result.kept.push_back(std::move(pair));
    }
    return result;
}

double probability_increase(const RecurringPair& pair, std::span<const Itemset> corpus) {
    const auto table = contingency(pair.antecedent(), pair.consequent(), corpus);
    if (table.b_present() == 0) {
        throw UndefinedMeasureError(fmt::format("consequent {} never occurs", pair.consequent()));
    }
    if (table.a_present() == 0) {
        throw UndefinedMeasureError(fmt::format("antecedent {} never occurs", pair.antecedent()));
    }
    const double confidence = ratio(table.n11, table.a_present());
    return confidence / ratio(table.b_present(), table.total());
}

void attach_relation_labels(std::vector<RecurringPair>& pairs, std::span<const RelationAnnotation> annotations) {
    std::map<std::pair<TechniqueId, TechniqueId>, RecurringPair*> index;
    for (auto& pair : pairs) {
        index[{pair.tech_a, pair.tech_b}] = &pair;
    }
    for (const auto& annotation : annotations) {
        auto key = std::minmax(annotation.tech_a, annotation.tech_b);
        const auto it = index.find({key.first, key.second});
        if (it == index.end()) {
            throw ValidationError(fmt::format("annotation {},{} ({}) does not match a recurring pair",
                                              annotation.tech_a, annotation.tech_b, to_string(annotation.relation)));
        }
        it->second->relation_labels.insert(annotation.relation);
    }
}

PairSummary summarize_pairs(std::size_t candidate_count, std::span<const RecurringPair> pairs) {
    PairSummary summary;
    summary.candidate_pairs = candidate_count;
    summary.ordered_rules = 2 * candidate_count;
    summary.recurring_pairs = pairs.size();
    for (const auto s : {Strength::weak, Strength::moderate, Strength::strong, Strength::very_strong}) {
        summary.strength_histogram[s] = 0;
    }
    std::set<TechniqueId> techniques;
    std::vector<double> lifts;
    for (const auto& pair : pairs) {
        ++summary.strength_histogram[pair.strength];
        techniques.insert(pair.tech_a);
        techniques.insert(pair.tech_b);
        lifts.push_back(pair.lift);
    }
    summary.distinct_techniques = techniques.size();
    summary.median_lift = median(lifts);
    return summary;
}

const std::vector<std::string>& recurring_pair_columns() {
    static const std::vector<std::string> columns = {"tech_a",  "tech_b",  "direction", "support",
                                                     "confidence_ab", "confidence_ba", "phi", "chi2",
                                                     "p_value", "lift",    "strength",  "relation_labels"};
    return columns;
}

Table recurring_pairs_table(std::span<const RecurringPair> pairs) {
    Table table{recurring_pair_columns(), {}};
    for (const auto& pair : pairs) {
        std::vector<std::string> labels;
        for (const auto relation : pair.relation_labels) {
            labels.emplace_back(to_string(relation));
        }
        table.rows.push_back({pair.tech_a, pair.tech_b,
                              std::string(pair.direction == Direction::ab ? "ab" : "ba"), pair.support,
                              pair.confidence_ab, pair.confidence_ba, pair.phi, pair.chi2, pair.p_value, pair.lift,
                              std::string(to_string(pair.strength)), fmt::format("{}", fmt::join(labels, ";"))});
    }
    return table;
}

std::vector<RecurringPair> recurring_pairs_from_table(const Table& table) {
    require_columns(table, recurring_pair_columns(), "recurring pairs");
    std::vector<RecurringPair> pairs;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        RecurringPair pair;
        pair.tech_a = table.text(r, "tech_a");
        pair.tech_b = table.text(r, "tech_b");
        if (!is_technique_id(pair.tech_a) || !is_technique_id(pair.tech_b) || !(pair.tech_a < pair.tech_b)) {
            throw ValidationError(fmt::format("recurring pairs row {}: '{}','{}' is not a canonical technique pair",
                                              r + 2, pair.tech_a, pair.tech_b));
        }
        const auto& direction = table.text(r, "direction");
        if (direction != "ab" && direction != "ba") {
            throw ValidationError(fmt::format("recurring pairs row {}: direction must be ab or ba", r + 2));
        }
        pair.direction = direction == "ab" ? Direction::ab : Direction::ba;
        pair.support = parse_double(table.text(r, "support"), "support");
        pair.confidence_ab = parse_double(table.text(r, "confidence_ab"), "confidence_ab");
        pair.confidence_ba = parse_double(table.text(r, "confidence_ba"), "confidence_ba");
        pair.phi = parse_double(table.text(r, "phi"), "phi");
        pair.chi2 = parse_double(table.text(r, "chi2"), "chi2");
        pair.p_value = parse_double(table.text(r, "p_value"), "p_value");
        pair.lift = parse_double(table.text(r, "lift"), "lift");
        const auto strength = parse_strength(table.text(r, "strength"));
        if (!strength) {
            throw ValidationError(fmt::format("recurring pairs row {}: unknown strength '{}'", r + 2,
                                              table.text(r, "strength")));
        }
        pair.strength = *strength;
        std::string_view labels = table.text(r, "relation_labels");
        while (!labels.empty()) {
            const auto cut = labels.find(';');
            const auto token = labels.substr(0, cut);
            const auto relation = parse_relation(token);
            if (!relation) {
                throw ValidationError(fmt::format("recurring pairs row {}: unknown relation '{}'", r + 2, token));
            }
            pair.relation_labels.insert(*relation);
            labels = cut == std::string_view::npos ? std::string_view{} : labels.substr(cut + 1);
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace ttpmine
