#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ttpmine/corpus_builder.hpp"
#include "ttpmine/relation.hpp"
#include "ttpmine/table.hpp"

namespace ttpmine {

using Itemset = std::set<TechniqueId>;

std::vector<Itemset> itemsets_of(std::span<const TechniqueSet> corpus);

/// Presence/absence counts of techniques A and B over the technique sets.
struct ContingencyTable {
    std::int64_t n11 = 0;  // A and B
    std::int64_t n10 = 0;  // A only
    std::int64_t n01 = 0;  // B only
    std::int64_t n00 = 0;  // neither

    std::int64_t total() const { return n11 + n10 + n01 + n00; }
    std::int64_t a_present() const { return n11 + n10; }
    std::int64_t a_absent() const { return n01 + n00; }
    std::int64_t b_present() const { return n11 + n01; }
    std::int64_t b_absent() const { return n10 + n00; }
    bool has_zero_marginal() const {
        return a_present() == 0 || a_absent() == 0 || b_present() == 0 || b_absent() == 0;
    }

    bool operator==(const ContingencyTable&) const = default;
};

enum class Strength { weak, moderate, strong, very_strong };

std::string_view to_string(Strength strength);
std::optional<Strength> parse_strength(std::string_view text);

/// Lower phi bounds of the moderate, strong and very strong buckets.
struct StrengthThresholds {
    double moderate = 0.30;
    double strong = 0.40;
    double very_strong = 0.70;
};

Strength strength_of(double phi, const StrengthThresholds& thresholds = {});

/// Antecedent -> consequent orientation of a pair: ab means tech_a => tech_b.
enum class Direction { ab, ba };

struct CandidatePair {
    TechniqueId tech_a;  // tech_a < tech_b
    TechniqueId tech_b;
    ContingencyTable table;
    double support = 0.0;
    double confidence_ab = 0.0;  // P(B | A)
    double confidence_ba = 0.0;  // P(A | B)
};

struct RecurringPair {
    TechniqueId tech_a;
    TechniqueId tech_b;
    Direction direction = Direction::ab;
    ContingencyTable table;
    double support = 0.0;
    double confidence_ab = 0.0;
    double confidence_ba = 0.0;
    double phi = 0.0;
    double chi2 = 0.0;
    double p_value = 1.0;
    double lift = 0.0;
    Strength strength = Strength::weak;
    std::set<RelationType> relation_labels;

    const TechniqueId& antecedent() const { return direction == Direction::ab ? tech_a : tech_b; }
    const TechniqueId& consequent() const { return direction == Direction::ab ? tech_b : tech_a; }
};

/// All unordered technique pairs whose support n11/n is at least `min_support`,
/// sorted by (tech_a, tech_b). Identical output for any thread count.
std::vector<CandidatePair> mine_pairs(std::span<const Itemset> corpus, double min_support, unsigned threads = 1);

ContingencyTable contingency(const TechniqueId& a, const TechniqueId& b, std::span<const Itemset> corpus);

/// Phi coefficient. Throws UndefinedMeasureError on a zero marginal.
double phi(const ContingencyTable& table);

struct ChiSquare {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Pearson chi-square with one degree of freedom, optionally Yates-corrected.
/// Throws UndefinedMeasureError on a zero marginal.
ChiSquare chi_square(const ContingencyTable& table, bool yates = false);

struct FilterOptions {
    double phi_min = 0.20;
    double alpha = 0.05;
    bool yates = false;
    StrengthThresholds thresholds;
};

struct DroppedPair {
    TechniqueId tech_a;
    TechniqueId tech_b;
    std::string reason;
};

struct FilterResult {
    std::vector<RecurringPair> kept;
    std::vector<DroppedPair> dropped;
};

/// Keeps pairs with phi >= phi_min and chi-square p < alpha. Pairs with a zero
/// marginal are dropped with reason "degenerate marginal".
FilterResult filter_pairs(std::span<const CandidatePair> candidates, const FilterOptions& options = {});

/// confidence(antecedent => consequent) / P(consequent), recomputed from the corpus.
double probability_increase(const RecurringPair& pair, std::span<const Itemset> corpus);

/// Labels every pair from the annotations; an annotation naming a pair that was
/// not mined is a ValidationError.
void attach_relation_labels(std::vector<RecurringPair>& pairs, std::span<const RelationAnnotation> annotations);

struct PairSummary {
    std::size_t candidate_pairs = 0;
    std::size_t ordered_rules = 0;
    std::size_t recurring_pairs = 0;
    std::size_t distinct_techniques = 0;
    std::map<Strength, std::size_t> strength_histogram;
    double median_lift = 0.0;
};

PairSummary summarize_pairs(std::size_t candidate_count, std::span<const RecurringPair> pairs);

Table recurring_pairs_table(std::span<const RecurringPair> pairs);
std::vector<RecurringPair> recurring_pairs_from_table(const Table& table);
const std::vector<std::string>& recurring_pair_columns();

}  // namespace ttpmine
