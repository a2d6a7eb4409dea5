#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttpmine {

using TechniqueId = std::string;

/// Calendar date with day resolution.
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int year, unsigned month, unsigned day);

    /// Parses `YYYY-MM-DD`; returns nullopt for anything else, including
    /// impossible dates such as 2021-02-30.
    static std::optional<Date> parse_iso(std::string_view text);

    std::string iso() const;
    int year() const;
    std::chrono::sys_days days() const { return days_; }

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

/// |a - b| in whole days.
std::int64_t days_between(const Date& a, const Date& b);

// A month is exactly 30 days throughout the toolkit.
inline constexpr std::int64_t kDaysPerMonth = 30;

/// True for `T` + 4 digits, optionally followed by `.` + 3 digits.
bool is_technique_id(std::string_view id);
bool is_tactic_id(std::string_view id);

/// `T1204.002` -> `T1204`; ids without a sub-technique suffix are returned as-is.
std::string base_technique_id(std::string_view id);

/// Median of an unsorted sample; the mean of the two middle values for even sizes.
/// Returns 0 for an empty sample.
double median(std::vector<double> values);

double mean(std::span<const double> values);

/// Upper tail of the standard normal, 2 * (1 - Phi(|z|)).
double normal_two_sided_p(double z);

/// Upper tail of the chi-square distribution with one degree of freedom.
double chi2_1df_upper_tail(double statistic);

/// Shortest decimal text that round-trips to the same double.
std::string format_number(double value);

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// FNV-1a 64-bit hash, hex encoded; used for short stable identifiers.
std::string fnv1a64_hex(std::string_view bytes);

/// Levenshtein edit distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

namespace log {

enum class Level { debug, info, warn, error, off };

void set_level(Level level);
Level level();
void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

}  // namespace log

}  // namespace ttpmine
