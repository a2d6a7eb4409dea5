#include "ttpmine/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>

#include <fmt/format.h>

#include "ttpmine/error.hpp"

namespace ttpmine {

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
    std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                    std::chrono::day{day}};
    if (!ymd.ok()) {
        throw ValidationError(fmt::format("invalid calendar date {}-{}-{}", year, month, day));
    }
    days_ = std::chrono::sys_days{ymd};
}

std::optional<Date> Date::parse_iso(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        return std::nullopt;
    }
    const auto y = text.substr(0, 4);
    const auto m = text.substr(5, 2);
    const auto d = text.substr(8, 2);
    if (!all_digits(y) || !all_digits(m) || !all_digits(d)) {
        return std::nullopt;
    }
    int year = 0;
    unsigned month = 0;
    unsigned day = 0;
    std::from_chars(y.data(), y.data() + y.size(), year);
    std::from_chars(m.data(), m.data() + m.size(), month);
    std::from_chars(d.data(), d.data() + d.size(), day);
    std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                    std::chrono::day{day}};
    if (!ymd.ok()) {
        return std::nullopt;
    }
    return Date{std::chrono::sys_days{ymd}};
}

std::string Date::iso() const {
    const std::chrono::year_month_day ymd{days_};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

int Date::year() const {
    return static_cast<int>(std::chrono::year_month_day{days_}.year());
}

std::int64_t days_between(const Date& a, const Date& b) {
    const auto diff = (a.days() - b.days()).count();
    return diff < 0 ? -diff : diff;
}

bool is_technique_id(std::string_view id) {
    if (id.size() == 5) {
        return id[0] == 'T' && all_digits(id.substr(1));
    }
    if (id.size() == 9) {
        return id[0] == 'T' && all_digits(id.substr(1, 4)) && id[5] == '.' && all_digits(id.substr(6));
    }
    return false;
}

bool is_tactic_id(std::string_view id) {
    return id.size() == 6 && id.substr(0, 2) == "TA" && all_digits(id.substr(2));
}

std::string base_technique_id(std::string_view id) {
    const auto dot = id.find('.');
    return std::string(dot == std::string_view::npos ? id : id.substr(0, dot));
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

double mean(std::span<const double> values) {
    if (values.empty()) {
        return 0.0;
    }
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double normal_two_sided_p(double z) {
    return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

double chi2_1df_upper_tail(double statistic) {
    if (statistic <= 0.0) {
        return 1.0;
    }
    // chi2(1) is the square of a standard normal.
    return std::erfc(std::sqrt(statistic / 2.0));
}

std::string format_number(double value) {
    if (value == 0.0) {
        return "0";
    }
    return fmt::format("{}", value);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string out;
    out.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        out += fmt::format("{:02x}", digest[i]);
    }
    return out;
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (const unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", hash);
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    std::iota(row.begin(), row.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diagonal = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t above = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = above;
        }
    }
    return row[b.size()];
}

namespace log {

namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

void emit(Level at, std::string_view tag, std::string_view message) {
    if (at < g_level.load()) {
        return;
    }
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void warn(std::string_view message) { emit(Level::warn, "warn", message); }
void error(std::string_view message) { emit(Level::error, "error", message); }

}  // namespace log

}  // namespace ttpmine
