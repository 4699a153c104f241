#pragma once

// Minimal civil-date type: ISO-8601 parsing/formatting, month arithmetic
// with end-of-month clamping, ordering. Times used in pricing are plain
// year fractions; calendar dates only appear on snapshots and in the
// model-inventory review schedule.

#include <mrisk/errors.hpp>

#include <array>
#include <compare>
#include <cstdio>
#include <string>

namespace mrisk {

struct Date {
    int year = 1970;
    int month = 1; // 1..12
    int day = 1;   // 1..31

    auto operator<=>(const Date&) const = default;
};

inline bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> base{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return base[static_cast<size_t>(m - 1)];
}

inline void validate(const Date& d) {
    if (d.month < 1 || d.month > 12)
        throw ValidationError("date: month out of range: " + std::to_string(d.month));
    if (d.day < 1 || d.day > days_in_month(d.year, d.month))
        throw ValidationError("date: day out of range: " + std::to_string(d.day));
}

// Accepts "YYYY-MM-DD"; a trailing time-of-day part ("T.." / " ..") is ignored.
inline Date parse_date(const std::string& iso) {
    Date d;
    char sep1 = 0, sep2 = 0;
    if (std::sscanf(iso.c_str(), "%d%c%d%c%d", &d.year, &sep1, &d.month, &sep2, &d.day) != 5 ||
        sep1 != '-' || sep2 != '-')
        throw ValidationError("date: cannot parse '" + iso + "' (expected YYYY-MM-DD)");
    validate(d);
    return d;
}

inline std::string to_iso(const Date& d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

// Days since 1970-01-01 (civil, proleptic Gregorian).
inline long to_serial_days(const Date& d) {
    int y = d.year - (d.month <= 2);
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned m = static_cast<unsigned>(d.month);
    const unsigned doy = (153 * (m + (m > 2 ? -3u : 9u)) + 2) / 5 + static_cast<unsigned>(d.day) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<long>(era) * 146097 + static_cast<long>(doe) - 719468;
}

// Month arithmetic with day clamping (2026-01-31 + 1 month = 2026-02-28).
inline Date add_months(const Date& d, int months) {
    int idx = d.year * 12 + (d.month - 1) + months;
    Date out;
    out.year = idx >= 0 ? idx / 12 : (idx - 11) / 12;
    out.month = idx - out.year * 12 + 1;
    out.day = d.day;
    int dim = days_in_month(out.year, out.month);
    if (out.day > dim) out.day = dim;
    return out;
}

} // namespace mrisk
