#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "stlf/error.hpp"

namespace stlf {

// Timestamps are hours since the Unix epoch (UTC). Calendar conversions use
// the proleptic Gregorian day algorithms (Howard Hinnant's civil arithmetic).

struct CivilDate {
    int year;
    int month; // 1..12
    int day;   // 1..31
};

inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline std::int64_t hours_from_civil(int y, int mo, int d, int h) {
    return days_from_civil(y, mo, d) * 24 + h;
}

inline std::int64_t day_of_hour(std::int64_t hour) { return floor_div(hour, 24); }

inline int hour_of_day(std::int64_t hour) {
    return static_cast<int>(hour - day_of_hour(hour) * 24);
}

// ISO weekday, Monday = 0. Day 0 (1970-01-01) was a Thursday.
inline int day_of_week(std::int64_t days) {
    return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

// Zero-based day of year.
inline int day_of_year(const CivilDate& c) {
    return static_cast<int>(days_from_civil(c.year, c.month, c.day) -
                            days_from_civil(c.year, 1, 1));
}

// Accepts "YYYY-MM-DD".
inline std::int64_t parse_iso_date(const std::string& s) {
    int y = 0, mo = 0, d = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d) != 3 || mo < 1 || mo > 12 || d < 1 ||
        d > 31)
        throw DataError("unparseable date: '" + s + "'");
    return days_from_civil(y, mo, d);
}

// Accepts "YYYY-MM-DDTHH[:MM[:SS]][Z]" with 'T' or ' ' separator. Minutes and
// seconds, when present, must be zero: the data model is strictly hourly.
inline std::int64_t parse_iso_hour(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    char sep = 0;
    const int got =
        std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &se);
    if (got < 5 || (sep != 'T' && sep != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 ||
        h < 0 || h > 23)
        throw DataError("unparseable hourly timestamp: '" + s + "'");
    if (mi != 0 || se != 0)
        throw DataError("timestamp not on the hour: '" + s + "'");
    return hours_from_civil(y, mo, d, h);
}

inline std::string format_iso_hour(std::int64_t hour) {
    const CivilDate c = civil_from_days(day_of_hour(hour));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:00:00Z", c.year, c.month, c.day,
                  hour_of_day(hour));
    return buf;
}

inline std::string format_iso_date(std::int64_t days) {
    const CivilDate c = civil_from_days(days);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", c.year, c.month, c.day);
    return buf;
}

} // namespace stlf
