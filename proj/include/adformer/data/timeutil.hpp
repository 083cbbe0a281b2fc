#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace adformer {

/// Timestamps are carried as "local epoch seconds": seconds since
/// 1970-01-01 00:00:00 in the dataset's local clock. Day-of-week and
/// time-of-day then fall out of plain integer arithmetic.
namespace timeutil {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

/// Days since 1970-01-01 for a proleptic Gregorian civil date.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = floor_div(y, 400);
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int &y, int &m, int &d) {
    z += 719468;
    const std::int64_t era = floor_div(z, 146097);
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(yy + (m <= 2));
}

/// Monday = 0 … Sunday = 6.
inline int day_of_week(std::int64_t local_sec) {
    // 1970-01-01 was a Thursday (index 3).
    return static_cast<int>(floor_mod(floor_div(local_sec, 86400) + 3, 7));
}

inline std::int64_t seconds_since_midnight(std::int64_t local_sec) {
    return floor_mod(local_sec, 86400);
}

namespace detail {

inline bool parse_fixed_uint(const std::string &s, std::size_t pos, std::size_t len, int &out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < len; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

}  // namespace detail

/// Parses `YYYY-MM-DD HH:MM:SS` (taken as local wall-clock time) or RFC 3339
/// `YYYY-MM-DDTHH:MM:SS[.fff](Z|±HH:MM)` (converted from its own offset into
/// the dataset's local clock given by utc_offset_minutes). Throws on malformed
/// input or out-of-range fields.
inline std::int64_t parse_timestamp(const std::string &s, int utc_offset_minutes) {
    int y, mo, d, h, mi, se;
    auto fail = [&]() -> std::int64_t {
        throw std::invalid_argument("timestamp: cannot parse '" + s + "'");
    };
    if (!detail::parse_fixed_uint(s, 0, 4, y) || s.size() < 19 || s[4] != '-' || s[7] != '-') {
        return fail();
    }
    if (!detail::parse_fixed_uint(s, 5, 2, mo) || !detail::parse_fixed_uint(s, 8, 2, d)) return fail();
    const char sep = s[10];
    if (sep != ' ' && sep != 'T' && sep != 't') return fail();
    if (!detail::parse_fixed_uint(s, 11, 2, h) || s[13] != ':' ||
        !detail::parse_fixed_uint(s, 14, 2, mi) || s[16] != ':' ||
        !detail::parse_fixed_uint(s, 17, 2, se)) {
        return fail();
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) return fail();
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {  // fractional seconds: accepted, truncated
        ++pos;
        if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) return fail();
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    const std::int64_t naive = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
    if (pos == s.size()) {
        if (sep == ' ') return naive;  // plain local wall-clock form
        return fail();                 // RFC 3339 requires an offset
    }
    std::int64_t own_offset_sec = 0;
    const char z = s[pos];
    if (z == 'Z' || z == 'z') {
        ++pos;
    } else if (z == '+' || z == '-') {
        int oh, om;
        if (!detail::parse_fixed_uint(s, pos + 1, 2, oh) || pos + 3 >= s.size() ||
            s[pos + 3] != ':' || !detail::parse_fixed_uint(s, pos + 4, 2, om) || oh > 23 ||
            om > 59) {
            return fail();
        }
        own_offset_sec = (z == '+' ? 1 : -1) * (oh * 3600 + om * 60);
        pos += 6;
    } else {
        return fail();
    }
    if (pos != s.size()) return fail();
    const std::int64_t utc = naive - own_offset_sec;
    return utc + static_cast<std::int64_t>(utc_offset_minutes) * 60;
}

/// `YYYY-MM-DD HH:MM:SS` in the local clock.
inline std::string format_timestamp(std::int64_t local_sec) {
    int y, mo, d;
    civil_from_days(floor_div(local_sec, 86400), y, mo, d);
    const std::int64_t rem = floor_mod(local_sec, 86400);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", y, mo, d,
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

}  // namespace timeutil
}  // namespace adformer
