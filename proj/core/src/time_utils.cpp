#include "mrpllm/time_utils.hpp"

#include "mrpllm/util.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <cstdlib>

namespace mrpllm {

namespace {

// Howard Hinnant's civil-from-days / days-from-civil.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    size_t start = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (start == s.size()) return false;
    for (size_t i = start; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

} // namespace

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
    std::string s = trim(text);
    if (s.empty()) return std::nullopt;
    if (all_digits(s)) {
        return std::strtoll(s.c_str(), nullptr, 10);
    }

    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    int n = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d%n", &y, &mo, &d, &n) != 3) return std::nullopt;
    std::string rest = trim(s.substr(static_cast<size_t>(n)));
    if (!rest.empty()) {
        if (rest[0] == 'T' || rest[0] == 't') rest = rest.substr(1);
        rest = trim(rest);
        int n2 = 0;
        if (std::sscanf(rest.c_str(), "%d:%d:%d%n", &h, &mi, &sec, &n2) == 3) {
            rest = trim(rest.substr(static_cast<size_t>(n2)));
        } else if (std::sscanf(rest.c_str(), "%d:%d%n", &h, &mi, &n2) == 2) {
            rest = trim(rest.substr(static_cast<size_t>(n2)));
        } else {
            return std::nullopt;
        }
    }
    int offset_sec = 0;
    if (!rest.empty()) {
        if (rest == "Z" || rest == "z") {
            offset_sec = 0;
        } else if (rest[0] == '+' || rest[0] == '-') {
            int oh = 0, om = 0;
            if (std::sscanf(rest.c_str() + 1, "%d:%d", &oh, &om) < 1) return std::nullopt;
            // compact form "+0800"
            if (rest.find(':') == std::string::npos && rest.size() >= 5) {
                oh = std::atoi(rest.substr(1, 2).c_str());
                om = std::atoi(rest.substr(3, 2).c_str());
            }
            offset_sec = (oh * 3600 + om * 60) * (rest[0] == '-' ? -1 : 1);
        } else {
            return std::nullopt;
        }
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        sec < 0 || sec > 60)
        return std::nullopt;
    std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
    return days * 86400 + h * 3600 + mi * 60 + sec - offset_sec;
}

std::string format_timestamp_utc(std::int64_t t) {
    std::int64_t days = floor_div(t, 86400);
    std::int64_t rem = t - days * 86400;
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

std::int64_t local_day_index(std::int64_t t, int tz_offset_minutes) {
    return floor_div(t + static_cast<std::int64_t>(tz_offset_minutes) * 60, 86400);
}

int local_day_of_week(std::int64_t t, int tz_offset_minutes) {
    // 1970-01-01 was a Thursday (= 4).
    std::int64_t day = local_day_index(t, tz_offset_minutes);
    return static_cast<int>(((day % 7) + 7 + 4) % 7);
}

int local_hour(std::int64_t t, int tz_offset_minutes) {
    std::int64_t local = t + static_cast<std::int64_t>(tz_offset_minutes) * 60;
    std::int64_t sec_of_day = local - local_day_index(t, tz_offset_minutes) * 86400;
    return static_cast<int>(sec_of_day / 3600);
}

std::string day_label(int dow) {
    static const std::array<const char*, 7> names = {"Sun", "Mon", "Tue", "Wed",
                                                     "Thu", "Fri", "Sat"};
    return names[static_cast<size_t>(((dow % 7) + 7) % 7)];
}

std::string hour_label(int hour) {
    hour = ((hour % 24) + 24) % 24;
    int h12 = hour % 12;
    if (h12 == 0) h12 = 12;
    return std::to_string(h12) + (hour < 12 ? "am" : "pm");
}

std::string daypart_label(int hour) {
    hour = ((hour % 24) + 24) % 24;
    if (hour < 6) return "Early Morning";
    if (hour < 12) return "Morning";
    if (hour < 18) return "Afternoon";
    return "Evening";
}

} // namespace mrpllm
