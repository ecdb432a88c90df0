#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mrpllm {

// All timestamps are UTC epoch seconds. Calendar derivations take an explicit
// minute offset so day boundaries can follow the dataset city's local clock.

// Accepts ISO-8601 ("2012-04-03T18:00:06Z", "2012-04-03 18:00:06+08:00",
// date-only) or plain epoch seconds. Returns nullopt on anything else.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

std::string format_timestamp_utc(std::int64_t epoch_seconds);

// Local calendar day index (days since epoch, floored), used to split
// check-ins into daily sequences.
std::int64_t local_day_index(std::int64_t epoch_seconds, int tz_offset_minutes);

// 0 = Sunday ... 6 = Saturday.
int local_day_of_week(std::int64_t epoch_seconds, int tz_offset_minutes);
int local_hour(std::int64_t epoch_seconds, int tz_offset_minutes);

// "Sun".."Sat"
std::string day_label(int day_of_week);
// 12-hour clock: 0 -> "12am", 13 -> "1pm"
std::string hour_label(int hour);
// Coarse time-of-day bucket: Early Morning / Morning / Afternoon / Evening
std::string daypart_label(int hour);

} // namespace mrpllm
