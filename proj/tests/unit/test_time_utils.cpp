#include "mrpllm/time_utils.hpp"

#include <doctest.h>

using namespace mrpllm;

TEST_CASE("timestamp parsing accepts ISO-8601 and epoch seconds") {
    CHECK(parse_timestamp("0") == 0);
    CHECK(parse_timestamp("1333324800") == 1333324800);
    CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_timestamp("2012-04-02T00:00:00Z") == 1333324800);
    CHECK(parse_timestamp("2012-04-02 00:00:00") == 1333324800);
    CHECK(parse_timestamp("2012-04-02T08:00:00+08:00") == 1333324800);
    CHECK(parse_timestamp("2012-04-01T19:00:00-05:00") == 1333324800);
    CHECK(parse_timestamp("2012-04-02") == 1333324800);
    CHECK_FALSE(parse_timestamp("not a time").has_value());
    CHECK_FALSE(parse_timestamp("2012-13-40T99:00:00Z").has_value());
    CHECK_FALSE(parse_timestamp("").has_value());
}

TEST_CASE("timestamp round-trip through the formatter") {
    for (std::int64_t t : {0LL, 1333324800LL, 86399LL, 1700000000LL}) {
        auto parsed = parse_timestamp(format_timestamp_utc(t));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == t);
    }
}

TEST_CASE("calendar derivations follow the requested offset") {
    const std::int64_t t = 1333324800; // 2012-04-02T00:00:00Z, a Monday
    CHECK(local_day_of_week(t, 0) == 1);
    CHECK(local_hour(t, 0) == 0);
    // One minute before midnight local time still belongs to the prior day.
    CHECK(local_day_index(t, -1) == local_day_index(t, 0) - 1);
    CHECK(local_hour(t, 8 * 60) == 8);
    CHECK(local_day_of_week(t - 1, 0) == 0); // Sunday just before
}

TEST_CASE("labels") {
    CHECK(day_label(0) == "Sun");
    CHECK(day_label(1) == "Mon");
    CHECK(day_label(6) == "Sat");
    CHECK(hour_label(0) == "12am");
    CHECK(hour_label(1) == "1am");
    CHECK(hour_label(12) == "12pm");
    CHECK(hour_label(13) == "1pm");
    CHECK(hour_label(18) == "6pm");
    CHECK(hour_label(23) == "11pm");
    CHECK(daypart_label(2) == "Early Morning");
    CHECK(daypart_label(9) == "Morning");
    CHECK(daypart_label(14) == "Afternoon");
    CHECK(daypart_label(20) == "Evening");
}
