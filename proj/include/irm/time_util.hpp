#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace irm {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

// Fixed UTC offset in which CERT-style timestamps are written.
struct TimeZone {
    std::chrono::minutes utc_offset{0};
};

// Parses `MM/DD/YYYY HH:MM:SS` interpreted in `tz`. Rejects impossible
// calendar dates and out-of-range clock fields.
std::optional<Timestamp> parse_cert_time(std::string_view text, TimeZone tz = {});

// Inverse of parse_cert_time; zero-padded so parsed values round-trip.
std::string format_cert_time(Timestamp ts, TimeZone tz = {});

// ISO-8601 `YYYY-MM-DDTHH:MM:SSZ`, used in JSON payloads.
std::string format_iso(Timestamp ts);
std::optional<Timestamp> parse_iso(std::string_view text);

// Seconds since local midnight in `tz`.
std::int64_t local_seconds_of_day(Timestamp ts, TimeZone tz);

// Days since epoch in `tz` (for daily bucketing).
std::int64_t local_day_index(Timestamp ts, TimeZone tz);

// Accepts "30s", "5m", "1h", "7d" or a bare number of seconds.
std::optional<Seconds> parse_duration(std::string_view text);

inline std::int64_t to_epoch(Timestamp ts) { return ts.time_since_epoch().count(); }
inline Timestamp from_epoch(std::int64_t s) { return Timestamp{Seconds{s}}; }

Timestamp now_utc();

}  // namespace irm
