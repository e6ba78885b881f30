#include "irm/time_util.hpp"

#include "irm/error.hpp"

#include <charconv>
#include <cstdio>

namespace irm {

namespace {

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) return false;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (text[i] < '0' || text[i] > '9') return false;
    }
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return ec == std::errc{};
}

std::optional<Timestamp> make_time(int year, int month, int day, int hh, int mm, int ss) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

}  // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::BadTimestamp: return "BadTimestamp";
        case ErrorCode::UnknownActivity: return "UnknownActivity";
        case ErrorCode::DuplicateEvent: return "DuplicateEvent";
        case ErrorCode::EmptySession: return "EmptySession";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::UncalibratedModel: return "UncalibratedModel";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::DuplicateAction: return "DuplicateAction";
        case ErrorCode::PolicyConfigError: return "PolicyConfigError";
        case ErrorCode::StorageFull: return "StorageFull";
        case ErrorCode::CorruptSegment: return "CorruptSegment";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::IllegalTransition: return "IllegalTransition";
        case ErrorCode::MissingFeedback: return "MissingFeedback";
        case ErrorCode::AlertNotFound: return "AlertNotFound";
        case ErrorCode::GeneratorTimeout: return "GeneratorTimeout";
        case ErrorCode::LabelMismatch: return "LabelMismatch";
        case ErrorCode::Precondition: return "Precondition";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

std::optional<Timestamp> parse_cert_time(std::string_view text, TimeZone tz) {
    // MM/DD/YYYY HH:MM:SS
    if (text.size() != 19 || text[2] != '/' || text[5] != '/' || text[10] != ' ' || text[13] != ':' ||
        text[16] != ':') {
        return std::nullopt;
    }
    int month = 0, day = 0, year = 0, hh = 0, mm = 0, ss = 0;
    if (!read_int(text, 0, 2, month) || !read_int(text, 3, 2, day) || !read_int(text, 6, 4, year) ||
        !read_int(text, 11, 2, hh) || !read_int(text, 14, 2, mm) || !read_int(text, 17, 2, ss)) {
        return std::nullopt;
    }
    auto local = make_time(year, month, day, hh, mm, ss);
    if (!local) return std::nullopt;
    return *local - tz.utc_offset;
}

std::string format_cert_time(Timestamp ts, TimeZone tz) {
    using namespace std::chrono;
    const auto local = ts + tz.utc_offset;
    const auto day = floor<days>(local);
    const year_month_day ymd{day};
    const hh_mm_ss hms{local - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02u/%02u/%04d %02d:%02d:%02d", static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(ymd.year()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::string format_iso(Timestamp ts) {
    using namespace std::chrono;
    const auto day = floor<days>(ts);
    const year_month_day ymd{day};
    const hh_mm_ss hms{ts - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::optional<Timestamp> parse_iso(std::string_view text) {
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
        text[16] != ':' || text[19] != 'Z') {
        return std::nullopt;
    }
    int month = 0, day = 0, year = 0, hh = 0, mm = 0, ss = 0;
    if (!read_int(text, 0, 4, year) || !read_int(text, 5, 2, month) || !read_int(text, 8, 2, day) ||
        !read_int(text, 11, 2, hh) || !read_int(text, 14, 2, mm) || !read_int(text, 17, 2, ss)) {
        return std::nullopt;
    }
    return make_time(year, month, day, hh, mm, ss);
}

std::int64_t local_seconds_of_day(Timestamp ts, TimeZone tz) {
    using namespace std::chrono;
    const auto local = ts + tz.utc_offset;
    return (local - floor<days>(local)).count();
}

std::int64_t local_day_index(Timestamp ts, TimeZone tz) {
    using namespace std::chrono;
    return floor<days>(ts + tz.utc_offset).time_since_epoch().count();
}

std::optional<Seconds> parse_duration(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::int64_t mult = 1;
    switch (text.back()) {
        case 's': mult = 1; text.remove_suffix(1); break;
        case 'm': mult = 60; text.remove_suffix(1); break;
        case 'h': mult = 3600; text.remove_suffix(1); break;
        case 'd': mult = 86400; text.remove_suffix(1); break;
        default: break;
    }
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return Seconds{value * mult};
}

Timestamp now_utc() {
    return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
}

}  // namespace irm
