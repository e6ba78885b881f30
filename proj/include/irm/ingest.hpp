#pragma once

#include "irm/error.hpp"
#include "irm/event.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace irm {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv(std::string_view line);

// FNV-1a over the file name, rendered as 16 hex digits.
std::string file_id_for(std::string_view filename);

// Column layout and verb mapping for one CERT source. Column names `id`,
// `date`, `user`, `pc`, `activity`, `filename`, `content`, `ip`, `app` and
// `region` are understood; any other name lands in raw_extra.
struct SourceMapping {
    std::vector<std::string> columns;
    std::map<std::string, Activity> activity_map;
    std::optional<Activity> default_activity;
};

struct ColumnMapping {
    SourceMapping logon;
    SourceMapping device;
    SourceMapping file;

    static ColumnMapping cert_defaults();
    // Overlays a JSON document of the form
    // {"file": {"columns": [...], "activity_map": {"File Delete": "FileDelete"}}, ...}
    static ColumnMapping from_json_text(const std::string& text);
    static ColumnMapping load(const std::filesystem::path& path);

    const SourceMapping& for_source(EventSource s) const;
};

struct ParseOptions {
    TimeZone tz{};
    Timestamp min_time = from_epoch(631152000);   // 1990-01-01
    Timestamp max_time = from_epoch(4102444800);  // 2100-01-01
    ColumnMapping mapping = ColumnMapping::cert_defaults();
};

// Row parsers: one event or a typed irm::Error (MalformedRow, BadTimestamp,
// UnknownActivity).
ActivityEvent parse_row(EventSource source, std::string_view csv_row, const ParseOptions& opts);
ActivityEvent parse_logon_row(std::string_view csv_row, const ParseOptions& opts = {});
ActivityEvent parse_device_row(std::string_view csv_row, const ParseOptions& opts = {});
ActivityEvent parse_file_row(std::string_view csv_row, const ParseOptions& opts = {});

class UserDirectory {
public:
    void add(UserRecord record);
    // Unknown users resolve to a synthetic Low-privilege record.
    UserRecord resolve(const std::string& user_id) const;
    const UserRecord* find(const std::string& user_id) const;
    std::vector<std::string> users_in_department(const std::string& department) const;
    std::size_t size() const { return users_.size(); }

    // users.csv with a header row; recognised columns: user_id, employee_name
    // (or name), role, department, privilege.
    static UserDirectory load_csv(const std::filesystem::path& path);
    static UserDirectory from_csv_text(const std::string& text);

private:
    std::unordered_map<std::string, UserRecord> users_;
};

struct DeviceEntry {
    std::string device_id;
    DeviceTrust trust = DeviceTrust::Unmanaged;
    bool noncompliant_override = false;
    std::string owner;
    std::string software_version;
};

class DeviceRegistry {
public:
    void add(DeviceEntry entry);
    const DeviceEntry* find(const std::string& device_id) const;
    std::size_t size() const { return devices_.size(); }
    const std::unordered_map<std::string, DeviceEntry>& entries() const { return devices_; }

    // devices.csv header: device_id,trust[,owner][,software_version][,noncompliant]
    static DeviceRegistry load_csv(const std::filesystem::path& path);
    static DeviceRegistry from_csv_text(const std::string& text);

private:
    std::unordered_map<std::string, DeviceEntry> devices_;
};

std::optional<std::uint32_t> parse_ipv4(std::string_view text);

// Set of IPv4 addresses and CIDR blocks, one per line; '#' starts a comment.
class IpList {
public:
    bool add(std::string_view entry);
    bool contains(std::string_view ip) const;
    bool empty() const { return blocks_.empty(); }

    static IpList from_text(const std::string& text);
    static IpList load(const std::filesystem::path& path);

private:
    struct Block {
        std::uint32_t network;
        std::uint32_t mask;
    };
    std::vector<Block> blocks_;
};

// Static CIDR -> ISO region table (`cidr,region` per line).
class IpRegionTable {
public:
    bool add(std::string_view cidr, std::string region);
    std::optional<std::string> lookup(std::string_view ip) const;

    static IpRegionTable from_text(const std::string& text);
    static IpRegionTable load(const std::filesystem::path& path);

private:
    struct Entry {
        std::uint32_t network;
        std::uint32_t mask;
        std::string region;
    };
    std::vector<Entry> entries_;
};

struct EnrichmentTables {
    DeviceRegistry devices;
    IpRegionTable regions;
};

// Best-effort: trust from the registry (absent -> Unmanaged), region from the
// IP table. Idempotent.
ActivityEvent enrich(ActivityEvent event, const EnrichmentTables& tables);

// Streaming per-user session builder. A Login opens a session, a Logout or an
// idle gap closes it, and events outside any open session become singletons.
class Sessionizer {
public:
    explicit Sessionizer(Seconds idle_gap = std::chrono::minutes{30});

    // Events must be time-ordered per user. Returns sessions closed by `event`.
    std::vector<Session> push(ActivityEvent event);
    // Closes sessions idle for longer than the gap as of `now`.
    std::vector<Session> close_idle(Timestamp now);
    std::vector<Session> flush();
    std::size_t open_sessions() const { return open_.size(); }

private:
    Session start(ActivityEvent event);

    Seconds idle_gap_;
    std::map<std::string, Session> open_;
};

// Batch form: partitions by user, keeps input order within each user and
// returns sessions ordered by (start, user, session_id).
std::vector<Session> sessionize(std::span<const ActivityEvent> events,
                                Seconds idle_gap = std::chrono::minutes{30});

// Streams rows of a CERT CSV file; a leading header row (first field "id")
// is skipped. The callback receives either an event or the row's error.
struct RowOutcome {
    std::optional<ActivityEvent> event;
    std::optional<Error> error;
    std::size_t line_no = 0;
};

class CsvSourceReader {
public:
    CsvSourceReader(std::unique_ptr<std::istream> in, EventSource source, const ParseOptions& opts);
    static std::unique_ptr<CsvSourceReader> open(const std::filesystem::path& path, EventSource source,
                                                 const ParseOptions& opts);

    // Next non-empty row; nullopt at end of stream.
    std::optional<RowOutcome> next();
    EventSource source() const { return source_; }

private:
    std::unique_ptr<std::istream> in_;
    EventSource source_;
    const ParseOptions* opts_;
    std::size_t line_no_ = 0;
    std::string line_;
};

// Merges the logon/device/file readers of a CERT directory by timestamp
// (each file is assumed to be time-sorted, as CERT files are).
class CertDirectoryReader {
public:
    CertDirectoryReader(const std::filesystem::path& dir, const ParseOptions& opts);
    std::optional<RowOutcome> next();

private:
    std::vector<std::unique_ptr<CsvSourceReader>> readers_;
    std::vector<std::optional<RowOutcome>> heads_;
};

}  // namespace irm
