#pragma once

#include "irm/time_util.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace irm {

enum class EventSource { Logon, Device, File };

enum class Activity {
    Login,
    LoginFailed,
    Logout,
    DeviceConnect,
    DeviceDisconnect,
    FileUpload,
    FileCreate,
    FileRead,
    FileWrite,
    FileRename,
    FileMove,
    FileDelete,
    FileShareExternal,
    FileShareInternal,
    AttachmentShare,
    AttachmentEdit,
};
inline constexpr std::size_t kActivityCount = 16;

enum class AppContext { SharePoint, OneDrive, GoogleDrive, Teams, Box, LocalFS, Unknown };
inline constexpr std::size_t kAppContextCount = 7;

enum class DeviceTrust { ManagedCompliant, ManagedNonCompliant, Unmanaged, Unknown };

enum class Privilege { High, Moderate, Low, Guest };

std::string_view to_string(EventSource v);
std::string_view to_string(Activity v);
std::string_view to_string(AppContext v);
std::string_view to_string(DeviceTrust v);
std::string_view to_string(Privilege v);

std::optional<EventSource> parse_event_source(std::string_view s);
std::optional<Activity> parse_activity(std::string_view s);
std::optional<AppContext> parse_app_context(std::string_view s);
std::optional<DeviceTrust> parse_device_trust(std::string_view s);
std::optional<Privilege> parse_privilege(std::string_view s);

// Which source may legally carry an activity.
EventSource source_of(Activity a);

struct ActivityEvent {
    std::string event_id;
    Timestamp timestamp{};
    std::string user_id;
    std::string device_id;
    EventSource source = EventSource::Logon;
    Activity activity = Activity::Login;
    AppContext app_context = AppContext::Unknown;
    std::optional<std::string> ip_address;
    std::optional<std::string> geo_region;
    DeviceTrust device_trust = DeviceTrust::Unknown;
    std::optional<std::string> file_id;
    std::map<std::string, std::string> raw_extra;

    // Convenience accessor for raw_extra; empty view when absent.
    std::string_view extra(const std::string& key) const;

    bool operator==(const ActivityEvent&) const = default;
};

struct UserRecord {
    std::string user_id;
    std::string display_name;
    std::string role;
    Privilege privilege = Privilege::Low;
    std::string department;
};

struct Session {
    std::string session_id;
    std::string user_id;
    std::string device_id;
    Timestamp start{};
    Timestamp end{};
    std::vector<ActivityEvent> events;
};

// raw_extra keys with engine-wide meaning.
namespace extra_key {
inline constexpr const char* kFilename = "filename";
inline constexpr const char* kContent = "content";
inline constexpr const char* kPath = "path";
inline constexpr const char* kRecipient = "recipient";
inline constexpr const char* kEncrypted = "encrypted";
inline constexpr const char* kBytes = "bytes";
inline constexpr const char* kSyncTarget = "sync_target";
inline constexpr const char* kPrivilegeGrant = "privilege_grant";
inline constexpr const char* kAuthorized = "authorized";
inline constexpr const char* kDeviceNonCompliant = "device_noncompliant";
}  // namespace extra_key

}  // namespace irm
