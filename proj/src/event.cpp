#include "irm/event.hpp"

#include <array>

namespace irm {

namespace {

constexpr std::array<std::string_view, 3> kSourceNames{"logon", "device", "file"};
constexpr std::array<std::string_view, kActivityCount> kActivityNames{
    "Login",        "LoginFailed", "Logout",   "DeviceConnect", "DeviceDisconnect",  "FileUpload",
    "FileCreate",   "FileRead",    "FileWrite", "FileRename",   "FileMove",          "FileDelete",
    "FileShareExternal", "FileShareInternal", "AttachmentShare", "AttachmentEdit"};
constexpr std::array<std::string_view, kAppContextCount> kAppNames{
    "SharePoint", "OneDrive", "GoogleDrive", "Teams", "Box", "LocalFS", "Unknown"};
constexpr std::array<std::string_view, 4> kTrustNames{"ManagedCompliant", "ManagedNonCompliant", "Unmanaged",
                                                      "Unknown"};
constexpr std::array<std::string_view, 4> kPrivilegeNames{"High", "Moderate", "Low", "Guest"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(EventSource v) { return kSourceNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Activity v) { return kActivityNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(AppContext v) { return kAppNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(DeviceTrust v) { return kTrustNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Privilege v) { return kPrivilegeNames[static_cast<std::size_t>(v)]; }

std::optional<EventSource> parse_event_source(std::string_view s) { return lookup<EventSource>(kSourceNames, s); }
std::optional<Activity> parse_activity(std::string_view s) { return lookup<Activity>(kActivityNames, s); }
std::optional<AppContext> parse_app_context(std::string_view s) { return lookup<AppContext>(kAppNames, s); }
std::optional<DeviceTrust> parse_device_trust(std::string_view s) { return lookup<DeviceTrust>(kTrustNames, s); }
std::optional<Privilege> parse_privilege(std::string_view s) { return lookup<Privilege>(kPrivilegeNames, s); }

EventSource source_of(Activity a) {
    switch (a) {
        case Activity::Login:
        case Activity::LoginFailed:
        case Activity::Logout:
            return EventSource::Logon;
        case Activity::DeviceConnect:
        case Activity::DeviceDisconnect:
            return EventSource::Device;
        default:
            return EventSource::File;
    }
}

std::string_view ActivityEvent::extra(const std::string& key) const {
    auto it = raw_extra.find(key);
    return it == raw_extra.end() ? std::string_view{} : std::string_view{it->second};
}

}  // namespace irm
