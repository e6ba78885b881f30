#pragma once

#include "irm/event.hpp"
#include "irm/ingest.hpp"
#include "irm/sensitivity.hpp"

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace irm {

enum class PolicyCategory { UserRisk, DataMovement, AttackPath, ActivityRisk, DataRisk, DataCollaboration, BehaviorAnomaly };
enum class Severity { LowSev, Medium, High, Critical };
enum class ActionKind { AlertOnly, RevokePrivilege, RestrictFileAccess, FlagUser, DisconnectDevice };

enum class TriggerKind {
    CountInWindow,
    GeoDistanceInWindow,
    PrivilegeEscalation,
    UntrustedDevice,
    BytesInWindow,
    ExternalShare,
    SensitiveAccess,
    MassDeletion,
    StorageLocation,
    PublicLink,
    BaselineDeviation,
    ExcessivePrivilegeSpread,
    OutdatedSoftware,
    HighRiskAccessSpread,
    LocationNotApproved,
    UnapprovedSync,
    UnencryptedTransfer,
};

std::string_view to_string(PolicyCategory v);
std::string_view to_string(Severity v);
std::string_view to_string(ActionKind v);
std::string_view to_string(TriggerKind v);
std::optional<PolicyCategory> parse_policy_category(std::string_view s);
std::optional<Severity> parse_severity(std::string_view s);
std::optional<ActionKind> parse_action_kind(std::string_view s);
std::optional<TriggerKind> parse_trigger_kind(std::string_view s);

enum class DeviceCheck { Unassociated, Unmanaged, NonCompliant };

// Kind-specific parameters; which fields are required depends on the kind.
struct TriggerParams {
    Seconds window{0};
    std::size_t threshold = 0;       // event count / distinct count
    std::uint64_t bytes_threshold = 0;
    double distance_km = 0.0;
    double z_limit = 3.0;
    double floor = 10.0;
    std::vector<Activity> activities;  // empty = any
    std::vector<AppContext> apps;      // empty = any
    std::vector<DataCategory> categories;
    bool require_sensitive = false;
    bool distinct_devices = false;
    DeviceCheck device_check = DeviceCheck::Unmanaged;
    std::size_t min_systems = 0;
};

struct TriggerSpec {
    TriggerKind kind = TriggerKind::CountInWindow;
    TriggerParams params;
};

struct Policy {
    std::string policy_id;
    std::string name;
    PolicyCategory category = PolicyCategory::UserRisk;
    TriggerSpec trigger;
    Severity severity = Severity::Medium;
    ActionKind action = ActionKind::AlertOnly;
    bool enabled = true;
};

struct ActionRecord {
    ActionKind action = ActionKind::AlertOnly;
    std::string target;
    Timestamp executed_at{};
    bool simulated = true;
    std::string operator_note;
};

struct PolicyViolation {
    std::string violation_id;
    std::string policy_id;
    std::string policy_name;
    PolicyCategory category = PolicyCategory::UserRisk;
    Severity severity = Severity::Medium;
    std::string subject;
    std::string user_id;
    std::vector<std::string> triggering_event_ids;
    Timestamp first_event_at{};
    double observed = 0.0;
    double threshold = 0.0;
    Timestamp fired_at{};
    std::optional<ActionRecord> action_taken;
};

// Organisation data the triggers consult.
struct PolicyAux {
    std::vector<std::string> org_domains;
    std::vector<std::string> domain_allowlist;
    std::vector<std::string> approved_regions;
    std::vector<std::string> approved_sync_targets;
    std::vector<std::string> approved_paths;
    std::set<std::string> sensitive_acl;
    std::map<std::string, std::vector<std::string>> privileged_roles;  // user -> systems
    std::string min_software_version;
    std::vector<std::string> high_risk_resources;  // substrings of file name / path

    static PolicyAux from_json_text(const std::string& text);
    static PolicyAux load(const std::filesystem::path& path);
};

// One diagnostic per rejected policy entry.
struct PolicyDiagnostic {
    std::size_t index = 0;
    std::size_t line = 0;
    std::string policy_id;
    std::string message;
};

class PolicyConfigError : public Error {
public:
    PolicyConfigError(std::vector<PolicyDiagnostic> diags, std::vector<Policy> valid);
    const std::vector<PolicyDiagnostic>& diagnostics() const { return diags_; }
    const std::vector<Policy>& valid_policies() const { return valid_; }

private:
    std::vector<PolicyDiagnostic> diags_;
    std::vector<Policy> valid_;
};

// Parses a JSON array of policy objects. Valid entries are always kept; if
// any entry is invalid, PolicyConfigError carries the diagnostics and the
// valid subset.
std::vector<Policy> load_policies(const std::string& json_text);
std::vector<Policy> load_policies_file(const std::filesystem::path& path);
// Same, but returns diagnostics instead of throwing.
std::vector<Policy> load_policies_lenient(const std::string& json_text, std::vector<PolicyDiagnostic>& diags);

// Shipped defaults: one policy per row of the seven policy families.
std::string default_policies_json();
std::vector<Policy> default_policies();

// Great-circle distance between two region centroids, if both are known.
std::optional<double> region_distance_km(const std::string& a, const std::string& b);
double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Dotted numeric version compare: -1, 0, 1.
int compare_versions(std::string_view a, std::string_view b);

struct Baseline {
    std::string user_id;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t samples = 0;  // daily buckets observed
    bool cold() const { return samples < kWarmBuckets; }

    static constexpr std::size_t kWarmBuckets = 14;
    static constexpr std::size_t kWindowDays = 30;
};

// Fires when the baseline is warm, today's count exceeds mean + z*std and
// meets the absolute floor.
bool baseline_exceeded(double today_count, const Baseline& baseline, double z_limit, double floor);

// Rolling daily counters for one (policy, user).
class DailyCounter {
public:
    void add(std::int64_t day, double amount = 1.0);
    // Baseline over the days strictly before `today`, starting at `first_day`.
    Baseline baseline(const std::string& user, std::int64_t first_day, std::int64_t today) const;
    double count_on(std::int64_t day) const;

private:
    std::map<std::int64_t, double> days_;
};

// Engine-side record of enforcement intent; external systems are never touched.
struct ShadowRegistry {
    std::set<std::string> revoked_users;
    std::set<std::string> restricted_users;
    std::set<std::string> flagged_users;
    std::set<std::string> disconnected_devices;
    std::set<std::string> applied_violations;
};

ActionRecord apply_action(const PolicyViolation& violation, ActionKind action, ShadowRegistry& registry);

struct PolicyEngineOptions {
    TimeZone tz{};
    Seconds default_suppression = std::chrono::hours{1};
};

// Evaluates enabled policies over a per-subject time-ordered stream. Not
// thread-safe; shard by subject for parallel evaluation.
class PolicyEngine {
public:
    PolicyEngine(std::vector<Policy> policies, PolicyAux aux, DeviceRegistry devices = {},
                 PolicyEngineOptions opts = {});

    std::vector<PolicyViolation> evaluate(const ActivityEvent& event, const UserRecord& user,
                                          const LabelSet& file_labels);

    const std::vector<Policy>& policies() const { return policies_; }
    const Policy* find(const std::string& policy_id) const;
    ShadowRegistry& registry() { return registry_; }
    const ShadowRegistry& registry() const { return registry_; }

private:
    struct WindowEntry {
        Timestamp ts;
        std::string event_id;
        double value;
        std::string key;  // device / region / resource, depending on kind
    };
    struct SubjectState {
        std::deque<WindowEntry> window;
        // Newest event of the last firing; a new firing needs evidence past it.
        std::optional<Timestamp> last_evidence;
        Seconds suppress_window{0};
        std::optional<std::int64_t> fired_day;
        DailyCounter daily;
    };

    struct Candidate {
        std::string subject;
        std::vector<std::string> event_ids;
        Timestamp first_at;
        double observed;
        double threshold;
    };

    std::optional<Candidate> check(const Policy& p, const ActivityEvent& e, const UserRecord& user,
                                   const LabelSet& labels);
    std::optional<Candidate> check_window(const Policy& p, const ActivityEvent& e, const std::string& subject,
                                          double value, const std::string& key, double threshold, bool distinct,
                                          bool sum_values);
    SubjectState& state(const Policy& p, const std::string& subject);
    bool suppressed(const Policy& p, SubjectState& st, Timestamp now) const;

    std::vector<Policy> policies_;
    PolicyAux aux_;
    DeviceRegistry devices_;
    PolicyEngineOptions opts_;
    std::unordered_map<std::string, SubjectState> states_;
    std::unordered_map<std::string, std::set<std::string>> user_devices_;
    std::unordered_map<std::string, std::int64_t> first_seen_day_;
    ShadowRegistry registry_;
    std::uint64_t next_violation_ = 1;
};

}  // namespace irm
