#include "irm/policy.hpp"

#include "irm/error.hpp"
#include "json.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace irm {

namespace {

constexpr std::array<std::string_view, 7> kCategoryNames{"UserRisk", "DataMovement",      "AttackPath",
                                                         "ActivityRisk", "DataRisk", "DataCollaboration",
                                                         "BehaviorAnomaly"};
constexpr std::array<std::string_view, 4> kSeverityNames{"LowSev", "Medium", "High", "Critical"};
constexpr std::array<std::string_view, 5> kActionNames{"AlertOnly", "RevokePrivilege", "RestrictFileAccess",
                                                       "FlagUser", "DisconnectDevice"};
constexpr std::array<std::string_view, 17> kTriggerNames{
    "CountInWindow",      "GeoDistanceInWindow", "PrivilegeEscalation",   "UntrustedDevice",
    "BytesInWindow",      "ExternalShare",       "SensitiveAccess",       "MassDeletion",
    "StorageLocation",    "PublicLink",          "BaselineDeviation",     "ExcessivePrivilegeSpread",
    "OutdatedSoftware",   "HighRiskAccessSpread", "LocationNotApproved", "UnapprovedSync",
    "UnencryptedTransfer"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    return std::nullopt;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Line number (1-based) of the opening brace of every element of the
// top-level JSON array.
std::vector<std::size_t> element_lines(const std::string& text) {
    std::vector<std::size_t> lines;
    std::size_t line = 1;
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (char c : text) {
        if (c == '\n') ++line;
        if (in_string) {
            if (escape) escape = false;
            else if (c == '\\') escape = true;
            else if (c == '"') in_string = false;
            continue;
        }
        switch (c) {
            case '"': in_string = true; break;
            case '[':
            case '{':
                if (depth == 1) lines.push_back(line);
                ++depth;
                break;
            case ']':
            case '}': --depth; break;
            default: break;
        }
    }
    return lines;
}

bool is_windowed(TriggerKind k) {
    switch (k) {
        case TriggerKind::CountInWindow:
        case TriggerKind::BytesInWindow:
        case TriggerKind::MassDeletion:
        case TriggerKind::GeoDistanceInWindow:
        case TriggerKind::HighRiskAccessSpread:
            return true;
        default:
            return false;
    }
}

TriggerParams parse_params(const nlohmann::json& p) {
    TriggerParams out;
    if (p.contains("window")) {
        auto w = parse_duration(p.at("window").get<std::string>());
        if (!w) throw std::invalid_argument("bad window duration");
        if (w->count() <= 0) throw std::invalid_argument("window must be > 0");
        out.window = *w;
    }
    out.threshold = p.value("threshold", std::size_t{0});
    out.bytes_threshold = p.value("bytes_threshold", std::uint64_t{0});
    out.distance_km = p.value("distance_km", 0.0);
    out.z_limit = p.value("z_limit", 3.0);
    out.floor = p.value("floor", 10.0);
    out.require_sensitive = p.value("require_sensitive", false);
    out.distinct_devices = p.value("distinct_devices", false);
    out.min_systems = p.value("min_systems", std::size_t{0});
    for (const auto& a : p.value("activities", std::vector<std::string>{})) {
        auto act = parse_activity(a);
        if (!act) throw std::invalid_argument("unknown activity " + a);
        out.activities.push_back(*act);
    }
    for (const auto& a : p.value("apps", std::vector<std::string>{})) {
        auto app = parse_app_context(a);
        if (!app) throw std::invalid_argument("unknown app " + a);
        out.apps.push_back(*app);
    }
    for (const auto& c : p.value("categories", std::vector<std::string>{})) {
        auto cat = parse_data_category(c);
        if (!cat) throw std::invalid_argument("unknown category " + c);
        out.categories.push_back(*cat);
    }
    const auto check = p.value("device_check", std::string{"unmanaged"});
    if (check == "unassociated") out.device_check = DeviceCheck::Unassociated;
    else if (check == "unmanaged") out.device_check = DeviceCheck::Unmanaged;
    else if (check == "noncompliant") out.device_check = DeviceCheck::NonCompliant;
    else throw std::invalid_argument("unknown device_check " + check);
    return out;
}

void validate_trigger(const TriggerSpec& t) {
    const auto& p = t.params;
    if (is_windowed(t.kind) && p.window.count() <= 0) throw std::invalid_argument("window required and must be > 0");
    switch (t.kind) {
        case TriggerKind::CountInWindow:
        case TriggerKind::MassDeletion:
        case TriggerKind::HighRiskAccessSpread:
            if (p.threshold == 0) throw std::invalid_argument("threshold must be > 0");
            break;
        case TriggerKind::BytesInWindow:
            if (p.threshold == 0 && p.bytes_threshold == 0) {
                throw std::invalid_argument("threshold or bytes_threshold must be > 0");
            }
            break;
        case TriggerKind::GeoDistanceInWindow:
            if (!(p.distance_km > 0)) throw std::invalid_argument("distance_km must be > 0");
            break;
        case TriggerKind::BaselineDeviation:
            if (!(p.z_limit > 0) || p.floor < 0) throw std::invalid_argument("z_limit must be > 0, floor >= 0");
            break;
        case TriggerKind::ExcessivePrivilegeSpread:
            if (p.min_systems == 0) throw std::invalid_argument("min_systems must be > 0");
            break;
        default:
            break;
    }
}

Policy parse_policy(const nlohmann::json& j) {
    Policy p;
    p.policy_id = j.at("policy_id").get<std::string>();
    if (p.policy_id.empty()) throw std::invalid_argument("policy_id is empty");
    p.name = j.value("name", p.policy_id);
    auto cat = parse_policy_category(j.at("category").get<std::string>());
    if (!cat) throw std::invalid_argument("unknown category");
    p.category = *cat;
    auto sev = parse_severity(j.value("severity", std::string{"Medium"}));
    if (!sev) throw std::invalid_argument("unknown severity");
    p.severity = *sev;
    auto act = parse_action_kind(j.value("action", std::string{"AlertOnly"}));
    if (!act) throw std::invalid_argument("unknown action");
    p.action = *act;
    p.enabled = j.value("enabled", true);
    const auto& trig = j.at("trigger");
    auto kind = parse_trigger_kind(trig.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown trigger kind");
    p.trigger.kind = *kind;
    p.trigger.params = parse_params(trig.value("params", nlohmann::json::object()));
    validate_trigger(p.trigger);
    return p;
}

template <typename T>
bool contains(const std::vector<T>& v, const T& x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

bool matches_filters(const TriggerParams& p, const ActivityEvent& e) {
    if (!p.activities.empty() && !contains(p.activities, e.activity)) return false;
    if (!p.apps.empty() && !contains(p.apps, e.app_context)) return false;
    return true;
}

bool has_category(const LabelSet& labels, const std::vector<DataCategory>& cats) {
    if (cats.empty()) return !labels.empty();
    return std::any_of(labels.begin(), labels.end(), [&](const auto& l) { return contains(cats, l.category); });
}

std::string file_path_of(const ActivityEvent& e) {
    if (auto p = e.extra(extra_key::kPath); !p.empty()) return std::string(p);
    auto name = e.extra(extra_key::kFilename);
    auto slash = name.find_last_of("/\\");
    return slash == std::string_view::npos ? std::string{} : std::string(name.substr(0, slash + 1));
}

std::string domain_of(std::string_view recipient) {
    auto at = recipient.rfind('@');
    return lower(at == std::string_view::npos ? recipient : recipient.substr(at + 1));
}

struct Centroid {
    const char* code;
    double lat;
    double lon;
};

constexpr Centroid kCentroids[] = {
    {"US", 39.8, -98.6},  {"CA", 56.1, -106.3}, {"MX", 23.6, -102.6}, {"BR", -14.2, -51.9}, {"AR", -38.4, -63.6},
    {"GB", 55.4, -3.4},   {"IE", 53.4, -8.2},   {"FR", 46.2, 2.2},    {"DE", 51.2, 10.5},   {"ES", 40.5, -3.7},
    {"IT", 41.9, 12.6},   {"NL", 52.1, 5.3},    {"BE", 50.5, 4.5},    {"CH", 46.8, 8.2},    {"SE", 60.1, 18.6},
    {"NO", 60.5, 8.5},    {"PL", 51.9, 19.1},   {"RU", 61.5, 105.3},  {"UA", 48.4, 31.2},   {"TR", 38.9, 35.2},
    {"IL", 31.0, 34.9},   {"AE", 23.4, 53.8},   {"SA", 23.9, 45.1},   {"EG", 26.8, 30.8},   {"ZA", -30.6, 22.9},
    {"NG", 9.1, 8.7},     {"KE", -0.02, 37.9},  {"IN", 20.6, 79.0},   {"PK", 30.4, 69.3},   {"CN", 35.9, 104.2},
    {"JP", 36.2, 138.3},  {"KR", 35.9, 127.8},  {"SG", 1.35, 103.8},  {"ID", -0.8, 113.9},  {"AU", -25.3, 133.8},
    {"NZ", -40.9, 174.9}, {"PH", 12.9, 121.8},  {"VN", 14.1, 108.3},  {"TH", 15.9, 100.99}, {"CO", 4.6, -74.3},
};

const Centroid* centroid(const std::string& code) {
    for (const auto& c : kCentroids) {
        if (code == c.code) return &c;
    }
    return nullptr;
}

}  // namespace

std::string_view to_string(PolicyCategory v) { return kCategoryNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(Severity v) { return kSeverityNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(ActionKind v) { return kActionNames[static_cast<std::size_t>(v)]; }
std::string_view to_string(TriggerKind v) { return kTriggerNames[static_cast<std::size_t>(v)]; }
std::optional<PolicyCategory> parse_policy_category(std::string_view s) {
    return lookup<PolicyCategory>(kCategoryNames, s);
}
std::optional<Severity> parse_severity(std::string_view s) { return lookup<Severity>(kSeverityNames, s); }
std::optional<ActionKind> parse_action_kind(std::string_view s) { return lookup<ActionKind>(kActionNames, s); }
std::optional<TriggerKind> parse_trigger_kind(std::string_view s) { return lookup<TriggerKind>(kTriggerNames, s); }

PolicyAux PolicyAux::from_json_text(const std::string& text) {
    PolicyAux aux;
    try {
        auto doc = nlohmann::json::parse(text);
        using Strings = std::vector<std::string>;
        aux.org_domains = doc.value("org_domains", Strings{});
        for (auto& d : aux.org_domains) d = lower(d);
        aux.domain_allowlist = doc.value("domain_allowlist", Strings{});
        for (auto& d : aux.domain_allowlist) d = lower(d);
        aux.approved_regions = doc.value("approved_regions", Strings{});
        aux.approved_sync_targets = doc.value("approved_sync_targets", Strings{});
        aux.approved_paths = doc.value("approved_paths", Strings{});
        for (const auto& u : doc.value("sensitive_acl", Strings{})) aux.sensitive_acl.insert(u);
        if (doc.contains("privileged_roles")) {
            aux.privileged_roles = doc.at("privileged_roles").get<std::map<std::string, Strings>>();
        }
        aux.min_software_version = doc.value("min_software_version", std::string{});
        aux.high_risk_resources = doc.value("high_risk_resources", Strings{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("policy aux config: ") + e.what());
    }
    return aux;
}

PolicyAux PolicyAux::load(const std::filesystem::path& path) { return from_json_text(read_file(path)); }

PolicyConfigError::PolicyConfigError(std::vector<PolicyDiagnostic> diags, std::vector<Policy> valid)
    : Error(ErrorCode::PolicyConfigError,
            [&] {
                std::string msg = "policy config rejected " + std::to_string(diags.size()) + " entr" +
                                  (diags.size() == 1 ? "y" : "ies");
                for (const auto& d : diags) {
                    msg += "; entry " + std::to_string(d.index) + " (line " + std::to_string(d.line) +
                           (d.policy_id.empty() ? "" : ", " + d.policy_id) + "): " + d.message;
                }
                return msg;
            }()),
      diags_(std::move(diags)),
      valid_(std::move(valid)) {}

std::vector<Policy> load_policies_lenient(const std::string& json_text, std::vector<PolicyDiagnostic>& diags) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        diags.push_back({0, 0, "", std::string("document does not parse: ") + e.what()});
        return {};
    }
    if (doc.is_object() && doc.contains("policies")) doc = doc.at("policies");
    if (!doc.is_array()) {
        diags.push_back({0, 1, "", "expected an array of policies"});
        return {};
    }
    const auto lines = element_lines(json_text);
    std::vector<Policy> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::size_t line = i < lines.size() ? lines[i] : 0;
        std::string id;
        try {
            if (doc[i].is_object()) id = doc[i].value("policy_id", std::string{});
            Policy p = parse_policy(doc[i]);
            if (!seen.insert(p.policy_id).second) throw std::invalid_argument("duplicate policy_id");
            out.push_back(std::move(p));
        } catch (const std::exception& e) {
            diags.push_back({i, line, id, e.what()});
        }
    }
    return out;
}

std::vector<Policy> load_policies(const std::string& json_text) {
    std::vector<PolicyDiagnostic> diags;
    auto policies = load_policies_lenient(json_text, diags);
    if (!diags.empty()) throw PolicyConfigError(std::move(diags), std::move(policies));
    return policies;
}

std::vector<Policy> load_policies_file(const std::filesystem::path& path) { return load_policies(read_file(path)); }

std::vector<Policy> default_policies() { return load_policies(default_policies_json()); }

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kEarthRadiusKm = 6371.0;
    const double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

std::optional<double> region_distance_km(const std::string& a, const std::string& b) {
    const auto* ca = centroid(a);
    const auto* cb = centroid(b);
    if (!ca || !cb) return std::nullopt;
    return haversine_km(ca->lat, ca->lon, cb->lat, cb->lon);
}

int compare_versions(std::string_view a, std::string_view b) {
    auto next = [](std::string_view& s) -> long {
        long v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{}) v = 0;
        s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
        if (!s.empty() && s.front() == '.') s.remove_prefix(1);
        else if (ptr == s.data()) s = {};
        return v;
    };
    while (!a.empty() || !b.empty()) {
        const long x = a.empty() ? 0 : next(a);
        const long y = b.empty() ? 0 : next(b);
        if (x != y) return x < y ? -1 : 1;
    }
    return 0;
}

bool baseline_exceeded(double today_count, const Baseline& baseline, double z_limit, double floor) {
    if (baseline.cold()) return false;
    if (today_count < floor) return false;
    return today_count > baseline.mean + z_limit * baseline.stddev;
}

void DailyCounter::add(std::int64_t day, double amount) {
    days_[day] += amount;
    // Only the trailing window (plus today) is ever read.
    while (!days_.empty() && days_.begin()->first < day - static_cast<std::int64_t>(Baseline::kWindowDays) - 1) {
        days_.erase(days_.begin());
    }
}

double DailyCounter::count_on(std::int64_t day) const {
    auto it = days_.find(day);
    return it == days_.end() ? 0.0 : it->second;
}

Baseline DailyCounter::baseline(const std::string& user, std::int64_t first_day, std::int64_t today) const {
    Baseline b;
    b.user_id = user;
    const std::int64_t start = std::max(first_day, today - static_cast<std::int64_t>(Baseline::kWindowDays));
    if (start >= today) return b;
    b.samples = static_cast<std::size_t>(today - start);
    double sum = 0.0;
    for (std::int64_t d = start; d < today; ++d) sum += count_on(d);
    b.mean = sum / static_cast<double>(b.samples);
    double sq = 0.0;
    for (std::int64_t d = start; d < today; ++d) {
        const double diff = count_on(d) - b.mean;
        sq += diff * diff;
    }
    b.stddev = std::sqrt(sq / static_cast<double>(b.samples));
    return b;
}

ActionRecord apply_action(const PolicyViolation& violation, ActionKind action, ShadowRegistry& registry) {
    if (!registry.applied_violations.insert(violation.violation_id).second) {
        throw Error(ErrorCode::DuplicateAction, "action already applied for " + violation.violation_id);
    }
    ActionRecord rec;
    rec.action = action;
    rec.executed_at = violation.fired_at;
    rec.simulated = true;
    rec.target = violation.user_id;
    switch (action) {
        case ActionKind::AlertOnly: break;
        case ActionKind::RevokePrivilege: registry.revoked_users.insert(violation.user_id); break;
        case ActionKind::RestrictFileAccess: registry.restricted_users.insert(violation.user_id); break;
        case ActionKind::FlagUser: registry.flagged_users.insert(violation.user_id); break;
        case ActionKind::DisconnectDevice:
            rec.target = violation.subject;
            registry.disconnected_devices.insert(violation.subject);
            break;
    }
    rec.operator_note = std::string(to_string(action)) + " recorded for " + violation.policy_name +
                        " (simulated; no external system changed)";
    return rec;
}

PolicyEngine::PolicyEngine(std::vector<Policy> policies, PolicyAux aux, DeviceRegistry devices,
                           PolicyEngineOptions opts)
    : policies_(std::move(policies)), aux_(std::move(aux)), devices_(std::move(devices)), opts_(opts) {
    for (const auto& [id, dev] : devices_.entries()) {
        if (!dev.owner.empty()) user_devices_[dev.owner].insert(id);
    }
}

const Policy* PolicyEngine::find(const std::string& policy_id) const {
    for (const auto& p : policies_) {
        if (p.policy_id == policy_id) return &p;
    }
    return nullptr;
}

PolicyEngine::SubjectState& PolicyEngine::state(const Policy& p, const std::string& subject) {
    return states_[p.policy_id + '\x1f' + subject];
}

bool PolicyEngine::suppressed(const Policy&, SubjectState& st, Timestamp now) const {
    return st.last_evidence && now - st.suppress_window <= *st.last_evidence;
}

std::optional<PolicyEngine::Candidate> PolicyEngine::check_window(const Policy& p, const ActivityEvent& e,
                                                                  const std::string& subject, double value,
                                                                  const std::string& key, double threshold,
                                                                  bool distinct, bool sum_values) {
    auto& st = state(p, subject);
    const auto w = p.trigger.params.window;
    st.window.push_back({e.timestamp, e.event_id, value, key});
    while (!st.window.empty() && st.window.front().ts < e.timestamp - w) st.window.pop_front();

    double measure = 0.0;
    if (distinct) {
        std::set<std::string> keys;
        for (const auto& entry : st.window) keys.insert(entry.key);
        measure = static_cast<double>(keys.size());
    } else if (sum_values) {
        for (const auto& entry : st.window) measure += entry.value;
    } else {
        measure = static_cast<double>(st.window.size());
    }
    if (measure < threshold || suppressed(p, st, e.timestamp)) return std::nullopt;

    Candidate c;
    c.subject = subject;
    for (const auto& entry : st.window) c.event_ids.push_back(entry.event_id);
    c.first_at = st.window.front().ts;
    c.observed = measure;
    c.threshold = threshold;
    st.last_evidence = e.timestamp;
    st.suppress_window = w;
    return c;
}

std::optional<PolicyEngine::Candidate> PolicyEngine::check(const Policy& p, const ActivityEvent& e,
                                                           const UserRecord& user, const LabelSet& labels) {
    const auto& prm = p.trigger.params;
    const std::string& uid = e.user_id;

    // Single-event triggers share the suppression rule.
    auto instant = [&](const std::string& subject, double observed = 1.0,
                       double threshold = 1.0) -> std::optional<Candidate> {
        auto& st = state(p, subject);
        if (suppressed(p, st, e.timestamp)) return std::nullopt;
        st.last_evidence = e.timestamp;
        st.suppress_window = prm.window.count() > 0 ? prm.window : opts_.default_suppression;
        return Candidate{subject, {e.event_id}, e.timestamp, observed, threshold};
    };

    switch (p.trigger.kind) {
        case TriggerKind::CountInWindow: {
            if (!matches_filters(prm, e)) return std::nullopt;
            return check_window(p, e, uid, 1.0, prm.distinct_devices ? e.device_id : std::string{},
                                static_cast<double>(prm.threshold), prm.distinct_devices, false);
        }
        case TriggerKind::MassDeletion: {
            const bool is_delete = prm.activities.empty() ? e.activity == Activity::FileDelete
                                                          : contains(prm.activities, e.activity);
            if (!is_delete || (!prm.apps.empty() && !contains(prm.apps, e.app_context))) return std::nullopt;
            return check_window(p, e, uid, 1.0, {}, static_cast<double>(prm.threshold), false, false);
        }
        case TriggerKind::BytesInWindow: {
            if (!matches_filters(prm, e)) return std::nullopt;
            double bytes = 0.0;
            if (auto b = e.extra(extra_key::kBytes); !b.empty()) {
                std::uint64_t v = 0;
                std::from_chars(b.data(), b.data() + b.size(), v);
                bytes = static_cast<double>(v);
            }
            auto& st = state(p, uid);
            st.window.push_back({e.timestamp, e.event_id, bytes, {}});
            while (!st.window.empty() && st.window.front().ts < e.timestamp - prm.window) st.window.pop_front();
            double total = 0.0;
            for (const auto& entry : st.window) total += entry.value;
            const double count = static_cast<double>(st.window.size());
            const bool by_count = prm.threshold > 0 && count >= static_cast<double>(prm.threshold);
            const bool by_bytes = prm.bytes_threshold > 0 && total >= static_cast<double>(prm.bytes_threshold);
            if (!(by_count || by_bytes) || suppressed(p, st, e.timestamp)) return std::nullopt;
            Candidate c;
            c.subject = uid;
            for (const auto& entry : st.window) c.event_ids.push_back(entry.event_id);
            c.first_at = st.window.front().ts;
            c.observed = by_bytes ? total : count;
            c.threshold = by_bytes ? static_cast<double>(prm.bytes_threshold) : static_cast<double>(prm.threshold);
            st.last_evidence = e.timestamp;
            st.suppress_window = prm.window;
            return c;
        }
        case TriggerKind::GeoDistanceInWindow: {
            if (e.activity != Activity::Login || !e.geo_region) return std::nullopt;
            auto& st = state(p, uid);
            while (!st.window.empty() && st.window.front().ts < e.timestamp - prm.window) st.window.pop_front();
            const WindowEntry* far = nullptr;
            double best = 0.0;
            for (const auto& entry : st.window) {
                if (entry.key == *e.geo_region) continue;
                auto d = region_distance_km(entry.key, *e.geo_region);
                if (d && *d > best) {
                    best = *d;
                    far = &entry;
                }
            }
            std::optional<Candidate> c;
            if (far && best >= prm.distance_km && !suppressed(p, st, e.timestamp)) {
                c = Candidate{uid, {far->event_id, e.event_id}, far->ts, best, prm.distance_km};
                st.last_evidence = e.timestamp;
                st.suppress_window = prm.window;
            }
            st.window.push_back({e.timestamp, e.event_id, 0.0, *e.geo_region});
            return c;
        }
        case TriggerKind::LocationNotApproved: {
            if (e.activity != Activity::Login || !e.geo_region || aux_.approved_regions.empty()) return std::nullopt;
            if (contains(aux_.approved_regions, *e.geo_region)) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::PrivilegeEscalation: {
            if (e.extra(extra_key::kPrivilegeGrant).empty() || e.extra(extra_key::kAuthorized) == "true") {
                return std::nullopt;
            }
            return instant(uid);
        }
        case TriggerKind::UntrustedDevice: {
            if (!prm.activities.empty() || !prm.apps.empty()) {
                if (!matches_filters(prm, e)) return std::nullopt;
            }
            switch (prm.device_check) {
                case DeviceCheck::Unassociated: {
                    if (e.activity != Activity::Login) return std::nullopt;
                    auto& known = user_devices_[uid];
                    const bool fires = !known.empty() && !known.count(e.device_id);
                    known.insert(e.device_id);
                    if (!fires) return std::nullopt;
                    return instant(uid);
                }
                case DeviceCheck::Unmanaged: {
                    if (prm.activities.empty() && e.activity != Activity::Login) return std::nullopt;
                    if (e.device_trust != DeviceTrust::Unmanaged && e.device_trust != DeviceTrust::Unknown) {
                        return std::nullopt;
                    }
                    return instant(uid);
                }
                case DeviceCheck::NonCompliant: {
                    const bool nc = e.device_trust == DeviceTrust::ManagedNonCompliant ||
                                    e.extra(extra_key::kDeviceNonCompliant) == "true";
                    if (!nc) return std::nullopt;
                    return instant(uid);
                }
            }
            return std::nullopt;
        }
        case TriggerKind::ExternalShare: {
            const bool act_ok = prm.activities.empty() ? e.activity == Activity::FileShareExternal
                                                       : contains(prm.activities, e.activity);
            if (!act_ok || (!prm.apps.empty() && !contains(prm.apps, e.app_context))) return std::nullopt;
            const auto recipient = e.extra(extra_key::kRecipient);
            if (recipient.empty()) return std::nullopt;
            const auto domain = domain_of(recipient);
            if (contains(aux_.org_domains, domain) || contains(aux_.domain_allowlist, domain)) return std::nullopt;
            if (prm.require_sensitive && !has_category(labels, prm.categories)) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::PublicLink: {
            const bool act_ok = prm.activities.empty() ? e.activity == Activity::FileShareExternal
                                                       : contains(prm.activities, e.activity);
            if (!act_ok || !e.extra(extra_key::kRecipient).empty()) return std::nullopt;
            if (prm.require_sensitive && !has_category(labels, prm.categories)) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::SensitiveAccess: {
            if (e.source != EventSource::File || !matches_filters(prm, e)) return std::nullopt;
            if (!has_category(labels, prm.categories) || aux_.sensitive_acl.count(uid)) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::StorageLocation: {
            if (e.source != EventSource::File || !matches_filters(prm, e) || labels.empty()) return std::nullopt;
            if (aux_.approved_paths.empty()) return std::nullopt;
            const auto path = file_path_of(e);
            const bool approved = std::any_of(aux_.approved_paths.begin(), aux_.approved_paths.end(),
                                              [&](const std::string& prefix) { return path.rfind(prefix, 0) == 0; });
            if (approved) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::UnapprovedSync: {
            const auto target = e.extra(extra_key::kSyncTarget);
            if (target.empty() || contains(aux_.approved_sync_targets, std::string(target))) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::UnencryptedTransfer: {
            if (e.extra(extra_key::kEncrypted) != "false") return std::nullopt;
            auto cats = prm.categories.empty() ? std::vector<DataCategory>{DataCategory::PII, DataCategory::PHI}
                                               : prm.categories;
            if (!has_category(labels, cats)) return std::nullopt;
            return instant(uid);
        }
        case TriggerKind::BaselineDeviation: {
            if (!matches_filters(prm, e)) return std::nullopt;
            auto& st = state(p, uid);
            const auto today = local_day_index(e.timestamp, opts_.tz);
            st.daily.add(today);
            const auto first = first_seen_day_.count(uid) ? first_seen_day_[uid] : today;
            const Baseline b = st.daily.baseline(uid, first, today);
            const double count = st.daily.count_on(today);
            if (!baseline_exceeded(count, b, prm.z_limit, prm.floor)) return std::nullopt;
            if (st.fired_day == today) return std::nullopt;
            st.fired_day = today;
            return Candidate{uid, {e.event_id}, e.timestamp, count, b.mean + prm.z_limit * b.stddev};
        }
        case TriggerKind::ExcessivePrivilegeSpread: {
            if (e.activity != Activity::Login) return std::nullopt;
            auto it = aux_.privileged_roles.find(uid);
            const std::size_t n = it == aux_.privileged_roles.end() ? 0 : it->second.size();
            if (n < prm.min_systems) return std::nullopt;
            return instant(uid, static_cast<double>(n), static_cast<double>(prm.min_systems));
        }
        case TriggerKind::OutdatedSoftware: {
            if (aux_.min_software_version.empty()) return std::nullopt;
            const auto* dev = devices_.find(e.device_id);
            if (!dev || dev->software_version.empty()) return std::nullopt;
            if (compare_versions(dev->software_version, aux_.min_software_version) >= 0) return std::nullopt;
            return instant(e.device_id);
        }
        case TriggerKind::HighRiskAccessSpread: {
            if (user.privilege != Privilege::High || e.source != EventSource::File) return std::nullopt;
            const auto name = std::string(e.extra(extra_key::kFilename));
            const auto path = file_path_of(e);
            const bool high_risk = std::any_of(aux_.high_risk_resources.begin(), aux_.high_risk_resources.end(),
                                               [&](const std::string& tag) {
                                                   return name.find(tag) != std::string::npos ||
                                                          path.find(tag) != std::string::npos;
                                               });
            if (!high_risk) return std::nullopt;
            return check_window(p, e, uid, 1.0, e.file_id.value_or(name), static_cast<double>(prm.threshold), true,
                                false);
        }
    }
    return std::nullopt;
}

std::vector<PolicyViolation> PolicyEngine::evaluate(const ActivityEvent& event, const UserRecord& user,
                                                    const LabelSet& file_labels) {
    first_seen_day_.try_emplace(event.user_id, local_day_index(event.timestamp, opts_.tz));
    std::vector<PolicyViolation> out;
    for (const auto& p : policies_) {
        if (!p.enabled) continue;
        auto c = check(p, event, user, file_labels);
        if (!c) continue;
        PolicyViolation v;
        char id[32];
        std::snprintf(id, sizeof id, "V-%08llu", static_cast<unsigned long long>(next_violation_++));
        v.violation_id = id;
        v.policy_id = p.policy_id;
        v.policy_name = p.name;
        v.category = p.category;
        v.severity = p.severity;
        v.subject = c->subject;
        v.user_id = event.user_id;
        v.triggering_event_ids = std::move(c->event_ids);
        v.first_event_at = c->first_at;
        v.observed = c->observed;
        v.threshold = c->threshold;
        v.fired_at = event.timestamp;
        v.action_taken = apply_action(v, p.action, registry_);
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace irm
