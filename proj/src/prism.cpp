#include "irm/prism.hpp"

#include "irm/error.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace irm {

namespace {

std::int64_t parse_clock(const std::string& hhmm) {
    int h = 0, m = 0;
    if (std::sscanf(hhmm.c_str(), "%d:%d", &h, &m) != 2 || h < 0 || h > 24 || m < 0 || m > 59) {
        throw Error(ErrorCode::ConfigError, "bad clock value: " + hhmm);
    }
    return h * 3600 + m * 60;
}

std::string format_clock(std::int64_t s) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(s / 3600), static_cast<int>((s % 3600) / 60));
    return buf;
}

}  // namespace

std::string_view to_string(RiskBand b) {
    switch (b) {
        case RiskBand::Low: return "Low";
        case RiskBand::Moderate: return "Moderate";
        case RiskBand::High: return "High";
    }
    return "Low";
}

std::string_view to_string(ScorerKind s) {
    switch (s) {
        case ScorerKind::PRISM: return "PRISM";
        case ScorerKind::AIRS: return "AIRS";
        case ScorerKind::BLENDED: return "BLENDED";
    }
    return "PRISM";
}

PrismConfig PrismConfig::defaults() {
    PrismConfig cfg;
    auto set = [&](Activity a, double p) { cfg.activity_points[static_cast<std::size_t>(a)] = p; };
    set(Activity::FileUpload, 1);
    set(Activity::FileCreate, 2);
    set(Activity::AttachmentShare, 3);
    set(Activity::AttachmentEdit, 3);
    set(Activity::FileRename, 4);
    set(Activity::FileMove, 4);
    set(Activity::FileShareExternal, 7);
    set(Activity::FileDelete, 8);
    return cfg;
}

void PrismConfig::validate() const {
    if (!(r_max > r_min)) throw Error(ErrorCode::ConfigError, "R_max must exceed R_min");
    if (!(0.0 < band_moderate && band_moderate < band_high && band_high <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "band boundaries must satisfy 0 < moderate < high <= 1");
    }
    for (double m : privilege_multipliers) {
        if (!(m > 0)) throw Error(ErrorCode::ConfigError, "privilege multipliers must be positive");
    }
    for (double w : {weights.privilege, weights.activity, weights.context, weights.ip, weights.hours, weights.device,
                     weights.cumulative}) {
        if (w < 0) throw Error(ErrorCode::ConfigError, "weights must be non-negative");
    }
    for (double p : activity_points) {
        if (p < 0) throw Error(ErrorCode::ConfigError, "activity points must be non-negative");
    }
    for (double p : app_context_points) {
        if (p < 0) throw Error(ErrorCode::ConfigError, "context points must be non-negative");
    }
    if (business_end_s <= business_start_s) throw Error(ErrorCode::ConfigError, "business hours are empty");
    if (cumulative.window.count() <= 0) throw Error(ErrorCode::ConfigError, "cumulative window must be > 0");
}

PrismConfig PrismConfig::from_json_text(const std::string& text) {
    PrismConfig cfg = defaults();
    try {
        auto doc = nlohmann::json::parse(text);
        if (doc.contains("weights")) {
            const auto& w = doc.at("weights");
            cfg.weights.privilege = w.value("W_P", cfg.weights.privilege);
            cfg.weights.activity = w.value("W_A", cfg.weights.activity);
            cfg.weights.context = w.value("W_C", cfg.weights.context);
            cfg.weights.ip = w.value("W_IP", cfg.weights.ip);
            cfg.weights.hours = w.value("W_B", cfg.weights.hours);
            cfg.weights.device = w.value("W_D", cfg.weights.device);
            cfg.weights.cumulative = w.value("W_CA", cfg.weights.cumulative);
        }
        if (doc.contains("activity_points")) {
            for (auto& [name, pts] : doc.at("activity_points").items()) {
                auto a = parse_activity(name);
                if (!a) throw Error(ErrorCode::ConfigError, "unknown activity: " + name);
                cfg.activity_points[static_cast<std::size_t>(*a)] = pts.get<double>();
            }
        }
        if (doc.contains("app_context_points")) {
            for (auto& [name, pts] : doc.at("app_context_points").items()) {
                auto a = parse_app_context(name);
                if (!a) throw Error(ErrorCode::ConfigError, "unknown app context: " + name);
                cfg.app_context_points[static_cast<std::size_t>(*a)] = pts.get<double>();
            }
        }
        cfg.ip_unknown_points = doc.value("ip_unknown_points", cfg.ip_unknown_points);
        cfg.off_hours_points = doc.value("off_hours_points", cfg.off_hours_points);
        cfg.device_points = doc.value("device_points", cfg.device_points);
        if (doc.contains("privilege_multipliers")) {
            for (auto& [name, m] : doc.at("privilege_multipliers").items()) {
                auto p = parse_privilege(name);
                if (!p) throw Error(ErrorCode::ConfigError, "unknown privilege: " + name);
                cfg.privilege_multipliers[static_cast<std::size_t>(*p)] = m.get<double>();
            }
        }
        if (doc.contains("business_hours")) {
            auto bh = doc.at("business_hours").get<std::vector<std::string>>();
            if (bh.size() != 2) throw Error(ErrorCode::ConfigError, "business_hours needs [start, end]");
            cfg.business_start_s = parse_clock(bh[0]);
            cfg.business_end_s = parse_clock(bh[1]);
        }
        cfg.tz.utc_offset = std::chrono::minutes{doc.value("utc_offset_minutes", 0)};
        cfg.r_min = doc.value("R_min", cfg.r_min);
        cfg.r_max = doc.value("R_max", cfg.r_max);
        if (doc.contains("bands")) {
            cfg.band_moderate = doc.at("bands").value("moderate", cfg.band_moderate);
            cfg.band_high = doc.at("bands").value("high", cfg.band_high);
        }
        cfg.alert_threshold = doc.value("alert_threshold", cfg.alert_threshold);
        if (doc.contains("cumulative")) {
            const auto& c = doc.at("cumulative");
            if (c.contains("window")) {
                auto w = parse_duration(c.at("window").get<std::string>());
                if (!w) throw Error(ErrorCode::ConfigError, "bad cumulative window");
                cfg.cumulative.window = *w;
            }
            cfg.cumulative.free_actions = c.value("free_actions", cfg.cumulative.free_actions);
            cfg.cumulative.per_action_points = c.value("per_action_points", cfg.cumulative.per_action_points);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("prism config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

PrismConfig PrismConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string PrismConfig::to_json_text() const {
    nlohmann::ordered_json doc;
    doc["weights"] = {{"W_P", weights.privilege}, {"W_A", weights.activity}, {"W_C", weights.context},
                      {"W_IP", weights.ip},       {"W_B", weights.hours},    {"W_D", weights.device},
                      {"W_CA", weights.cumulative}};
    nlohmann::ordered_json act = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < kActivityCount; ++i) {
        act[std::string(to_string(static_cast<Activity>(i)))] = activity_points[i];
    }
    doc["activity_points"] = act;
    nlohmann::ordered_json app = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < kAppContextCount; ++i) {
        app[std::string(to_string(static_cast<AppContext>(i)))] = app_context_points[i];
    }
    doc["app_context_points"] = app;
    doc["ip_unknown_points"] = ip_unknown_points;
    doc["off_hours_points"] = off_hours_points;
    doc["device_points"] = device_points;
    doc["privilege_multipliers"] = {{"High", privilege_multipliers[0]},
                                    {"Moderate", privilege_multipliers[1]},
                                    {"Low", privilege_multipliers[2]},
                                    {"Guest", privilege_multipliers[3]}};
    doc["business_hours"] = {format_clock(business_start_s), format_clock(business_end_s)};
    doc["utc_offset_minutes"] = tz.utc_offset.count();
    doc["R_min"] = r_min;
    doc["R_max"] = r_max;
    doc["bands"] = {{"moderate", band_moderate}, {"high", band_high}};
    doc["alert_threshold"] = alert_threshold;
    doc["cumulative"] = {{"window", std::to_string(cumulative.window.count()) + "s"},
                         {"free_actions", cumulative.free_actions},
                         {"per_action_points", cumulative.per_action_points}};
    return doc.dump(2);
}

double activity_points(const ActivityEvent& event, const PrismConfig& cfg) {
    return cfg.activity_points[static_cast<std::size_t>(event.activity)];
}

double context_points(const ActivityEvent& event, const PrismConfig& cfg) {
    return cfg.app_context_points[static_cast<std::size_t>(event.app_context)];
}

double ip_points(const ActivityEvent& event, const IpReputation& rep, const PrismConfig& cfg) {
    if (!event.ip_address) return 0.0;
    const auto& ip = *event.ip_address;
    if (rep.blacklist.contains(ip)) return cfg.ip_unknown_points;
    if (rep.trusted.contains(ip)) return 0.0;
    return cfg.ip_unknown_points;
}

double hours_points(const ActivityEvent& event, const PrismConfig& cfg) {
    const auto sod = local_seconds_of_day(event.timestamp, cfg.tz);
    const bool in_hours = sod >= cfg.business_start_s && sod < cfg.business_end_s;
    return in_hours ? 0.0 : cfg.off_hours_points;
}

double device_points(const ActivityEvent& event, const PrismConfig& cfg) {
    switch (event.device_trust) {
        case DeviceTrust::ManagedCompliant:
            return 0.0;
        case DeviceTrust::ManagedNonCompliant:
            return cfg.device_points;
        case DeviceTrust::Unmanaged:
            return event.extra(extra_key::kDeviceNonCompliant) == "true" ? 2 * cfg.device_points : cfg.device_points;
        case DeviceTrust::Unknown:
            return cfg.device_points;
    }
    return 0.0;
}

double cumulative_points(std::size_t actions_in_window, const PrismConfig& cfg) {
    if (actions_in_window <= cfg.cumulative.free_actions) return 0.0;
    return static_cast<double>(actions_in_window - cfg.cumulative.free_actions) * cfg.cumulative.per_action_points;
}

double normalize(double raw, const PrismConfig& cfg) {
    return std::clamp((raw - cfg.r_min) / (cfg.r_max - cfg.r_min), 0.0, 1.0);
}

RiskBand band_for(double normalized, const PrismConfig& cfg) {
    if (normalized >= cfg.band_high) return RiskBand::High;
    if (normalized >= cfg.band_moderate) return RiskBand::Moderate;
    return RiskBand::Low;
}

double recompute_raw(const FactorBreakdown& b, const PrismConfig& cfg) {
    const auto& w = cfg.weights;
    const double base = w.activity * b.activity + w.context * b.context + w.ip * b.ip + w.hours * b.hours +
                        w.device * b.device + w.cumulative * b.cumulative;
    return base * b.privilege_multiplier;
}

RiskScore score_session(const Session& session, const UserRecord& user, const PrismConfig& cfg,
                        const IpReputation& rep, std::size_t actions_in_window) {
    if (session.events.empty()) throw Error(ErrorCode::EmptySession, "session " + session.session_id + " is empty");

    FactorBreakdown b;
    b.per_event.reserve(session.events.size());
    for (const auto& e : session.events) {
        const double pts = activity_points(e, cfg);
        b.activity += pts;
        b.per_event.push_back({e.event_id, pts});
        b.context = std::max(b.context, context_points(e, cfg));
        b.ip = std::max(b.ip, ip_points(e, rep, cfg));
        b.hours = std::max(b.hours, hours_points(e, cfg));
        b.device = std::max(b.device, device_points(e, cfg));
    }
    b.cumulative = cumulative_points(actions_in_window, cfg);
    b.privilege_multiplier = cfg.multiplier(user.privilege);

    RiskScore score;
    score.raw = recompute_raw(b, cfg);
    score.normalized = normalize(score.raw, cfg);
    score.band = band_for(score.normalized, cfg);
    score.scorer = ScorerKind::PRISM;
    score.breakdown = std::move(b);
    score.subject = session.session_id;
    score.user_id = session.user_id;
    return score;
}

}  // namespace irm
