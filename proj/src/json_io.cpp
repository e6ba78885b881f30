#include "irm/json_io.hpp"

#include "irm/error.hpp"

namespace irm {

namespace {

Timestamp ts_from(const nlohmann::json& j) {
    if (j.is_number_integer()) return from_epoch(j.get<std::int64_t>());
    if (j.is_string()) {
        if (auto ts = parse_iso(j.get<std::string>())) return *ts;
        if (auto ts = parse_cert_time(j.get<std::string>())) return *ts;
    }
    throw Error(ErrorCode::BadTimestamp, "unreadable timestamp " + j.dump());
}

template <typename T>
void put_opt(Json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

}  // namespace

Json to_json(const ActivityEvent& e) {
    Json j;
    j["event_id"] = e.event_id;
    j["timestamp"] = format_iso(e.timestamp);
    j["user_id"] = e.user_id;
    j["device_id"] = e.device_id;
    j["source"] = to_string(e.source);
    j["activity"] = to_string(e.activity);
    j["app_context"] = to_string(e.app_context);
    put_opt(j, "ip_address", e.ip_address);
    put_opt(j, "geo_region", e.geo_region);
    j["device_trust"] = to_string(e.device_trust);
    put_opt(j, "file_id", e.file_id);
    if (!e.raw_extra.empty()) j["raw_extra"] = e.raw_extra;
    return j;
}

ActivityEvent event_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::MalformedRow, "event must be an object");
    ActivityEvent e;
    try {
        e.event_id = j.at("event_id").get<std::string>();
        e.user_id = j.at("user_id").get<std::string>();
        e.device_id = j.value("device_id", std::string{});
        if (e.event_id.empty() || e.user_id.empty()) throw Error(ErrorCode::MalformedRow, "empty event_id or user_id");
        e.timestamp = ts_from(j.at("timestamp"));
        const auto act = j.at("activity").get<std::string>();
        auto a = parse_activity(act);
        if (!a) throw Error(ErrorCode::UnknownActivity, "unknown activity " + act);
        e.activity = *a;
        e.source = source_of(*a);
        if (j.contains("source")) {
            auto s = parse_event_source(j.at("source").get<std::string>());
            if (!s || *s != e.source) throw Error(ErrorCode::UnknownActivity, act + " does not belong to that source");
        }
        if (j.contains("app_context")) {
            auto app = parse_app_context(j.at("app_context").get<std::string>());
            if (!app) throw Error(ErrorCode::MalformedRow, "unknown app_context");
            e.app_context = *app;
        }
        if (j.contains("device_trust")) {
            auto t = parse_device_trust(j.at("device_trust").get<std::string>());
            if (!t) throw Error(ErrorCode::MalformedRow, "unknown device_trust");
            e.device_trust = *t;
        }
        e.ip_address = opt_string(j, "ip_address");
        e.geo_region = opt_string(j, "geo_region");
        e.file_id = opt_string(j, "file_id");
        if (j.contains("raw_extra")) e.raw_extra = j.at("raw_extra").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::MalformedRow, std::string("event: ") + ex.what());
    }
    return e;
}

Json to_json(const FactorBreakdown& b) {
    Json j;
    j["S_A"] = b.activity;
    j["S_C"] = b.context;
    j["S_IP"] = b.ip;
    j["S_B"] = b.hours;
    j["S_D"] = b.device;
    j["S_CA"] = b.cumulative;
    j["privilege_multiplier"] = b.privilege_multiplier;
    auto per = Json::array();
    for (const auto& c : b.per_event) per.push_back({{"event_id", c.event_id}, {"points", c.points}});
    j["per_event"] = std::move(per);
    return j;
}

Json to_json(const RiskScore& s) {
    Json j;
    j["subject"] = s.subject;
    j["user_id"] = s.user_id;
    j["scorer"] = to_string(s.scorer);
    j["raw"] = s.raw;
    j["normalized"] = s.normalized;
    j["band"] = to_string(s.band);
    j["breakdown"] = to_json(s.breakdown);
    return j;
}

RiskScore risk_score_from_json(const nlohmann::json& j) {
    RiskScore s;
    s.subject = j.at("subject").get<std::string>();
    s.user_id = j.value("user_id", std::string{});
    const auto scorer = j.value("scorer", std::string{"PRISM"});
    s.scorer = scorer == "AIRS" ? ScorerKind::AIRS : scorer == "BLENDED" ? ScorerKind::BLENDED : ScorerKind::PRISM;
    s.raw = j.at("raw").get<double>();
    s.normalized = j.at("normalized").get<double>();
    const auto band = j.value("band", std::string{"Low"});
    s.band = band == "High" ? RiskBand::High : band == "Moderate" ? RiskBand::Moderate : RiskBand::Low;
    if (j.contains("breakdown")) {
        const auto& b = j.at("breakdown");
        s.breakdown.activity = b.value("S_A", 0.0);
        s.breakdown.context = b.value("S_C", 0.0);
        s.breakdown.ip = b.value("S_IP", 0.0);
        s.breakdown.hours = b.value("S_B", 0.0);
        s.breakdown.device = b.value("S_D", 0.0);
        s.breakdown.cumulative = b.value("S_CA", 0.0);
        s.breakdown.privilege_multiplier = b.value("privilege_multiplier", 1.0);
        for (const auto& c : b.value("per_event", nlohmann::json::array())) {
            s.breakdown.per_event.push_back({c.at("event_id").get<std::string>(), c.at("points").get<double>()});
        }
    }
    return s;
}

Json to_json(const FeatureVector& v) {
    Json j;
    j["schema_version"] = v.schema_version;
    j["values"] = v.values;
    return j;
}

FeatureVector feature_vector_from_json(const nlohmann::json& j) {
    FeatureVector v;
    v.schema_version = j.value("schema_version", kFeatureSchemaVersion);
    const auto vals = j.at("values").get<std::vector<double>>();
    if (vals.size() != kFeatureDim) throw Error(ErrorCode::SchemaMismatch, "feature vector length mismatch");
    std::copy(vals.begin(), vals.end(), v.values.begin());
    return v;
}

Json to_json(const FeedbackRecord& r) {
    Json j;
    j["alert_id"] = r.alert_id;
    j["features"] = to_json(r.features);
    j["S_AI"] = r.s_ai;
    j["S_user"] = r.s_user;
    j["alpha"] = r.alpha_used;
    j["S_final"] = r.s_final;
    j["analyst_id"] = r.analyst_id;
    j["created_at"] = format_iso(r.created_at);
    j["consumed_in_retrain"] = r.consumed_in_retrain;
    return j;
}

FeedbackRecord feedback_from_json(const nlohmann::json& j) {
    FeedbackRecord r;
    r.alert_id = j.at("alert_id").get<std::string>();
    r.features = feature_vector_from_json(j.at("features"));
    r.s_ai = j.at("S_AI").get<double>();
    r.s_user = j.at("S_user").get<double>();
    r.alpha_used = j.at("alpha").get<double>();
    r.s_final = j.at("S_final").get<double>();
    r.analyst_id = j.value("analyst_id", std::string{});
    r.created_at = ts_from(j.at("created_at"));
    r.consumed_in_retrain = j.value("consumed_in_retrain", false);
    return r;
}

Json to_json(const ActionRecord& a) {
    Json j;
    j["action"] = to_string(a.action);
    j["target"] = a.target;
    j["executed_at"] = format_iso(a.executed_at);
    j["simulated"] = a.simulated;
    j["operator_note"] = a.operator_note;
    return j;
}

Json to_json(const PolicyViolation& v) {
    Json j;
    j["violation_id"] = v.violation_id;
    j["policy_id"] = v.policy_id;
    j["policy_name"] = v.policy_name;
    j["category"] = to_string(v.category);
    j["severity"] = to_string(v.severity);
    j["subject"] = v.subject;
    j["user_id"] = v.user_id;
    j["triggering_event_ids"] = v.triggering_event_ids;
    j["first_event_at"] = format_iso(v.first_event_at);
    j["observed"] = v.observed;
    j["threshold"] = v.threshold;
    j["fired_at"] = format_iso(v.fired_at);
    if (v.action_taken) j["action_taken"] = to_json(*v.action_taken);
    return j;
}

PolicyViolation violation_from_json(const nlohmann::json& j) {
    PolicyViolation v;
    v.violation_id = j.at("violation_id").get<std::string>();
    v.policy_id = j.at("policy_id").get<std::string>();
    v.policy_name = j.value("policy_name", v.policy_id);
    v.category = parse_policy_category(j.at("category").get<std::string>()).value_or(PolicyCategory::UserRisk);
    v.severity = parse_severity(j.at("severity").get<std::string>()).value_or(Severity::Medium);
    v.subject = j.at("subject").get<std::string>();
    v.user_id = j.at("user_id").get<std::string>();
    v.triggering_event_ids = j.at("triggering_event_ids").get<std::vector<std::string>>();
    v.first_event_at = ts_from(j.at("first_event_at"));
    v.observed = j.at("observed").get<double>();
    v.threshold = j.at("threshold").get<double>();
    v.fired_at = ts_from(j.at("fired_at"));
    if (j.contains("action_taken")) {
        const auto& a = j.at("action_taken");
        ActionRecord rec;
        rec.action = parse_action_kind(a.at("action").get<std::string>()).value_or(ActionKind::AlertOnly);
        rec.target = a.value("target", std::string{});
        rec.executed_at = ts_from(a.at("executed_at"));
        rec.simulated = a.value("simulated", true);
        rec.operator_note = a.value("operator_note", std::string{});
        v.action_taken = rec;
    }
    return v;
}

Json to_json(const RiskProfile& p) {
    Json j;
    j["user_id"] = p.user_id;
    j["cumulative_risk"] = p.cumulative_risk;
    if (p.last_update) j["last_update"] = format_iso(*p.last_update);
    if (p.last_alert_at) j["last_alert_at"] = format_iso(*p.last_alert_at);
    j["history"] = std::vector<double>(p.history.begin(), p.history.end());
    return j;
}

RiskProfile profile_from_json(const nlohmann::json& j) {
    RiskProfile p;
    p.user_id = j.at("user_id").get<std::string>();
    p.cumulative_risk = j.at("cumulative_risk").get<double>();
    if (j.contains("last_update")) p.last_update = ts_from(j.at("last_update"));
    if (j.contains("last_alert_at")) p.last_alert_at = ts_from(j.at("last_alert_at"));
    for (double h : j.value("history", std::vector<double>{})) p.history.push_back(h);
    return p;
}

}  // namespace irm
