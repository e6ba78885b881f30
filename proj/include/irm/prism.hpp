#pragma once

#include "irm/event.hpp"
#include "irm/ingest.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace irm {

enum class RiskBand { Low, Moderate, High };
enum class ScorerKind { PRISM, AIRS, BLENDED };

std::string_view to_string(RiskBand b);
std::string_view to_string(ScorerKind s);

struct PrismWeights {
    double privilege = 1.0;  // kept for config completeness; privilege acts as a multiplier
    double activity = 1.0;
    double context = 1.0;
    double ip = 1.0;
    double hours = 1.0;
    double device = 1.0;
    double cumulative = 1.0;
};

struct CumulativeConfig {
    Seconds window = std::chrono::hours{1};
    std::size_t free_actions = 20;
    double per_action_points = 1.0;
};

struct PrismConfig {
    PrismWeights weights;
    std::array<double, kActivityCount> activity_points{};
    std::array<double, kAppContextCount> app_context_points{};
    double ip_unknown_points = 5.0;
    double off_hours_points = 5.0;
    double device_points = 5.0;
    std::array<double, 4> privilege_multipliers{0.7, 0.9, 1.1, 1.1};  // High, Moderate, Low, Guest
    std::int64_t business_start_s = 9 * 3600;
    std::int64_t business_end_s = 17 * 3600;
    TimeZone tz{};
    double r_min = 0.0;
    double r_max = 100.0;
    double band_moderate = 0.3;
    double band_high = 0.6;
    double alert_threshold = 0.3;
    CumulativeConfig cumulative;

    static PrismConfig defaults();
    static PrismConfig from_json_text(const std::string& text);
    static PrismConfig load(const std::filesystem::path& path);
    std::string to_json_text() const;

    // Throws ConfigError when an invariant is broken.
    void validate() const;

    double multiplier(Privilege p) const { return privilege_multipliers[static_cast<std::size_t>(p)]; }
};

struct EventContribution {
    std::string event_id;
    double points = 0.0;
};

struct FactorBreakdown {
    double activity = 0.0;    // S_A
    double context = 0.0;     // S_C
    double ip = 0.0;          // S_IP
    double hours = 0.0;       // S_B
    double device = 0.0;      // S_D
    double cumulative = 0.0;  // S_CA
    double privilege_multiplier = 1.0;
    std::vector<EventContribution> per_event;
};

struct RiskScore {
    double raw = 0.0;
    double normalized = 0.0;
    RiskBand band = RiskBand::Low;
    ScorerKind scorer = ScorerKind::PRISM;
    FactorBreakdown breakdown;
    std::string subject;  // session id
    std::string user_id;
};

// Sources of IP reputation for the S_IP factor.
struct IpReputation {
    IpList trusted;
    IpList blacklist;
};

double activity_points(const ActivityEvent& event, const PrismConfig& cfg);
double context_points(const ActivityEvent& event, const PrismConfig& cfg);
// Events without an address carry no network evidence and score 0.
double ip_points(const ActivityEvent& event, const IpReputation& rep, const PrismConfig& cfg);
double hours_points(const ActivityEvent& event, const PrismConfig& cfg);
double device_points(const ActivityEvent& event, const PrismConfig& cfg);
double cumulative_points(std::size_t actions_in_window, const PrismConfig& cfg);

double normalize(double raw, const PrismConfig& cfg);
RiskBand band_for(double normalized, const PrismConfig& cfg);

// Recomputes raw from a breakdown: (sum of weighted factors) x multiplier.
double recompute_raw(const FactorBreakdown& b, const PrismConfig& cfg);

// Session-level factors (IP, hours, device, context) take the worst event;
// activity points accumulate per event. Throws EmptySession.
RiskScore score_session(const Session& session, const UserRecord& user, const PrismConfig& cfg,
                        const IpReputation& rep, std::size_t actions_in_window = 0);

}  // namespace irm
