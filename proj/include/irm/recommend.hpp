#pragma once

#include "irm/ingest.hpp"
#include "irm/json_io.hpp"
#include "irm/policy.hpp"
#include "irm/prism.hpp"
#include "irm/store.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace irm {

enum class Confidence { Low, Medium, High };
enum class RecAction { AlertOnly, RevokePrivilege, RestrictFileAccess, FlagUser, DisconnectDevice, Investigate, Dismiss };
enum class IpStanding { NoAddress, Trusted, Unknown, Blacklisted };

std::string_view to_string(Confidence c);
std::string_view to_string(RecAction a);
std::string_view to_string(IpStanding s);
std::optional<Confidence> parse_confidence(std::string_view s);
std::optional<RecAction> parse_rec_action(std::string_view s);
RecAction rec_action_for(ActionKind k);

inline constexpr auto kHistoryWindow = std::chrono::hours{24 * 30};

// Aggregates only: no file names, content, paths or addresses.
struct RecommendationContext {
    std::string alert_id;
    AlertOrigin origin = AlertOrigin::ScoreThreshold;
    Severity severity = Severity::Medium;
    std::string trigger;                    // policy name or scorer
    std::optional<std::string> policy_id;
    std::optional<ActionKind> policy_action;
    std::optional<Activity> trigger_activity;
    double score = 0.0;

    std::string user_id;
    std::string department;
    Privilege privilege = Privilege::Low;

    // User history over the 30 days before the evidence window.
    bool has_history = false;
    std::map<std::string, std::uint64_t> activity_counts_30d;
    std::uint64_t similar_actions_30d = 0;  // of the trigger activity
    std::uint64_t prior_alerts = 0;
    double prior_daily_mean = 0.0;
    std::uint64_t evidence_count = 0;  // trigger activity inside the evidence window
    std::optional<double> baseline_delta;

    // Department peers' 30-day counts of the trigger activity.
    std::optional<double> department_median;
    std::size_t department_peers = 0;

    DeviceTrust device_trust = DeviceTrust::Unknown;
    IpStanding ip = IpStanding::NoAddress;
    bool off_hours = false;

    std::vector<std::string> no_history_markers;

    bool operator==(const RecommendationContext&) const = default;
};

Json to_json(const RecommendationContext& c);

struct ReasoningStep {
    std::string observation;
    std::string inference;
    bool operator==(const ReasoningStep&) const = default;
};

struct Recommendation {
    std::string summary;
    std::vector<ReasoningStep> steps;
    std::vector<RecAction> actions;
    Confidence confidence = Confidence::Low;
    std::string generator;  // "template" or the external command
    std::optional<std::string> fallback_reason;

    bool operator==(const Recommendation&) const = default;
};

Json to_json(const Recommendation& r);
// Parses and checks the invariants (summary, >= 1 step, >= 1 known action,
// known confidence). Throws ConfigError describing the first violation.
Recommendation recommendation_from_json(const nlohmann::json& j);

struct ContextSources {
    const RiskStore& store;
    const UserDirectory& users;
    const std::vector<Policy>& policies;
    const IpReputation& reputation;
    const PrismConfig& prism;
};

// Throws AlertNotFound.
RecommendationContext assemble_context(const std::string& alert_id, const ContextSources& src);

// Adverse signals the template counts toward confidence.
std::vector<std::string> adverse_signals(const RecommendationContext& c);

// Phrasing and action tables, loaded from JSON.
struct TemplateTable {
    std::string summary;  // {severity} {trigger} {user} placeholders
    std::map<std::string, std::vector<std::string>> origin_actions;  // origin -> actions; "{policy_action}" expands
    std::map<std::string, ReasoningStep> steps;                      // signal -> phrasing
    std::size_t high_at = 2;
    std::size_t medium_at = 1;

    static TemplateTable defaults();
    static TemplateTable from_json_text(const std::string& text);
    static TemplateTable load(const std::filesystem::path& path);
};

std::string default_templates_json();

class RecommendationGenerator {
public:
    virtual ~RecommendationGenerator() = default;
    virtual Recommendation generate(const RecommendationContext& c) const = 0;
};

class TemplateGenerator : public RecommendationGenerator {
public:
    explicit TemplateGenerator(TemplateTable table = TemplateTable::defaults());
    Recommendation generate(const RecommendationContext& c) const override;

private:
    TemplateTable table_;
};

// Runs a local command with the context JSON on stdin and reads a
// Recommendation from stdout. Non-zero exit, invalid output or timeout fall
// back to the template generator.
class ExternalGenerator : public RecommendationGenerator {
public:
    ExternalGenerator(std::vector<std::string> argv, std::chrono::milliseconds timeout = std::chrono::seconds{10},
                      TemplateTable fallback = TemplateTable::defaults());
    Recommendation generate(const RecommendationContext& c) const override;

private:
    std::vector<std::string> argv_;
    std::chrono::milliseconds timeout_;
    TemplateGenerator fallback_;
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
};

// fork/exec with stdin/stdout pipes; kills the child on timeout.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::milliseconds timeout);

}  // namespace irm
