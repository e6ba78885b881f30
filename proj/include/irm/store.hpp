#pragma once

#include "irm/airs.hpp"
#include "irm/event.hpp"
#include "irm/json_io.hpp"
#include "irm/policy.hpp"
#include "irm/prism.hpp"

#include <array>
#include <atomic>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace irm {

enum class AlertOrigin { PolicyViolation, ScoreThreshold, CumulativeRisk };
enum class AlertStatus { Open, Acknowledged, Resolved, Rejected };

std::string_view to_string(AlertOrigin o);
std::string_view to_string(AlertStatus s);
std::optional<AlertOrigin> parse_alert_origin(std::string_view s);
std::optional<AlertStatus> parse_alert_status(std::string_view s);

bool legal_transition(AlertStatus from, AlertStatus to);

struct Alert {
    std::string alert_id;
    Timestamp created_at{};
    std::string subject;  // user id
    AlertOrigin origin = AlertOrigin::ScoreThreshold;
    std::string origin_ref;  // violation id or session id
    Severity severity = Severity::Medium;
    double score = 0.0;  // ranking score for the urgent view
    std::optional<RiskScore> risk_score;
    std::optional<double> s_ai;
    std::optional<FeatureVector> features;
    AlertStatus status = AlertStatus::Open;
    std::optional<std::string> recommendation;
    std::optional<std::string> feedback_ref;
    std::string tag;  // free-form campaign tag
};

struct AuditRow {
    std::uint64_t seq = 0;
    std::string alert_id;
    AlertStatus from = AlertStatus::Open;
    AlertStatus to = AlertStatus::Open;
    std::string note;
    Timestamp at{};
};

struct SessionScoreRow {
    std::string session_id;
    std::string user_id;
    Timestamp start{};
    Timestamp end{};
    std::size_t event_count = 0;
    RiskScore prism;
    std::optional<double> s_ai;
    FeatureVector features;
};

Json to_json(const Alert& a);
Alert alert_from_json(const nlohmann::json& j);
Json to_json(const AuditRow& r);
Json to_json(const SessionScoreRow& r);
SessionScoreRow session_score_from_json(const nlohmann::json& j);

struct AppendResult {
    std::size_t accepted = 0;
    std::size_t duplicates = 0;
};

struct EventQuery {
    std::string user_id;
    Timestamp from{};
    Timestamp to{};                    // inclusive
    std::vector<Activity> activities;  // empty = all
    std::size_t limit = 1000;
};

// Ring of the most recent query latencies; percentiles are exact over it.
class LatencyHistogram {
public:
    void record(double ms);
    double percentile(double q) const;
    std::uint64_t count() const;

private:
    static constexpr std::size_t kRing = 8192;
    mutable std::mutex mu_;
    std::vector<double> ring_;
    std::size_t next_ = 0;
    std::uint64_t total_ = 0;
};

struct StoreStats {
    std::uint64_t events = 0;
    std::uint64_t sessions = 0;
    std::uint64_t violations = 0;
    std::uint64_t feedback = 0;
    std::map<std::string, std::uint64_t> alerts_by_status;
    std::map<std::string, std::uint64_t> alerts_by_severity;
    double ingest_rate_eps = 0.0;
    std::uint64_t queries = 0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
};

Json to_json(const StoreStats& s);

// Transforms segment payloads on the way to and from disk. The identity codec
// is the default; an encrypting codec can be dropped in here.
struct SegmentCodec {
    std::function<std::string(std::string)> encode = [](std::string s) { return s; };
    std::function<std::string(std::string)> decode = [](std::string s) { return s; };
};

struct StoreOptions {
    bool sync = true;  // fdatasync segments after each batch
    SegmentCodec codec;
};

struct VerifyReport {
    std::size_t segments = 0;
    std::size_t records = 0;
    std::size_t torn_tails = 0;
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

// On-disk layout under the data directory:
//   segments/YYYYMMDD.seg   events, one file per UTC day, records of
//                           [u32 length][u32 crc32][payload]
//   alerts.jsonl            alert state log, last line per id wins
//   audit.jsonl             alert transitions, append-only
//   feedback.jsonl, violations.jsonl, sessions.jsonl, profiles.jsonl
// The per-user event index is rebuilt from the segments on open.
class RiskStore {
public:
    explicit RiskStore(std::filesystem::path dir, StoreOptions opts = {});
    ~RiskStore();
    RiskStore(const RiskStore&) = delete;
    RiskStore& operator=(const RiskStore&) = delete;

    const std::filesystem::path& dir() const { return dir_; }

    // Durable on return. Duplicates (by event_id, including within the batch)
    // are skipped. `accepted`, when given, receives one flag per input event.
    // Throws StorageFull.
    AppendResult append_events(std::span<const ActivityEvent> batch, std::vector<bool>* accepted = nullptr);
    std::vector<ActivityEvent> query_events(const EventQuery& q) const;
    // Activity counts for a user over [from, to] without decoding payloads.
    std::array<std::uint64_t, kActivityCount> activity_counts(const std::string& user, Timestamp from,
                                                              Timestamp to) const;
    bool has_event(const std::string& event_id) const;
    std::uint64_t event_count() const;
    std::vector<std::string> users() const;

    Alert upsert_alert(Alert alert);
    Alert transition_alert(const std::string& alert_id, AlertStatus to, const std::string& note, Timestamp at,
                           std::optional<std::string> feedback_ref = std::nullopt);
    // Field updates that do not change status. Throw AlertNotFound.
    Alert attach_recommendation(const std::string& alert_id, const std::string& recommendation);
    Alert attach_feedback(const std::string& alert_id, const std::string& feedback_ref);
    std::optional<Alert> get_alert(const std::string& alert_id) const;
    std::vector<Alert> alerts() const;
    std::vector<AuditRow> audit(const std::string& alert_id = {}) const;
    std::string next_alert_id();

    void append_feedback(const FeedbackRecord& r);
    // Records that the oldest `count` unconsumed feedback rows fed a retrain.
    void mark_feedback_consumed(std::size_t count);
    std::vector<FeedbackRecord> feedback() const;
    void append_violation(const PolicyViolation& v);
    std::vector<PolicyViolation> violations() const;
    std::optional<PolicyViolation> violation(const std::string& violation_id) const;
    // Alerts on `user` whose id sorts before `before_id`.
    std::size_t prior_alert_count(const std::string& user, const std::string& before_id) const;
    void append_session(const SessionScoreRow& s);
    std::vector<SessionScoreRow> sessions(const std::string& user = {}) const;
    std::optional<SessionScoreRow> session(const std::string& session_id) const;
    void put_profile(const RiskProfile& p);
    std::optional<RiskProfile> profile(const std::string& user) const;

    StoreStats stats() const;
    const LatencyHistogram& latency() const { return latency_; }

    // Group commit: while deferred, appends mark files dirty instead of
    // syncing; the outermost end_group() syncs them all once.
    void begin_group();
    void end_group();

    static VerifyReport verify(const std::filesystem::path& dir, const StoreOptions& opts = {});

private:
    struct IndexEntry {
        std::int64_t ts;
        std::uint32_t segment;
        std::uint8_t activity;
        std::uint64_t offset;
        std::uint32_t length;
    };
    struct Segment {
        std::string name;
        int fd = -1;
        std::uint64_t size = 0;
    };

    void load_segments();
    void load_tables();
    std::uint32_t segment_for(Timestamp ts);
    void index_event(const ActivityEvent& e, std::uint32_t seg, std::uint64_t offset, std::uint32_t length);
    void append_line(const std::string& file, const std::string& line);
    ActivityEvent read_event(const IndexEntry& entry) const;

    std::filesystem::path dir_;
    StoreOptions opts_;

    mutable std::shared_mutex index_mu_;
    std::mutex write_mu_;
    std::vector<Segment> segments_;
    std::map<std::string, std::uint32_t> segment_by_day_;
    std::unordered_map<std::string, std::vector<IndexEntry>> by_user_;
    std::unordered_multimap<std::uint64_t, std::pair<std::uint32_t, std::uint64_t>> ids_;
    std::uint64_t event_count_ = 0;

    void sync_fd(int fd);
    std::mutex sync_mu_;
    int group_depth_ = 0;
    std::set<int> dirty_fds_;

    mutable std::mutex table_mu_;
    std::map<std::string, Alert> alerts_;
    std::vector<AuditRow> audit_;
    std::vector<FeedbackRecord> feedback_;
    std::vector<PolicyViolation> violations_;
    std::unordered_map<std::string, std::size_t> violation_index_;
    std::unordered_map<std::string, std::set<std::string>> alerts_by_user_;
    std::vector<SessionScoreRow> sessions_;
    std::unordered_map<std::string, std::size_t> session_index_;
    std::map<std::string, RiskProfile> profiles_;
    std::uint64_t next_alert_ = 1;

    mutable LatencyHistogram latency_;
    mutable std::atomic<std::uint64_t> queries_{0};
    mutable std::mutex rate_mu_;
    std::deque<std::pair<std::int64_t, std::uint64_t>> ingest_marks_;  // steady ms, accepted
    std::map<std::string, std::FILE*> files_;
};

// Binary event codec used by the segment files.
std::string encode_event(const ActivityEvent& e);
ActivityEvent decode_event(std::string_view payload);

}  // namespace irm
