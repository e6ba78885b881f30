#pragma once

#include "irm/airs.hpp"
#include "irm/ingest.hpp"
#include "irm/policy.hpp"
#include "irm/prism.hpp"
#include "irm/recommend.hpp"
#include "irm/sensitivity.hpp"
#include "irm/store.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace irm {

struct ServiceConfig {
    std::filesystem::path data_dir = "irm-data";
    std::string listen_host = "127.0.0.1";
    int port = 8080;
    std::string auth_token;

    // Optional documents; empty path = shipped defaults.
    std::filesystem::path prism_config;
    std::filesystem::path policy_config;
    std::filesystem::path policy_aux;
    std::filesystem::path patterns;
    std::filesystem::path templates;
    std::filesystem::path column_mapping;
    std::filesystem::path users_csv;
    std::filesystem::path devices_csv;
    std::filesystem::path ip_regions;
    std::filesystem::path trusted_ips;
    std::filesystem::path blacklisted_ips;

    double alpha = 0.5;
    std::size_t n_threshold = 50;
    double cumulative_threshold = 5.0;
    Seconds half_life = std::chrono::hours{24 * 7};
    std::size_t bootstrap_sessions = 200;  // PRISM-normal sessions before the first AIRS fit
    std::size_t batch_size = 1000;
    std::size_t queue_capacity = 16;  // pipeline batches waiting
    Seconds idle_gap = std::chrono::minutes{30};
    std::vector<std::string> recommend_command;  // external generator argv
    bool sync = true;
    AirsHyper airs{};

    // Relative paths resolve against the config file's directory. Applies
    // IRM_DATA_DIR, IRM_PORT and IRM_TOKEN overrides. Throws ConfigError.
    static ServiceConfig load(const std::filesystem::path& path);
    static ServiceConfig from_json_text(const std::string& text, const std::filesystem::path& base_dir = ".");
    void apply_env();
    void validate() const;
};

struct RowError {
    std::size_t row = 0;
    ErrorCode code = ErrorCode::MalformedRow;
    std::string message;
};

struct PipelineCounts {
    std::size_t rows = 0;
    std::size_t events_stored = 0;
    std::size_t duplicates = 0;
    std::size_t errors = 0;
    std::size_t sessions_scored = 0;
    std::size_t violations = 0;
    std::size_t alerts = 0;
    std::vector<RowError> error_details;

    PipelineCounts& operator+=(const PipelineCounts& o);
};

Json to_json(const PipelineCounts& c);

struct HourBucket {
    Timestamp hour{};
    std::size_t sessions = 0;
    std::size_t alerts = 0;
    double mean_score = 0.0;
};

struct DashboardSummary {
    std::vector<Alert> urgent;
    std::map<std::string, std::size_t> band_histogram;      // users by latest session band
    std::map<std::string, std::size_t> severity_histogram;  // all alerts
    std::vector<HourBucket> series;                         // contiguous hourly buckets
};

Json to_json(const DashboardSummary& d);

inline constexpr std::size_t kUrgentCount = 20;
inline constexpr std::size_t kMaxSeriesBuckets = 24 * 14;

DashboardSummary build_dashboard(const RiskStore& store, const PrismConfig& prism, std::size_t urgent_n = kUrgentCount);

double severity_score(Severity s);

// The single-threaded pipeline: parse -> enrich -> classify -> store ->
// sessionize -> PRISM -> AIRS -> policies -> alerts -> recommend. Callers
// serialise access (the Service does this through its queue).
class Engine {
public:
    explicit Engine(ServiceConfig cfg);
    ~Engine();

    // Rows are parser outcomes, so parse errors are counted here too.
    PipelineCounts run_pipeline(std::vector<RowOutcome> rows);
    PipelineCounts run_events(std::vector<ActivityEvent> events);
    // Closes every open session and scores it.
    PipelineCounts flush();
    // Closes sessions idle as of `now`.
    PipelineCounts close_idle(Timestamp now);

    // Feedback and triage, shared with the HTTP layer.
    FeedbackRecord submit_feedback(const std::string& alert_id, double s_user, const std::string& analyst,
                                   const std::string& note, Timestamp at);
    Alert transition(const std::string& alert_id, AlertStatus to, const std::string& note, Timestamp at);
    // Runs a retrain now (force) and persists the new model.
    std::optional<AutoencoderModel> retrain(bool force);
    // Starts a background retrain if enough feedback is pending.
    void maybe_schedule_retrain();
    void wait_for_training();

    RiskStore& store() { return *store_; }
    const RiskStore& store() const { return *store_; }
    AirsEngine& airs() { return airs_; }
    const ServiceConfig& config() const { return cfg_; }
    const PrismConfig& prism() const { return prism_; }
    const ParseOptions& parse_options() const { return parse_; }
    const UserDirectory& users() const { return tables_users_; }
    const IpReputation& reputation() const { return reputation_; }
    const std::vector<Policy>& policies() const { return policies_; }
    std::uint64_t model_version() const;
    std::size_t retrains() const { return retrains_; }

    std::optional<Recommendation> recommend(const std::string& alert_id);

private:
    PipelineCounts process(std::vector<ActivityEvent> events, PipelineCounts counts);
    void score_sessions(std::vector<Session> sessions, PipelineCounts& counts);
    void raise_alert(Alert alert, PipelineCounts& counts);
    std::size_t actions_in_window(const std::string& user, Timestamp end) const;
    void bootstrap_airs();
    void load_model();
    void training_loop();
    void recommend_loop();

    ServiceConfig cfg_;
    PrismConfig prism_;
    ParseOptions parse_;
    EnrichmentTables enrich_;
    UserDirectory tables_users_;
    IpReputation reputation_;
    SensitivityClassifier classifier_;
    std::vector<Policy> policies_;
    std::unique_ptr<PolicyEngine> policy_engine_;
    std::unique_ptr<RiskStore> store_;
    std::unique_ptr<RecommendationGenerator> generator_;
    AirsEngine airs_;
    Sessionizer sessionizer_;
    ProfileConfig profile_cfg_;
    std::map<std::string, RiskProfile> profiles_;
    std::map<std::string, LabelSet> file_labels_;
    std::vector<LabeledVector> bootstrap_;
    std::map<std::string, std::pair<double, FeatureVector>> last_ai_;  // user -> latest (S_AI, features)

    std::mutex train_mu_;
    std::condition_variable train_cv_;
    bool train_requested_ = false;
    bool training_ = false;
    bool stop_ = false;
    std::size_t retrains_ = 0;
    std::thread trainer_;

    // External generators run off the pipeline thread.
    std::mutex rec_mu_;
    std::condition_variable rec_cv_;
    std::deque<std::string> rec_queue_;
    std::size_t rec_busy_ = 0;
    std::thread recommender_;

public:
    // Blocks until queued recommendations are attached.
    void wait_for_recommendations();
};

// Reads a CERT directory in batches of config().batch_size, then flushes.
PipelineCounts ingest_directory(Engine& engine, const std::filesystem::path& dir);

// Bounded queue in front of the engine: producers block when it is full.
class Service {
public:
    explicit Service(ServiceConfig cfg);
    ~Service();

    std::future<PipelineCounts> submit(std::vector<RowOutcome> rows);
    PipelineCounts ingest(std::vector<RowOutcome> rows) { return submit(std::move(rows)).get(); }

    // Runs `fn` with exclusive access to the engine.
    template <typename Fn>
    auto with_engine(Fn&& fn) {
        std::lock_guard lock(engine_mu_);
        return fn(engine_);
    }
    Engine& engine_unlocked() { return engine_; }

private:
    struct Job {
        std::vector<RowOutcome> rows;
        std::promise<PipelineCounts> done;
    };
    void worker();

    Engine engine_;
    std::mutex engine_mu_;
    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::condition_variable space_cv_;
    std::deque<Job> queue_;
    bool stop_ = false;
    std::thread worker_;
};

}  // namespace irm
