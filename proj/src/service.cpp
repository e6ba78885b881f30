#include "irm/service.hpp"

#include "irm/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace irm {

namespace {

constexpr const char* kSensitivityKey = "sensitivity";

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string label_string(const LabelSet& labels) {
    std::string out;
    for (const auto& l : labels) {
        if (!out.empty()) out += '|';
        out += to_string(l.category);
    }
    return out;
}

Severity severity_for_band(RiskBand b) {
    switch (b) {
        case RiskBand::High: return Severity::High;
        case RiskBand::Moderate: return Severity::Medium;
        case RiskBand::Low: return Severity::LowSev;
    }
    return Severity::Medium;
}

Timestamp floor_hour(Timestamp t) { return std::chrono::floor<std::chrono::hours>(t); }

}  // namespace

ServiceConfig ServiceConfig::from_json_text(const std::string& text, const std::filesystem::path& base_dir) {
    ServiceConfig cfg;
    try {
        auto doc = nlohmann::json::parse(text);
        auto path = [&](const char* key, std::filesystem::path& out) {
            if (!doc.contains(key)) return;
            std::filesystem::path p = doc.at(key).get<std::string>();
            out = p.empty() || p.is_absolute() ? p : base_dir / p;
        };
        path("data_dir", cfg.data_dir);
        path("prism_config", cfg.prism_config);
        path("policy_config", cfg.policy_config);
        path("policy_aux", cfg.policy_aux);
        path("patterns", cfg.patterns);
        path("templates", cfg.templates);
        path("column_mapping", cfg.column_mapping);
        path("users_csv", cfg.users_csv);
        path("devices_csv", cfg.devices_csv);
        path("ip_regions", cfg.ip_regions);
        path("trusted_ips", cfg.trusted_ips);
        path("blacklisted_ips", cfg.blacklisted_ips);
        if (doc.contains("listen")) {
            cfg.listen_host = doc.at("listen").value("host", cfg.listen_host);
            cfg.port = doc.at("listen").value("port", cfg.port);
        }
        cfg.auth_token = doc.value("auth_token", cfg.auth_token);
        cfg.sync = doc.value("sync", cfg.sync);
        cfg.recommend_command = doc.value("recommend_command", cfg.recommend_command);
        if (doc.contains("airs")) {
            const auto& a = doc.at("airs");
            cfg.alpha = a.value("alpha", cfg.alpha);
            cfg.n_threshold = a.value("n_threshold", cfg.n_threshold);
            cfg.cumulative_threshold = a.value("cumulative_threshold", cfg.cumulative_threshold);
            if (a.contains("half_life")) {
                auto d = parse_duration(a.at("half_life").get<std::string>());
                if (!d || d->count() <= 0) throw Error(ErrorCode::ConfigError, "airs.half_life is not a duration");
                cfg.half_life = *d;
            }
            cfg.bootstrap_sessions = a.value("bootstrap_sessions", cfg.bootstrap_sessions);
            cfg.airs.initial.epochs = a.value("epochs", cfg.airs.initial.epochs);
            cfg.airs.initial.learning_rate = a.value("learning_rate", cfg.airs.initial.learning_rate);
            cfg.airs.initial.seed = a.value("seed", cfg.airs.initial.seed);
            cfg.airs.finetune.epochs = a.value("finetune_epochs", cfg.airs.finetune.epochs);
            cfg.airs.feedback_weight = a.value("feedback_weight", cfg.airs.feedback_weight);
            cfg.airs.min_baseline = a.value("min_baseline", cfg.airs.min_baseline);
        }
        if (doc.contains("ingest")) {
            const auto& i = doc.at("ingest");
            cfg.batch_size = i.value("batch_size", cfg.batch_size);
            cfg.queue_capacity = i.value("queue_capacity", cfg.queue_capacity);
            if (i.contains("idle_gap")) {
                auto d = parse_duration(i.at("idle_gap").get<std::string>());
                if (!d || d->count() <= 0) throw Error(ErrorCode::ConfigError, "ingest.idle_gap is not a duration");
                cfg.idle_gap = *d;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("service config: ") + e.what());
    }
    return cfg;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    auto cfg = from_json_text(read_text(path), path.parent_path().empty() ? "." : path.parent_path());
    cfg.apply_env();
    cfg.validate();
    return cfg;
}

void ServiceConfig::apply_env() {
    if (const char* v = std::getenv("IRM_DATA_DIR"); v && *v) data_dir = v;
    if (const char* v = std::getenv("IRM_TOKEN"); v && *v) auth_token = v;
    if (const char* v = std::getenv("IRM_PORT"); v && *v) {
        char* end = nullptr;
        const long p = std::strtol(v, &end, 10);
        if (*end != '\0') throw Error(ErrorCode::ConfigError, "IRM_PORT is not a number");
        port = static_cast<int>(p);
    }
}

void ServiceConfig::validate() const {
    if (port < 1 || port > 65535) throw Error(ErrorCode::ConfigError, "port must be in [1,65535]");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigError, "alpha must be in [0,1]");
    if (n_threshold == 0) throw Error(ErrorCode::ConfigError, "n_threshold must be positive");
    if (!(cumulative_threshold > 0)) throw Error(ErrorCode::ConfigError, "cumulative_threshold must be positive");
    if (batch_size == 0 || queue_capacity == 0) throw Error(ErrorCode::ConfigError, "batch and queue sizes must be positive");
    for (const auto* p : {&prism_config, &policy_config, &policy_aux, &patterns, &templates, &column_mapping, &users_csv,
                          &devices_csv, &ip_regions, &trusted_ips, &blacklisted_ips}) {
        if (!p->empty() && !std::filesystem::exists(*p)) {
            throw Error(ErrorCode::ConfigError, "configured path does not exist: " + p->string());
        }
    }
}

PipelineCounts& PipelineCounts::operator+=(const PipelineCounts& o) {
    rows += o.rows;
    events_stored += o.events_stored;
    duplicates += o.duplicates;
    errors += o.errors;
    sessions_scored += o.sessions_scored;
    violations += o.violations;
    alerts += o.alerts;
    error_details.insert(error_details.end(), o.error_details.begin(), o.error_details.end());
    return *this;
}

Json to_json(const PipelineCounts& c) {
    Json j;
    j["rows"] = c.rows;
    j["events_stored"] = c.events_stored;
    j["duplicates"] = c.duplicates;
    j["errors"] = c.errors;
    j["sessions_scored"] = c.sessions_scored;
    j["violations"] = c.violations;
    j["alerts"] = c.alerts;
    auto errs = Json::array();
    for (const auto& e : c.error_details) {
        errs.push_back({{"row", e.row}, {"code", to_string(e.code)}, {"message", e.message}});
    }
    j["error_details"] = std::move(errs);
    return j;
}

double severity_score(Severity s) {
    switch (s) {
        case Severity::LowSev: return 0.25;
        case Severity::Medium: return 0.5;
        case Severity::High: return 0.75;
        case Severity::Critical: return 1.0;
    }
    return 0.5;
}

Json to_json(const DashboardSummary& d) {
    Json j;
    auto urgent = Json::array();
    for (const auto& a : d.urgent) urgent.push_back(to_json(a));
    j["urgent"] = std::move(urgent);
    j["band_histogram"] = d.band_histogram;
    j["severity_histogram"] = d.severity_histogram;
    auto series = Json::array();
    for (const auto& b : d.series) {
        series.push_back({{"hour", format_iso(b.hour)},
                          {"sessions", b.sessions},
                          {"alerts", b.alerts},
                          {"mean_score", b.mean_score}});
    }
    j["series"] = std::move(series);
    return j;
}

DashboardSummary build_dashboard(const RiskStore& store, const PrismConfig& prism, std::size_t urgent_n) {
    (void)prism;
    DashboardSummary d;
    const auto alerts = store.alerts();
    const auto sessions = store.sessions();

    std::vector<Alert> open;
    for (const auto& a : alerts) {
        if (a.status == AlertStatus::Open) open.push_back(a);
    }
    std::sort(open.begin(), open.end(), [](const Alert& a, const Alert& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.created_at != b.created_at) return a.created_at > b.created_at;
        return a.alert_id < b.alert_id;
    });
    if (open.size() > urgent_n) open.resize(urgent_n);
    d.urgent = std::move(open);

    for (auto b : {RiskBand::Low, RiskBand::Moderate, RiskBand::High}) d.band_histogram[std::string(to_string(b))] = 0;
    std::map<std::string, const SessionScoreRow*> latest;
    for (const auto& s : sessions) {
        auto& slot = latest[s.user_id];
        if (!slot || s.end > slot->end || (s.end == slot->end && s.session_id > slot->session_id)) slot = &s;
    }
    for (const auto& [user, s] : latest) ++d.band_histogram[std::string(to_string(s->prism.band))];

    for (auto s : {Severity::LowSev, Severity::Medium, Severity::High, Severity::Critical}) {
        d.severity_histogram[std::string(to_string(s))] = 0;
    }
    for (const auto& a : alerts) ++d.severity_histogram[std::string(to_string(a.severity))];

    std::map<Timestamp, HourBucket> buckets;
    for (const auto& s : sessions) {
        auto& b = buckets[floor_hour(s.end)];
        b.hour = floor_hour(s.end);
        b.mean_score += s.prism.normalized;
        ++b.sessions;
    }
    for (const auto& a : alerts) {
        auto& b = buckets[floor_hour(a.created_at)];
        b.hour = floor_hour(a.created_at);
        ++b.alerts;
    }
    if (!buckets.empty()) {
        auto first = buckets.begin()->first;
        const auto last = buckets.rbegin()->first;
        const auto span = std::chrono::duration_cast<std::chrono::hours>(last - first).count() + 1;
        if (span > static_cast<long>(kMaxSeriesBuckets)) first = last - std::chrono::hours{kMaxSeriesBuckets - 1};
        for (auto h = first; h <= last; h += std::chrono::hours{1}) {
            HourBucket b;
            b.hour = h;
            if (auto it = buckets.find(h); it != buckets.end()) {
                b = it->second;
                if (b.sessions) b.mean_score /= static_cast<double>(b.sessions);
            }
            d.series.push_back(b);
        }
    }
    return d;
}

Engine::Engine(ServiceConfig cfg)
    : cfg_(std::move(cfg)),
      prism_(cfg_.prism_config.empty() ? PrismConfig::defaults() : PrismConfig::load(cfg_.prism_config)),
      classifier_(cfg_.patterns.empty() ? SensitivityConfig::defaults() : SensitivityConfig::load(cfg_.patterns)),
      airs_(cfg_.airs, cfg_.alpha, cfg_.n_threshold),
      sessionizer_(cfg_.idle_gap),
      profile_cfg_{cfg_.half_life, cfg_.cumulative_threshold} {
    cfg_.validate();
    prism_.validate();
    parse_.tz = prism_.tz;
    if (!cfg_.column_mapping.empty()) parse_.mapping = ColumnMapping::load(cfg_.column_mapping);
    if (!cfg_.devices_csv.empty()) enrich_.devices = DeviceRegistry::load_csv(cfg_.devices_csv);
    if (!cfg_.ip_regions.empty()) enrich_.regions = IpRegionTable::load(cfg_.ip_regions);
    if (!cfg_.users_csv.empty()) tables_users_ = UserDirectory::load_csv(cfg_.users_csv);
    if (!cfg_.trusted_ips.empty()) reputation_.trusted = IpList::load(cfg_.trusted_ips);
    if (!cfg_.blacklisted_ips.empty()) reputation_.blacklist = IpList::load(cfg_.blacklisted_ips);
    policies_ = cfg_.policy_config.empty() ? default_policies() : load_policies_file(cfg_.policy_config);
    PolicyAux aux = cfg_.policy_aux.empty() ? PolicyAux{} : PolicyAux::load(cfg_.policy_aux);
    policy_engine_ = std::make_unique<PolicyEngine>(policies_, std::move(aux), enrich_.devices,
                                                    PolicyEngineOptions{prism_.tz, std::chrono::hours{1}});
    auto table = cfg_.templates.empty() ? TemplateTable::defaults() : TemplateTable::load(cfg_.templates);
    if (cfg_.recommend_command.empty()) {
        generator_ = std::make_unique<TemplateGenerator>(std::move(table));
    } else {
        generator_ = std::make_unique<ExternalGenerator>(cfg_.recommend_command, std::chrono::seconds{10}, std::move(table));
    }

    store_ = std::make_unique<RiskStore>(cfg_.data_dir, StoreOptions{cfg_.sync, {}});
    for (auto r : store_->feedback()) airs_.feedback().add(std::move(r));
    load_model();

    trainer_ = std::thread([this] { training_loop(); });
    if (!cfg_.recommend_command.empty()) recommender_ = std::thread([this] { recommend_loop(); });
}

Engine::~Engine() {
    {
        std::lock_guard lock(train_mu_);
        stop_ = true;
    }
    train_cv_.notify_all();
    {
        std::lock_guard lock(rec_mu_);
    }
    rec_cv_.notify_all();
    if (trainer_.joinable()) trainer_.join();
    if (recommender_.joinable()) recommender_.join();
}

void Engine::load_model() {
    const auto model_path = cfg_.data_dir / "model.json";
    const auto baseline_path = cfg_.data_dir / "baseline.json";
    if (!std::filesystem::exists(model_path)) return;
    airs_.publish(AutoencoderModel::load(model_path));
    if (std::filesystem::exists(baseline_path)) {
        auto doc = nlohmann::json::parse(read_text(baseline_path));
        std::vector<FeatureVector> train;
        std::vector<FeatureVector> holdout;
        for (const auto& v : doc.at("train")) train.push_back(feature_vector_from_json(v));
        for (const auto& v : doc.at("holdout")) holdout.push_back(feature_vector_from_json(v));
        airs_.set_baseline(std::move(train), std::move(holdout));
    }
}

std::uint64_t Engine::model_version() const {
    auto m = airs_.model();
    return m ? m->version : 0;
}

PipelineCounts Engine::run_pipeline(std::vector<RowOutcome> rows) {
    PipelineCounts counts;
    counts.rows = rows.size();
    std::vector<ActivityEvent> events;
    events.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        if (r.event) {
            events.push_back(std::move(*r.event));
        } else {
            ++counts.errors;
            const auto code = r.error ? r.error->code() : ErrorCode::MalformedRow;
            counts.error_details.push_back({r.line_no ? r.line_no : i + 1, code, r.error ? r.error->what() : "row"});
        }
    }
    return process(std::move(events), std::move(counts));
}

PipelineCounts Engine::run_events(std::vector<ActivityEvent> events) {
    PipelineCounts counts;
    counts.rows = events.size();
    return process(std::move(events), std::move(counts));
}

PipelineCounts Engine::process(std::vector<ActivityEvent> events, PipelineCounts counts) {
    if (events.empty()) return counts;

    // enrich + classify
    std::vector<LabelSet> labels(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        auto& e = events[i];
        e = enrich(std::move(e), enrich_);
        if (e.source != EventSource::File) continue;
        LabelSet found;
        if (auto content = e.extra(extra_key::kContent); !content.empty()) found = classifier_.classify_text(content);
        auto name = e.extra(extra_key::kFilename);
        auto path = e.extra(extra_key::kPath);
        if (!name.empty() || !path.empty()) found = merge_labels(found, classifier_.classify_metadata(name, path));
        if (e.file_id) {
            auto& cached = file_labels_[*e.file_id];
            cached = merge_labels(cached, found);
            found = cached;
        }
        if (!found.empty()) e.raw_extra[kSensitivityKey] = label_string(found);
        labels[i] = std::move(found);
    }

    // store
    std::vector<bool> accepted;
    const auto appended = store_->append_events(events, &accepted);
    counts.events_stored += appended.accepted;
    counts.duplicates += appended.duplicates;

    // sessionize + score
    Timestamp latest{};
    std::vector<Session> closed;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!accepted[i]) continue;
        latest = std::max(latest, events[i].timestamp);
        for (auto& s : sessionizer_.push(events[i])) closed.push_back(std::move(s));
    }
    for (auto& s : sessionizer_.close_idle(latest)) closed.push_back(std::move(s));
    score_sessions(std::move(closed), counts);

    // policies
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!accepted[i]) continue;
        const auto user = tables_users_.resolve(events[i].user_id);
        for (auto& v : policy_engine_->evaluate(events[i], user, labels[i])) {
            store_->append_violation(v);
            ++counts.violations;
            Alert a;
            a.created_at = v.fired_at;
            a.subject = v.user_id;
            a.origin = AlertOrigin::PolicyViolation;
            a.origin_ref = v.violation_id;
            a.severity = v.severity;
            a.score = severity_score(v.severity);
            if (auto it = last_ai_.find(v.user_id); it != last_ai_.end()) {
                a.s_ai = it->second.first;
                a.features = it->second.second;
            }
            raise_alert(std::move(a), counts);
        }
    }
    return counts;
}

PipelineCounts Engine::flush() {
    PipelineCounts counts;
    score_sessions(sessionizer_.flush(), counts);
    return counts;
}

PipelineCounts Engine::close_idle(Timestamp now) {
    PipelineCounts counts;
    score_sessions(sessionizer_.close_idle(now), counts);
    return counts;
}

std::size_t Engine::actions_in_window(const std::string& user, Timestamp end) const {
    const auto counts = store_->activity_counts(user, end - prism_.cumulative.window, end);
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

void Engine::score_sessions(std::vector<Session> sessions, PipelineCounts& counts) {
    std::sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
        if (a.end != b.end) return a.end < b.end;
        return a.session_id < b.session_id;
    });
    for (auto& s : sessions) {
        const auto user = tables_users_.resolve(s.user_id);
        auto score = score_session(s, user, prism_, reputation_, actions_in_window(s.user_id, s.end));
        const bool sensitive = std::any_of(s.events.begin(), s.events.end(),
                                           [](const ActivityEvent& e) { return !e.extra(kSensitivityKey).empty(); });
        const auto features = featurize(s, user, score.breakdown, sensitive);

        if (!airs_.has_model()) {
            bootstrap_.push_back({features, score.normalized});
            const auto normal = std::count_if(bootstrap_.begin(), bootstrap_.end(), [&](const LabeledVector& lv) {
                return lv.prism_normalized < prism_.alert_threshold;
            });
            if (static_cast<std::size_t>(normal) >= std::max(cfg_.bootstrap_sessions, cfg_.airs.min_baseline)) {
                bootstrap_airs();
            }
        }

        SessionScoreRow row;
        row.session_id = s.session_id;
        row.user_id = s.user_id;
        row.start = s.start;
        row.end = s.end;
        row.event_count = s.events.size();
        row.prism = score;
        row.features = features;
        row.s_ai = airs_.score(features);
        store_->append_session(row);
        ++counts.sessions_scored;

        if (row.s_ai) {
            last_ai_[s.user_id] = {*row.s_ai, features};
            auto it = profiles_.find(s.user_id);
            if (it == profiles_.end()) {
                RiskProfile fresh;
                fresh.user_id = s.user_id;
                if (auto stored = store_->profile(s.user_id)) fresh = *stored;
                it = profiles_.emplace(s.user_id, std::move(fresh)).first;
            }
            auto [profile, cumulative] = update_profile(it->second, *row.s_ai, s.end, profile_cfg_);
            it->second = profile;
            store_->put_profile(profile);
            if (cumulative) {
                Alert a;
                a.created_at = cumulative->at;
                a.subject = s.user_id;
                a.origin = AlertOrigin::CumulativeRisk;
                a.origin_ref = s.session_id;
                a.severity = Severity::High;
                a.score = std::min(1.0, cumulative->cumulative_risk / (2.0 * profile_cfg_.alert_threshold));
                a.s_ai = row.s_ai;
                a.features = features;
                raise_alert(std::move(a), counts);
            }
        }

        if (score.normalized >= prism_.alert_threshold) {
            Alert a;
            a.created_at = s.end;
            a.subject = s.user_id;
            a.origin = AlertOrigin::ScoreThreshold;
            a.origin_ref = s.session_id;
            a.severity = severity_for_band(score.band);
            a.score = score.normalized;
            a.risk_score = score;
            a.s_ai = row.s_ai;
            a.features = features;
            raise_alert(std::move(a), counts);
        }
    }
}

void Engine::bootstrap_airs() {
    auto result = train_initial(bootstrap_, prism_.alert_threshold, cfg_.airs);
    airs_.set_baseline(result.train_set, result.holdout_set);
    result.model.save(cfg_.data_dir / "model.json");
    Json doc;
    doc["train"] = Json::array();
    doc["holdout"] = Json::array();
    for (const auto& v : airs_.baseline()) doc["train"].push_back(to_json(v));
    for (const auto& v : airs_.holdout()) doc["holdout"].push_back(to_json(v));
    std::ofstream(cfg_.data_dir / "baseline.json") << doc.dump();
    airs_.publish(std::move(result.model));
    bootstrap_.clear();
}

void Engine::raise_alert(Alert alert, PipelineCounts& counts) {
    alert.alert_id = store_->next_alert_id();
    store_->upsert_alert(alert);
    ++counts.alerts;
    if (cfg_.recommend_command.empty()) {
        recommend(alert.alert_id);
    } else {
        std::lock_guard lock(rec_mu_);
        rec_queue_.push_back(alert.alert_id);
        rec_cv_.notify_one();
    }
}

std::optional<Recommendation> Engine::recommend(const std::string& alert_id) {
    ContextSources src{*store_, tables_users_, policies_, reputation_, prism_};
    const auto ctx = assemble_context(alert_id, src);
    auto rec = generator_->generate(ctx);
    store_->attach_recommendation(alert_id, to_json(rec).dump());
    return rec;
}

void Engine::recommend_loop() {
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(rec_mu_);
            rec_cv_.wait(lock, [&] {
                std::lock_guard t(train_mu_);
                return stop_ || !rec_queue_.empty();
            });
            if (rec_queue_.empty()) return;
            id = rec_queue_.front();
            rec_queue_.pop_front();
            ++rec_busy_;
        }
        try {
            recommend(id);
        } catch (const std::exception&) {
            // The alert stands without a recommendation.
        }
        {
            std::lock_guard lock(rec_mu_);
            --rec_busy_;
        }
        rec_cv_.notify_all();
    }
}

void Engine::wait_for_recommendations() {
    std::unique_lock lock(rec_mu_);
    rec_cv_.wait(lock, [&] { return rec_queue_.empty() && rec_busy_ == 0; });
}

FeedbackRecord Engine::submit_feedback(const std::string& alert_id, double s_user, const std::string& analyst,
                                       const std::string& note, Timestamp at) {
    (void)note;
    if (!(s_user >= 0.0 && s_user <= 1.0)) throw Error(ErrorCode::OutOfRange, "S_user must be in [0,1]");
    const auto alert = store_->get_alert(alert_id);
    if (!alert) throw Error(ErrorCode::AlertNotFound, "no alert " + alert_id);
    if (!alert->s_ai || !alert->features) {
        throw Error(ErrorCode::Precondition, "alert " + alert_id + " has no AI score to adjust");
    }
    auto record = make_feedback(alert_id, *alert->features, *alert->s_ai, s_user, airs_.alpha(), analyst, at);
    airs_.feedback().add(record);
    store_->append_feedback(record);
    store_->attach_feedback(alert_id, "feedback:" + alert_id + ":" + std::to_string(store_->feedback().size()));
    maybe_schedule_retrain();
    return record;
}

Alert Engine::transition(const std::string& alert_id, AlertStatus to, const std::string& note, Timestamp at) {
    return store_->transition_alert(alert_id, to, note, at);
}

std::optional<AutoencoderModel> Engine::retrain(bool force) {
    const auto pending = airs_.feedback().unconsumed_count();
    auto model = airs_.maybe_retrain(force);
    if (!model) return model;
    if (pending) store_->mark_feedback_consumed(pending);
    model->save(cfg_.data_dir / "model.json");
    std::lock_guard lock(train_mu_);
    ++retrains_;
    return model;
}

void Engine::maybe_schedule_retrain() {
    if (airs_.feedback().unconsumed_count() < airs_.n_threshold()) return;
    std::lock_guard lock(train_mu_);
    train_requested_ = true;
    train_cv_.notify_all();
}

void Engine::training_loop() {
    std::unique_lock lock(train_mu_);
    for (;;) {
        train_cv_.wait(lock, [&] { return stop_ || train_requested_; });
        if (stop_) return;
        train_requested_ = false;
        training_ = true;
        lock.unlock();
        try {
            retrain(false);
        } catch (const std::exception&) {
            // Keep serving the previous model.
        }
        lock.lock();
        training_ = false;
        train_cv_.notify_all();
    }
}

void Engine::wait_for_training() {
    std::unique_lock lock(train_mu_);
    train_cv_.wait(lock, [&] { return !train_requested_ && !training_; });
}

Service::Service(ServiceConfig cfg) : engine_(std::move(cfg)) {
    worker_ = std::thread([this] { worker(); });
}

Service::~Service() {
    {
        std::lock_guard lock(queue_mu_);
        stop_ = true;
    }
    queue_cv_.notify_all();
    space_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::future<PipelineCounts> Service::submit(std::vector<RowOutcome> rows) {
    std::unique_lock lock(queue_mu_);
    space_cv_.wait(lock, [&] { return stop_ || queue_.size() < engine_.config().queue_capacity; });
    Job job{std::move(rows), {}};
    auto fut = job.done.get_future();
    if (stop_) {
        job.done.set_exception(std::make_exception_ptr(Error(ErrorCode::Precondition, "service stopping")));
        return fut;
    }
    queue_.push_back(std::move(job));
    queue_cv_.notify_one();
    return fut;
}

void Service::worker() {
    for (;;) {
        std::vector<Job> jobs;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (queue_.empty()) return;
            while (!queue_.empty()) {
                jobs.push_back(std::move(queue_.front()));
                queue_.pop_front();
            }
        }
        space_cv_.notify_all();
        // Everything waiting runs under one sync; callers hear back only
        // once the group is durable.
        std::vector<std::variant<PipelineCounts, std::exception_ptr>> results;
        std::exception_ptr sync_error;
        {
            std::lock_guard lock(engine_mu_);
            engine_.store().begin_group();
            for (auto& job : jobs) {
                try {
                    results.emplace_back(engine_.run_pipeline(std::move(job.rows)));
                } catch (...) {
                    results.emplace_back(std::current_exception());
                }
            }
            try {
                engine_.store().end_group();
            } catch (...) {
                sync_error = std::current_exception();
            }
        }
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (sync_error) jobs[i].done.set_exception(sync_error);
            else if (auto* c = std::get_if<PipelineCounts>(&results[i])) jobs[i].done.set_value(std::move(*c));
            else jobs[i].done.set_exception(std::get<std::exception_ptr>(results[i]));
        }
    }
}

PipelineCounts ingest_directory(Engine& engine, const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::NotFound, "no such directory: " + dir.string());
    CertDirectoryReader reader(dir, engine.parse_options());
    PipelineCounts counts;
    std::vector<RowOutcome> batch;
    const std::size_t n = std::max<std::size_t>(1, engine.config().batch_size);
    while (auto r = reader.next()) {
        batch.push_back(std::move(*r));
        if (batch.size() >= n) {
            counts += engine.run_pipeline(std::move(batch));
            batch.clear();
        }
    }
    if (!batch.empty()) counts += engine.run_pipeline(std::move(batch));
    counts += engine.flush();
    return counts;
}

}  // namespace irm
