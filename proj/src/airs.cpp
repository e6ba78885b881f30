#include "irm/airs.hpp"

#include "irm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace irm {

namespace {

double scaled(double value, double cap) { return std::clamp(value / cap, 0.0, 1.0); }

double privilege_level(Privilege p) {
    switch (p) {
        case Privilege::High: return 0.0;
        case Privilege::Moderate: return 0.5;
        case Privilege::Low:
        case Privilege::Guest: return 1.0;
    }
    return 1.0;
}

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfRange, std::string(name) + " must be in [0,1]");
}

}  // namespace

FeatureVector featurize(const Session& session, const UserRecord& user, const FactorBreakdown& breakdown,
                        bool sensitive_file_touched, const FeatureCaps& caps) {
    if (breakdown.per_event.size() != session.events.size()) {
        throw Error(ErrorCode::SchemaMismatch, "breakdown does not cover session " + session.session_id);
    }
    for (double f : {breakdown.activity, breakdown.context, breakdown.ip, breakdown.hours, breakdown.device,
                     breakdown.cumulative}) {
        if (!std::isfinite(f)) throw Error(ErrorCode::SchemaMismatch, "breakdown has a missing factor");
    }
    std::set<AppContext> apps;
    for (const auto& e : session.events) {
        if (e.app_context != AppContext::Unknown) apps.insert(e.app_context);
    }
    FeatureVector v;
    v.values = {privilege_level(user.privilege),
                scaled(breakdown.activity, caps.activity),
                scaled(breakdown.context, caps.context),
                breakdown.ip > 0 ? 1.0 : 0.0,
                breakdown.hours > 0 ? 1.0 : 0.0,
                scaled(breakdown.device, caps.device),
                scaled(breakdown.cumulative, caps.cumulative),
                scaled(static_cast<double>(session.events.size()), caps.events),
                scaled(static_cast<double>(apps.size()), caps.apps),
                sensitive_file_touched ? 1.0 : 0.0};
    return v;
}

double blend_feedback(double s_ai, double s_user, double alpha) {
    check_unit(s_ai, "S_AI");
    check_unit(s_user, "S_user");
    check_unit(alpha, "alpha");
    return s_ai + alpha * (s_user - s_ai);
}

FeedbackRecord make_feedback(std::string alert_id, const FeatureVector& features, double s_ai, double s_user,
                             double alpha, std::string analyst_id, Timestamp at) {
    FeedbackRecord r;
    r.alert_id = std::move(alert_id);
    r.features = features;
    r.s_ai = s_ai;
    r.s_user = s_user;
    r.alpha_used = alpha;
    r.s_final = blend_feedback(s_ai, s_user, alpha);
    r.analyst_id = std::move(analyst_id);
    r.created_at = at;
    return r;
}

void FeedbackStore::add(FeedbackRecord record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
}

std::vector<FeedbackRecord> FeedbackStore::all() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<FeedbackRecord> FeedbackStore::unconsumed() const {
    std::lock_guard lock(mu_);
    std::vector<FeedbackRecord> out;
    for (const auto& r : records_) {
        if (!r.consumed_in_retrain) out.push_back(r);
    }
    return out;
}

std::size_t FeedbackStore::unconsumed_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const auto& r) { return !r.consumed_in_retrain; }));
}

std::size_t FeedbackStore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

void FeedbackStore::mark_consumed(std::size_t count) {
    std::lock_guard lock(mu_);
    for (auto& r : records_) {
        if (count == 0) break;
        if (!r.consumed_in_retrain) {
            r.consumed_in_retrain = true;
            --count;
        }
    }
}

std::optional<FeedbackRecord> FeedbackStore::latest_for(const std::string& alert_id) const {
    std::lock_guard lock(mu_);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->alert_id == alert_id) return *it;
    }
    return std::nullopt;
}

Calibration calibrate(const AutoencoderModel& model, std::span<const FeatureVector> vectors) {
    std::vector<double> errs;
    errs.reserve(vectors.size());
    for (const auto& v : vectors) errs.push_back(reconstruction_error(v.values, model.forward(v.values)));
    Calibration cal;
    cal.err_p05 = percentile(errs, 0.05);
    cal.err_p95 = percentile(errs, 0.95);
    if (!(cal.err_p95 > cal.err_p05)) cal.err_p95 = cal.err_p05 + 1e-12;
    cal.calibrated = true;
    return cal;
}

double score_vector(const AutoencoderModel& model, const FeatureVector& v) {
    return normalize_error(reconstruction_error(v.values, model.forward(v.values)), model.calibration);
}

TrainResult train_initial(std::span<const LabeledVector> dataset, double alert_threshold, const AirsHyper& hyper) {
    std::vector<FeatureVector> normal;
    for (const auto& lv : dataset) {
        if (lv.prism_normalized < alert_threshold) normal.push_back(lv.features);
    }
    if (normal.size() < hyper.min_baseline) {
        throw Error(ErrorCode::InsufficientData, "need " + std::to_string(hyper.min_baseline) +
                                                     " baseline samples, have " + std::to_string(normal.size()));
    }

    std::mt19937_64 rng(hyper.initial.seed);
    std::shuffle(normal.begin(), normal.end(), rng);
    const auto holdout_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(hyper.holdout_fraction * static_cast<double>(normal.size()))));

    TrainResult result;
    result.holdout_set.assign(normal.end() - static_cast<std::ptrdiff_t>(holdout_n), normal.end());
    result.train_set.assign(normal.begin(), normal.end() - static_cast<std::ptrdiff_t>(holdout_n));

    std::vector<TrainingSample> samples;
    samples.reserve(result.train_set.size());
    for (const auto& v : result.train_set) samples.push_back({{v.values.begin(), v.values.end()}, 1.0, std::nullopt});

    result.model = AutoencoderModel::initialise(kDefaultLayerSizes, hyper.initial.seed);
    result.loss_history = train(result.model, samples, Calibration{}, hyper.initial);
    result.model.calibration = calibrate(result.model, result.holdout_set);
    result.model.trained_on = samples.size();
    result.model.version = 1;
    result.model.schema_version = kFeatureSchemaVersion;
    return result;
}

AirsEngine::AirsEngine(AirsHyper hyper, double alpha, std::size_t n_threshold)
    : hyper_(std::move(hyper)), alpha_(alpha), n_threshold_(n_threshold) {
    check_unit(alpha_, "alpha");
}

std::shared_ptr<const AutoencoderModel> AirsEngine::model() const {
    std::lock_guard lock(model_mu_);
    return model_;
}

void AirsEngine::publish(AutoencoderModel model) {
    auto snapshot = std::make_shared<const AutoencoderModel>(std::move(model));
    std::lock_guard lock(model_mu_);
    model_ = std::move(snapshot);
}

void AirsEngine::set_baseline(std::vector<FeatureVector> train_set, std::vector<FeatureVector> holdout_set) {
    std::lock_guard lock(train_mu_);
    if (train_set.size() > hyper_.reservoir_capacity) {
        // Reservoir sample down to capacity, deterministically.
        std::mt19937_64 rng(hyper_.finetune.seed);
        std::vector<FeatureVector> reservoir(train_set.begin(),
                                             train_set.begin() + static_cast<std::ptrdiff_t>(hyper_.reservoir_capacity));
        for (std::size_t i = hyper_.reservoir_capacity; i < train_set.size(); ++i) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            const auto j = pick(rng);
            if (j < reservoir.size()) reservoir[j] = train_set[i];
        }
        train_set = std::move(reservoir);
    }
    baseline_ = std::move(train_set);
    holdout_ = std::move(holdout_set);
}

std::optional<double> AirsEngine::score(const FeatureVector& v) const {
    auto m = model();
    if (!m) return std::nullopt;
    return score_vector(*m, v);
}

std::optional<AutoencoderModel> AirsEngine::maybe_retrain(bool force) {
    std::lock_guard lock(train_mu_);
    const auto pending = feedback_.unconsumed();
    if (!force && pending.size() < n_threshold_) return std::nullopt;
    auto current = model();
    if (!current) return std::nullopt;

    // Vectors analysts scored above the model leave the baseline mix.
    std::vector<FeatureVector> raised;
    for (const auto& r : pending) {
        if (r.s_user > r.s_ai) raised.push_back(r.features);
    }
    std::vector<TrainingSample> samples;
    samples.reserve(baseline_.size() + pending.size());
    for (const auto& v : baseline_) {
        if (std::find(raised.begin(), raised.end(), v) != raised.end()) continue;
        samples.push_back({{v.values.begin(), v.values.end()}, 1.0, std::nullopt});
    }
    for (const auto& r : pending) {
        samples.push_back({{r.features.values.begin(), r.features.values.end()}, hyper_.feedback_weight, r.s_user});
    }

    AutoencoderModel next = *current;
    train(next, samples, current->calibration, hyper_.finetune);
    if (!holdout_.empty()) next.calibration = calibrate(next, holdout_);
    next.version = current->version + 1;
    next.trained_on = current->trained_on + samples.size();

    feedback_.mark_consumed(pending.size());
    publish(next);
    return next;
}

double decay_factor(Seconds elapsed, Seconds half_life) {
    if (elapsed.count() <= 0) return 1.0;
    return std::exp2(-static_cast<double>(elapsed.count()) / static_cast<double>(half_life.count()));
}

std::pair<RiskProfile, std::optional<CumulativeAlert>> update_profile(RiskProfile profile, double s_final,
                                                                       Timestamp at, const ProfileConfig& cfg) {
    check_unit(s_final, "S_final");
    if (profile.last_update) profile.cumulative_risk *= decay_factor(at - *profile.last_update, cfg.half_life);
    const double before = profile.cumulative_risk;
    profile.cumulative_risk = std::max(0.0, before + s_final);
    profile.last_update = at;
    profile.history.push_back(s_final);
    while (profile.history.size() > RiskProfile::kProfileHistory) profile.history.pop_front();

    std::optional<CumulativeAlert> alert;
    if (before < cfg.alert_threshold && profile.cumulative_risk >= cfg.alert_threshold) {
        alert = CumulativeAlert{profile.user_id, profile.cumulative_risk, at};
        profile.last_alert_at = at;
    }
    return {std::move(profile), alert};
}

}  // namespace irm
