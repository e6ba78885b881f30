#pragma once

#include "irm/autoencoder.hpp"
#include "irm/prism.hpp"

#include <array>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace irm {

inline constexpr std::size_t kFeatureDim = 10;
inline constexpr int kFeatureSchemaVersion = 1;

// [privilege, activity, context, ip, off_hours, device, cumulative,
//  event_count, distinct_apps, sensitive_touched], every entry in [0,1].
struct FeatureVector {
    std::array<double, kFeatureDim> values{};
    int schema_version = kFeatureSchemaVersion;

    bool operator==(const FeatureVector&) const = default;
};

struct FeatureCaps {
    double activity = 50.0;
    double context = 10.0;
    double device = 10.0;
    double cumulative = 50.0;
    double events = 100.0;
    double apps = 6.0;
};

// Throws SchemaMismatch when the breakdown does not describe this session.
FeatureVector featurize(const Session& session, const UserRecord& user, const FactorBreakdown& breakdown,
                        bool sensitive_file_touched, const FeatureCaps& caps = {});

// S_final = S_AI + alpha (S_user - S_AI); throws OutOfRange outside [0,1].
double blend_feedback(double s_ai, double s_user, double alpha);

struct FeedbackRecord {
    std::string alert_id;
    FeatureVector features;
    double s_ai = 0.0;
    double s_user = 0.0;
    double alpha_used = 0.0;
    double s_final = 0.0;
    std::string analyst_id;
    Timestamp created_at{};
    bool consumed_in_retrain = false;
};

FeedbackRecord make_feedback(std::string alert_id, const FeatureVector& features, double s_ai, double s_user,
                             double alpha, std::string analyst_id, Timestamp at);

// Serialises writes; readers take copies.
class FeedbackStore {
public:
    void add(FeedbackRecord record);
    std::vector<FeedbackRecord> all() const;
    std::vector<FeedbackRecord> unconsumed() const;
    std::size_t unconsumed_count() const;
    std::size_t size() const;
    void mark_consumed(std::size_t count_from_front_of_unconsumed);
    std::optional<FeedbackRecord> latest_for(const std::string& alert_id) const;

private:
    mutable std::mutex mu_;
    std::vector<FeedbackRecord> records_;
};

struct AirsHyper {
    TrainHyper initial{};
    TrainHyper finetune{100, 0.05, 0, 11};
    double feedback_weight = 3.0;
    std::size_t min_baseline = 100;
    std::size_t reservoir_capacity = 2000;
    double holdout_fraction = 0.2;
};

struct LabeledVector {
    FeatureVector features;
    double prism_normalized = 0.0;
};

struct TrainResult {
    AutoencoderModel model;
    std::vector<FeatureVector> train_set;
    std::vector<FeatureVector> holdout_set;
    std::vector<double> loss_history;
};

inline const std::vector<std::size_t> kDefaultLayerSizes{10, 6, 3, 6, 10};

// Trains on vectors whose PRISM score is below `alert_threshold`; needs at
// least hyper.min_baseline of them (InsufficientData otherwise). Calibration
// percentiles come from a held-out split.
TrainResult train_initial(std::span<const LabeledVector> dataset, double alert_threshold, const AirsHyper& hyper);

// p05/p95 of reconstruction errors over `vectors`.
Calibration calibrate(const AutoencoderModel& model, std::span<const FeatureVector> vectors);

double score_vector(const AutoencoderModel& model, const FeatureVector& v);

// Holds the published model snapshot, the baseline reservoir and the
// feedback store. Scorers read an immutable snapshot; publication swaps the
// whole model under a lock.
class AirsEngine {
public:
    explicit AirsEngine(AirsHyper hyper = {}, double alpha = 0.5, std::size_t n_threshold = 50);

    std::shared_ptr<const AutoencoderModel> model() const;
    void publish(AutoencoderModel model);
    bool has_model() const { return model() != nullptr; }

    void set_baseline(std::vector<FeatureVector> train_set, std::vector<FeatureVector> holdout_set);
    const std::vector<FeatureVector>& baseline() const { return baseline_; }
    const std::vector<FeatureVector>& holdout() const { return holdout_; }

    // S_AI under the current snapshot; nullopt when no model is published.
    std::optional<double> score(const FeatureVector& v) const;

    FeedbackStore& feedback() { return feedback_; }
    const FeedbackStore& feedback() const { return feedback_; }
    double alpha() const { return alpha_; }
    std::size_t n_threshold() const { return n_threshold_; }

    // Retrains when unconsumed feedback >= n_threshold (or `force` with at
    // least one record, or `force` with none: a plain refit of the baseline).
    // Publishes and returns the new model.
    std::optional<AutoencoderModel> maybe_retrain(bool force = false);

private:
    AirsHyper hyper_;
    double alpha_;
    std::size_t n_threshold_;
    mutable std::mutex model_mu_;
    std::shared_ptr<const AutoencoderModel> model_;
    std::mutex train_mu_;
    std::vector<FeatureVector> baseline_;
    std::vector<FeatureVector> holdout_;
    FeedbackStore feedback_;
};

// Exponentially decayed running sum of blended scores per user.
struct RiskProfile {
    std::string user_id;
    double cumulative_risk = 0.0;
    std::optional<Timestamp> last_update;
    std::optional<Timestamp> last_alert_at;
    std::deque<double> history;  // last kProfileHistory scores

    static constexpr std::size_t kProfileHistory = 1000;
};

struct ProfileConfig {
    Seconds half_life = std::chrono::hours{24 * 7};
    double alert_threshold = 5.0;
};

struct CumulativeAlert {
    std::string user_id;
    double cumulative_risk = 0.0;
    Timestamp at{};
};

double decay_factor(Seconds elapsed, Seconds half_life);

// Decays to `at`, adds s_final and reports an upward threshold crossing.
std::pair<RiskProfile, std::optional<CumulativeAlert>> update_profile(RiskProfile profile, double s_final,
                                                                       Timestamp at, const ProfileConfig& cfg = {});

}  // namespace irm
