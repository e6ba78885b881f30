#pragma once

#include "irm/airs.hpp"
#include "irm/json_io.hpp"
#include "irm/service.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace irm {

enum class Truth { Benign, Malicious };

std::string_view to_string(Truth t);

struct LabelRow {
    std::string session_id;
    Truth truth = Truth::Benign;
    std::string note;
};

// `session_id,label,note` with a header row; label is benign or malicious.
std::vector<LabelRow> parse_labels_csv(const std::string& text);
std::vector<LabelRow> load_labels(const std::filesystem::path& path);

// `session_id,score` with a header row.
std::map<std::string, double> parse_scores_csv(const std::string& text);
std::map<std::string, double> load_scores(const std::filesystem::path& path);

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    // Rates are 0 when their denominator is empty.
    double fpr() const;
    double tpr() const;
    double fnr() const;

    bool operator==(const Confusion&) const = default;
};

Json to_json(const Confusion& c);

// Predicted malicious iff score >= threshold. Every labelled session needs a
// score; LabelMismatch otherwise. Extra scores are ignored.
Confusion confusion(const std::map<std::string, double>& scores, std::span<const LabelRow> labels, double threshold);

struct SweepPoint {
    double threshold = 0.0;
    Confusion counts;
};

// Thresholds i/(points-1) for i in [0, points).
std::vector<SweepPoint> threshold_sweep(const std::map<std::string, double>& scores, std::span<const LabelRow> labels,
                                        std::size_t points = 101);

struct EvalSample {
    std::string session_id;
    FeatureVector features;
    double prism = 0.0;
    Truth truth = Truth::Benign;
};

struct CurveRow {
    std::size_t iteration = 0;
    std::uint64_t model_version = 0;
    Confusion holdout;
    std::size_t feedback_given = 0;
    // Mean |S_AI - S_user| over the records consumed by this iteration's
    // retrain, under the model before and after it. Absent without feedback.
    std::optional<double> gap_before;
    std::optional<double> gap_after;
};

struct CurveOptions {
    std::size_t iterations = 2;
    double airs_threshold = 0.9;
    double prism_threshold = 0.3;
    double benign_score = 0.05;
    double malicious_score = 0.95;
};

// Simulated analyst loop. The feedback pool is cut into `iterations` chunks;
// in iteration i the analyst reviews chunk i (sessions flagged by PRISM or
// AIRS) and scores each one by its label, then the model is retrained. An
// iteration with no reviews keeps the model. Row 0 is the starting model.
// The engine needs a published model; iterations < 2 is a Precondition error.
std::vector<CurveRow> feedback_curve(AirsEngine& airs, std::span<const EvalSample> feedback_pool,
                                     std::span<const EvalSample> holdout, const CurveOptions& opts);

struct ScorerMetrics {
    std::string name;
    double threshold = 0.0;
    Confusion counts;
};

struct EvalReport {
    std::string fixture;
    std::string generated_at;
    std::size_t labelled = 0;
    std::size_t baseline = 0;
    std::vector<ScorerMetrics> scorers;  // evaluated on the holdout split
    std::vector<SweepPoint> prism_sweep;
    std::vector<SweepPoint> airs_sweep;  // final model
    std::vector<CurveRow> curve;
};

Json to_json(const EvalReport& r);

struct EvalOptions {
    CurveOptions curve;
    std::string generated_at;
    std::size_t sweep_points = 101;
};

// Runs the fixture through a scratch engine, trains AIRS on the unlabelled
// PRISM-normal sessions and evaluates the labelled ones. Labels whose note is
// `feedback` feed the analyst loop; the rest form the holdout.
EvalReport run_eval(ServiceConfig cfg, const std::filesystem::path& fixture_dir, std::span<const LabelRow> labels,
                    const EvalOptions& opts = {});

// metrics.json, confusion.csv, sweep.csv, feedback_curve.csv and plot.json.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

struct SynthOptions {
    std::uint64_t seed = 42;
    std::size_t labelled = 200;
    double malicious_fraction = 0.1;
    std::size_t background = 400;
};

struct SynthSummary {
    std::size_t events = 0;
    std::size_t sessions = 0;
    std::size_t malicious = 0;
    std::size_t remote_benign = 0;
};

// Writes a CERT-style fixture (logon/device/file CSVs, users, devices, trusted
// IPs, column mapping, labels and a service config) into `dir`. Output depends
// only on the options.
SynthSummary generate_synthetic(const std::filesystem::path& dir, const SynthOptions& opts = {});

}  // namespace irm
