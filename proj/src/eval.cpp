#include "irm/eval.hpp"

#include "irm/error.hpp"
#include "irm/ingest.hpp"
#include "irm/time_util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unistd.h>

namespace irm {

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text, std::string_view first_header) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (first) {
            first = false;
            if (!fields.empty() && fields[0] == first_header) continue;
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

double rate(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> mean_gap(const AutoencoderModel& model, const std::vector<FeedbackRecord>& records) {
    if (records.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& r : records) sum += std::abs(score_vector(model, r.features) - r.s_user);
    return sum / static_cast<double>(records.size());
}

Confusion score_holdout(const AutoencoderModel& model, std::span<const EvalSample> holdout, double threshold) {
    Confusion c;
    for (const auto& s : holdout) {
        const bool flagged = score_vector(model, s.features) >= threshold;
        const bool bad = s.truth == Truth::Malicious;
        if (flagged && bad) ++c.tp;
        else if (flagged) ++c.fp;
        else if (bad) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Json sweep_json(const std::vector<SweepPoint>& sweep) {
    auto arr = Json::array();
    for (const auto& p : sweep) {
        arr.push_back({{"threshold", p.threshold},
                       {"fpr", p.counts.fpr()},
                       {"tpr", p.counts.tpr()},
                       {"fnr", p.counts.fnr()}});
    }
    return arr;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("irm-eval-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace

std::string_view to_string(Truth t) { return t == Truth::Malicious ? "malicious" : "benign"; }

std::vector<LabelRow> parse_labels_csv(const std::string& text) {
    std::vector<LabelRow> out;
    std::set<std::string> seen;
    for (auto& f : csv_rows(text, "session_id")) {
        if (f.size() < 2) throw Error(ErrorCode::MalformedRow, "label row needs session_id,label");
        LabelRow r;
        r.session_id = std::string(trim(f[0]));
        const auto label = lower(trim(f[1]));
        if (label == "malicious") r.truth = Truth::Malicious;
        else if (label == "benign") r.truth = Truth::Benign;
        else throw Error(ErrorCode::MalformedRow, "unknown label: " + label);
        if (f.size() > 2) r.note = std::string(trim(f[2]));
        if (!seen.insert(r.session_id).second) {
            throw Error(ErrorCode::LabelMismatch, "session labelled twice: " + r.session_id);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<LabelRow> load_labels(const std::filesystem::path& path) { return parse_labels_csv(slurp(path)); }

std::map<std::string, double> parse_scores_csv(const std::string& text) {
    std::map<std::string, double> out;
    for (auto& f : csv_rows(text, "session_id")) {
        if (f.size() < 2) throw Error(ErrorCode::MalformedRow, "score row needs session_id,score");
        try {
            out[std::string(trim(f[0]))] = std::stod(f[1]);
        } catch (const std::exception&) {
            throw Error(ErrorCode::MalformedRow, "bad score: " + f[1]);
        }
    }
    return out;
}

std::map<std::string, double> load_scores(const std::filesystem::path& path) { return parse_scores_csv(slurp(path)); }

double Confusion::fpr() const { return rate(fp, fp + tn); }
double Confusion::tpr() const { return rate(tp, tp + fn); }
double Confusion::fnr() const { return rate(fn, tp + fn); }

Json to_json(const Confusion& c) {
    return Json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn},
                {"fpr", c.fpr()}, {"tpr", c.tpr()}, {"fnr", c.fnr()}};
}

Confusion confusion(const std::map<std::string, double>& scores, std::span<const LabelRow> labels, double threshold) {
    std::size_t missing = 0;
    std::string first_missing;
    Confusion c;
    for (const auto& l : labels) {
        auto it = scores.find(l.session_id);
        if (it == scores.end()) {
            if (missing++ == 0) first_missing = l.session_id;
            continue;
        }
        const bool flagged = it->second >= threshold;
        const bool bad = l.truth == Truth::Malicious;
        if (flagged && bad) ++c.tp;
        else if (flagged) ++c.fp;
        else if (bad) ++c.fn;
        else ++c.tn;
    }
    if (missing > 0) {
        throw Error(ErrorCode::LabelMismatch, std::to_string(missing) + " labelled sessions have no score (first: " +
                                                  first_missing + ")");
    }
    return c;
}

std::vector<SweepPoint> threshold_sweep(const std::map<std::string, double>& scores, std::span<const LabelRow> labels,
                                        std::size_t points) {
    if (points < 2) throw Error(ErrorCode::OutOfRange, "a sweep needs at least two points");
    std::vector<SweepPoint> out;
    out.reserve(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(points - 1);
        out.push_back({t, confusion(scores, labels, t)});
    }
    return out;
}

std::vector<CurveRow> feedback_curve(AirsEngine& airs, std::span<const EvalSample> feedback_pool,
                                     std::span<const EvalSample> holdout, const CurveOptions& opts) {
    if (opts.iterations < 2) throw Error(ErrorCode::Precondition, "a feedback curve needs at least two iterations");
    auto model = airs.model();
    if (!model) throw Error(ErrorCode::Precondition, "no AI model to evaluate");

    std::vector<CurveRow> rows;
    rows.push_back({0, model->version, score_holdout(*model, holdout, opts.airs_threshold), 0, {}, {}});

    const std::size_t chunk = (feedback_pool.size() + opts.iterations - 1) / opts.iterations;
    for (std::size_t it = 1; it <= opts.iterations; ++it) {
        model = airs.model();
        const std::size_t begin = std::min(feedback_pool.size(), (it - 1) * chunk);
        const std::size_t end = std::min(feedback_pool.size(), begin + chunk);
        std::vector<FeedbackRecord> given;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = feedback_pool[i];
            const double s_ai = score_vector(*model, s.features);
            if (s.prism < opts.prism_threshold && s_ai < opts.airs_threshold) continue;
            const double s_user = s.truth == Truth::Malicious ? opts.malicious_score : opts.benign_score;
            auto rec = make_feedback(s.session_id, s.features, s_ai, s_user, airs.alpha(), "simulated", Timestamp{});
            airs.feedback().add(rec);
            given.push_back(std::move(rec));
        }
        CurveRow row;
        row.iteration = it;
        row.feedback_given = given.size();
        if (!given.empty()) {
            row.gap_before = mean_gap(*model, given);
            airs.maybe_retrain(true);
            model = airs.model();
            row.gap_after = mean_gap(*model, given);
        }
        row.model_version = model->version;
        row.holdout = score_holdout(*model, holdout, opts.airs_threshold);
        rows.push_back(std::move(row));
    }
    return rows;
}

Json to_json(const EvalReport& r) {
    Json j;
    j["fixture"] = r.fixture;
    j["generated_at"] = r.generated_at;
    j["labelled_sessions"] = r.labelled;
    j["baseline_sessions"] = r.baseline;
    auto scorers = Json::array();
    for (const auto& s : r.scorers) {
        auto e = to_json(s.counts);
        e["name"] = s.name;
        e["threshold"] = s.threshold;
        scorers.push_back(std::move(e));
    }
    j["scorers"] = std::move(scorers);
    auto curve = Json::array();
    for (const auto& c : r.curve) {
        auto e = to_json(c.holdout);
        e["iteration"] = c.iteration;
        e["model_version"] = c.model_version;
        e["feedback_given"] = c.feedback_given;
        e["gap_before"] = optional_json(c.gap_before);
        e["gap_after"] = optional_json(c.gap_after);
        curve.push_back(std::move(e));
    }
    j["feedback_curve"] = std::move(curve);
    j["sweep"] = {{"PRISM", sweep_json(r.prism_sweep)}, {"AIRS", sweep_json(r.airs_sweep)}};
    return j;
}

EvalReport run_eval(ServiceConfig cfg, const std::filesystem::path& fixture_dir, std::span<const LabelRow> labels,
                    const EvalOptions& opts) {
    if (labels.empty()) throw Error(ErrorCode::LabelMismatch, "no labels");
    ScratchDir scratch;
    cfg.data_dir = scratch.path();
    cfg.sync = false;
    cfg.recommend_command.clear();
    cfg.bootstrap_sessions = std::numeric_limits<std::size_t>::max();

    std::vector<SessionScoreRow> rows;
    double prism_threshold = 0.3;
    {
        Engine engine(cfg);
        prism_threshold = engine.prism().alert_threshold;
        ingest_directory(engine, fixture_dir);
        rows = engine.store().sessions();
    }

    std::map<std::string, const SessionScoreRow*> by_id;
    for (const auto& r : rows) by_id[r.session_id] = &r;
    std::set<std::string> labelled_ids;
    for (const auto& l : labels) labelled_ids.insert(l.session_id);

    std::vector<LabeledVector> baseline;
    for (const auto& r : rows) {
        if (!labelled_ids.count(r.session_id)) baseline.push_back({r.features, r.prism.normalized});
    }

    std::vector<EvalSample> pool;
    std::vector<EvalSample> holdout;
    std::vector<LabelRow> holdout_labels;
    std::map<std::string, double> prism_scores;
    for (const auto& l : labels) {
        auto it = by_id.find(l.session_id);
        if (it == by_id.end()) continue;
        EvalSample s{l.session_id, it->second->features, it->second->prism.normalized, l.truth};
        if (lower(l.note) == "feedback") {
            pool.push_back(std::move(s));
        } else {
            prism_scores[s.session_id] = s.prism;
            holdout.push_back(std::move(s));
            holdout_labels.push_back(l);
        }
    }
    // Every label has to resolve to a scored session.
    std::map<std::string, double> all_scores;
    for (const auto& r : rows) all_scores[r.session_id] = r.prism.normalized;
    confusion(all_scores, labels, prism_threshold);

    auto trained = train_initial(baseline, prism_threshold, cfg.airs);
    AirsEngine airs(cfg.airs, cfg.alpha, cfg.n_threshold);
    airs.set_baseline(trained.train_set, trained.holdout_set);
    airs.publish(trained.model);

    EvalReport report;
    report.fixture = fixture_dir.filename().string();
    if (report.fixture.empty()) report.fixture = fixture_dir.parent_path().filename().string();
    report.generated_at = opts.generated_at;
    report.labelled = labels.size();
    report.baseline = trained.train_set.size() + trained.holdout_set.size();

    auto curve_opts = opts.curve;
    curve_opts.prism_threshold = prism_threshold;
    report.curve = feedback_curve(airs, pool, holdout, curve_opts);

    report.scorers.push_back({"PRISM", prism_threshold, confusion(prism_scores, holdout_labels, prism_threshold)});
    report.scorers.push_back({"AIRS_initial", curve_opts.airs_threshold, report.curve.front().holdout});
    report.scorers.push_back({"AIRS_final", curve_opts.airs_threshold, report.curve.back().holdout});

    std::map<std::string, double> airs_scores;
    auto model = airs.model();
    for (const auto& s : holdout) airs_scores[s.session_id] = score_vector(*model, s.features);
    report.prism_sweep = threshold_sweep(prism_scores, holdout_labels, opts.sweep_points);
    report.airs_sweep = threshold_sweep(airs_scores, holdout_labels, opts.sweep_points);
    return report;
}

void write_report(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    spit(out_dir / "metrics.json", to_json(report).dump(2) + "\n");

    std::string conf = "scorer,threshold,tp,fp,tn,fn,fpr,tpr,fnr\n";
    for (const auto& s : report.scorers) {
        conf += s.name + "," + fmt(s.threshold) + "," + std::to_string(s.counts.tp) + "," +
                std::to_string(s.counts.fp) + "," + std::to_string(s.counts.tn) + "," + std::to_string(s.counts.fn) +
                "," + fmt(s.counts.fpr()) + "," + fmt(s.counts.tpr()) + "," + fmt(s.counts.fnr()) + "\n";
    }
    spit(out_dir / "confusion.csv", conf);

    std::string sweep = "scorer,threshold,fpr,tpr,fnr\n";
    auto add_sweep = [&](const char* name, const std::vector<SweepPoint>& pts) {
        for (const auto& p : pts) {
            sweep += std::string(name) + "," + fmt(p.threshold) + "," + fmt(p.counts.fpr()) + "," +
                     fmt(p.counts.tpr()) + "," + fmt(p.counts.fnr()) + "\n";
        }
    };
    add_sweep("PRISM", report.prism_sweep);
    add_sweep("AIRS", report.airs_sweep);
    spit(out_dir / "sweep.csv", sweep);

    std::string curve = "iteration,model_version,feedback_given,fpr,tpr,fnr,gap_before,gap_after\n";
    for (const auto& c : report.curve) {
        curve += std::to_string(c.iteration) + "," + std::to_string(c.model_version) + "," +
                 std::to_string(c.feedback_given) + "," + fmt(c.holdout.fpr()) + "," + fmt(c.holdout.tpr()) + "," +
                 fmt(c.holdout.fnr()) + "," + (c.gap_before ? fmt(*c.gap_before) : "") + "," +
                 (c.gap_after ? fmt(*c.gap_after) : "") + "\n";
    }
    spit(out_dir / "feedback_curve.csv", curve);

    // Series ready for a line chart: x = iteration, one y array per rate.
    Json plot;
    auto x = Json::array(), fpr = Json::array(), fnr = Json::array(), tpr = Json::array();
    for (const auto& c : report.curve) {
        x.push_back(c.iteration);
        fpr.push_back(c.holdout.fpr());
        fnr.push_back(c.holdout.fnr());
        tpr.push_back(c.holdout.tpr());
    }
    plot["feedback_curve"] = {{"x", x}, {"fpr", fpr}, {"fnr", fnr}, {"tpr", tpr}};
    auto roc = [](const std::vector<SweepPoint>& pts) {
        auto fx = Json::array(), fy = Json::array();
        for (const auto& p : pts) {
            fx.push_back(p.counts.fpr());
            fy.push_back(p.counts.tpr());
        }
        return Json{{"fpr", fx}, {"tpr", fy}};
    };
    plot["roc"] = {{"PRISM", roc(report.prism_sweep)}, {"AIRS", roc(report.airs_sweep)}};
    spit(out_dir / "plot.json", plot.dump(2) + "\n");
}

// ---- synthetic fixture ----

namespace {

// Small deterministic generator; std distributions differ across libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }
    std::int64_t between(std::int64_t lo, std::int64_t hi) { return lo + static_cast<std::int64_t>(below(hi - lo + 1)); }
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 gen_;
};

enum class Kind { Office, Remote, Malicious };

struct SynthUser {
    std::string id;
    std::string department;
    std::string privilege;
    std::string device;
    bool remote = false;
};

struct Row {
    Timestamp ts;
    int source;  // 0 logon, 1 device, 2 file
    std::string id;
    std::string line;  // without the id
};

class Writer {
public:
    Writer(Rng& rng) : rng_(rng) {}

    std::string logon(Timestamp ts, const SynthUser& u, const std::string& device, const char* verb,
                      const std::string& ip) {
        auto id = next_id("L");
        rows_.push_back({ts, 0, id, format_cert_time(ts) + "," + u.id + "," + device + "," + verb + "," + ip});
        return id;
    }
    void device(Timestamp ts, const SynthUser& u, const std::string& device, const char* verb) {
        rows_.push_back({ts, 1, next_id("D"), format_cert_time(ts) + "," + u.id + "," + device + "," + verb});
    }
    void file(Timestamp ts, const SynthUser& u, const std::string& device, const std::string& name, Activity act,
              const std::string& app, const std::string& content) {
        rows_.push_back({ts, 2, next_id("F"),
                         format_cert_time(ts) + "," + u.id + "," + device + "," + name + "," +
                             std::string(to_string(act)) + "," + app + "," + content});
    }

    std::size_t size() const { return rows_.size(); }

    void flush(const std::filesystem::path& dir) {
        std::stable_sort(rows_.begin(), rows_.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
        std::string out[3] = {"id,date,user,pc,activity,ip\n", "id,date,user,pc,activity\n",
                              "id,date,user,pc,filename,activity,app,content\n"};
        for (const auto& r : rows_) out[r.source] += r.id + "," + r.line + "\n";
        spit(dir / "logon.csv", out[0]);
        spit(dir / "device.csv", out[1]);
        spit(dir / "file.csv", out[2]);
    }

private:
    std::string next_id(const char* prefix) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%07zu", prefix, ++seq_);
        return buf;
    }

    Rng& rng_;
    std::size_t seq_ = 0;
    std::vector<Row> rows_;
};

const std::vector<std::string> kOfficeDocs = {"roadmap", "minutes", "slides", "draft", "design", "notes", "report",
                                              "plan", "summary", "review"};
const std::vector<std::string> kSensitiveDocs = {"payroll_export", "patient_records", "salary_review",
                                                 "customer_ssn_list", "bank_accounts", "personnel_files"};
const std::vector<std::string> kOfficeApps = {"SharePoint", "OneDrive", "Teams", "LocalFS"};

// Builds one session; returns the id of its Login event.
std::string emit_session(Writer& w, Rng& rng, const SynthUser& u, Kind kind, Timestamp day) {
    std::int64_t start_s = 0;
    std::size_t n_files = 0;
    std::string ip;
    std::string device = u.device;
    switch (kind) {
        case Kind::Office:
            start_s = rng.between(9 * 3600, 14 * 3600);
            n_files = static_cast<std::size_t>(rng.between(2, 8));
            ip = "10.1." + std::to_string(rng.between(0, 20)) + "." + std::to_string(rng.between(2, 250));
            break;
        case Kind::Remote:
            start_s = rng.between(18 * 3600, 22 * 3600);
            n_files = static_cast<std::size_t>(rng.between(5, 11));
            ip = "203.0.113." + std::to_string(rng.between(2, 250));
            break;
        case Kind::Malicious:
            start_s = rng.between(22 * 3600, 26 * 3600);
            n_files = static_cast<std::size_t>(rng.between(16, 30));
            ip = "198.51.100." + std::to_string(rng.between(2, 250));
            device = "PC-X" + u.id.substr(1);
            break;
    }
    Timestamp t = day + Seconds{start_s};
    const auto login = w.logon(t, u, device, "Logon", ip);
    auto tick = [&](std::int64_t lo, std::int64_t hi) { t += Seconds{rng.between(lo, hi)}; };

    if (kind == Kind::Malicious) {
        tick(30, 120);
        w.device(t, u, device, "Connect");
    }
    std::vector<Activity> acts;
    if (kind == Kind::Office) {
        const std::vector<Activity> menu = {Activity::FileRead, Activity::FileWrite, Activity::FileCreate,
                                            Activity::FileUpload, Activity::FileShareInternal};
        for (std::size_t i = 0; i < n_files; ++i) acts.push_back(rng.pick(menu));
    } else if (kind == Kind::Remote) {
        // Enough reorganising work to cross the PRISM alert line from home.
        acts = {Activity::FileRename, Activity::FileMove, Activity::FileCreate, Activity::FileCreate,
                Activity::FileUpload};
        const std::vector<Activity> menu = {Activity::FileRead, Activity::FileWrite, Activity::FileCreate,
                                            Activity::FileUpload};
        while (acts.size() < n_files) acts.push_back(rng.pick(menu));
        rng.shuffle(acts);
    } else {
        const std::vector<Activity> menu = {Activity::FileRead, Activity::FileDelete, Activity::FileShareExternal,
                                            Activity::FileMove, Activity::FileUpload};
        for (std::size_t i = 0; i < n_files; ++i) acts.push_back(rng.pick(menu));
    }
    for (auto act : acts) {
        tick(kind == Kind::Malicious ? 20 : 120, kind == Kind::Malicious ? 90 : 600);
        std::string name;
        std::string content;
        std::string app;
        if (kind == Kind::Malicious) {
            name = rng.pick(kSensitiveDocs) + "_" + std::to_string(rng.between(1, 9)) + ".csv";
            content = "export batch " + std::to_string(rng.between(100, 999));
            app = act == Activity::FileUpload || act == Activity::FileShareExternal ? "GoogleDrive" : "LocalFS";
        } else {
            name = rng.pick(kOfficeDocs) + "_" + std::to_string(rng.between(1, 40)) + ".docx";
            content = "working copy " + std::to_string(rng.between(1, 99));
            app = kind == Kind::Remote ? (rng.below(2) ? "OneDrive" : "LocalFS") : rng.pick(kOfficeApps);
        }
        w.file(t, u, device, name, act, app, content);
    }
    if (kind == Kind::Malicious) {
        tick(30, 120);
        w.device(t, u, device, "Disconnect");
    }
    tick(60, 300);
    w.logon(t, u, device, "Logoff", ip);
    return login;
}

}  // namespace

SynthSummary generate_synthetic(const std::filesystem::path& dir, const SynthOptions& opts) {
    if (opts.labelled == 0 || opts.malicious_fraction < 0 || opts.malicious_fraction > 1) {
        throw Error(ErrorCode::OutOfRange, "synthetic options out of range");
    }
    std::filesystem::create_directories(dir);
    Rng rng(opts.seed);

    std::vector<SynthUser> office;
    std::vector<SynthUser> remote;
    const std::vector<std::string> depts = {"Finance", "Engineering", "Operations"};
    for (int i = 1; i <= 30; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "U%03d", i);
        office.push_back({id, depts[static_cast<std::size_t>(i) % depts.size()], i % 4 == 0 ? "Low" : "Moderate",
                          "PC-" + std::string(id + 1), false});
    }
    for (int i = 31; i <= 40; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "U%03d", i);
        remote.push_back({id, "Sales", "Low", "LAP-" + std::string(id + 1), true});
    }

    std::string users = "user_id,employee_name,role,department,privilege\n";
    std::string devices = "device_id,trust,owner\n";
    for (const auto* group : {&office, &remote}) {
        for (const auto& u : *group) {
            users += u.id + ",Employee " + u.id + "," + (u.remote ? "Account Manager" : "Analyst") + "," +
                     u.department + "," + u.privilege + "\n";
            if (!u.remote) {
                devices += u.device + ",ManagedCompliant," + u.id + "\n";
                devices += "PC-X" + u.id.substr(1) + ",ManagedNonCompliant," + u.id + "\n";
            }
        }
    }
    spit(dir / "users.csv", users);
    spit(dir / "devices.csv", devices);
    spit(dir / "trusted_ips.txt", "10.0.0.0/8\n");
    spit(dir / "column_mapping.json",
         "{\n  \"logon\": {\"columns\": [\"id\", \"date\", \"user\", \"pc\", \"activity\", \"ip\"]},\n"
         "  \"file\": {\"columns\": [\"id\", \"date\", \"user\", \"pc\", \"filename\", \"activity\", \"app\", "
         "\"content\"]}\n}\n");
    spit(dir / "irm.json",
         "{\n  \"data_dir\": \"data\",\n  \"users_csv\": \"users.csv\",\n  \"devices_csv\": \"devices.csv\",\n"
         "  \"trusted_ips\": \"trusted_ips.txt\",\n  \"column_mapping\": \"column_mapping.json\"\n}\n");

    Writer w(rng);
    SynthSummary summary;
    const Timestamp epoch = from_epoch(1735689600);  // 2025-01-01

    // Background: unlabelled history, about one remote session in five.
    const std::size_t per_day = 20;
    std::size_t day = 0;
    for (std::size_t done = 0; done < opts.background; ++day) {
        const Timestamp d = epoch + std::chrono::hours{24 * static_cast<std::int64_t>(day)};
        auto o = office;
        auto r = remote;
        rng.shuffle(o);
        rng.shuffle(r);
        const std::size_t n = std::min(per_day, opts.background - done);
        const std::size_t n_remote = std::min<std::size_t>(n / 5, r.size());
        for (std::size_t i = 0; i < n; ++i) {
            const bool is_remote = i < n_remote;
            emit_session(w, rng, is_remote ? r[i] : o[i - n_remote], is_remote ? Kind::Remote : Kind::Office, d);
        }
        done += n;
        summary.sessions += n;
    }

    // Labelled window.
    const auto n_mal = static_cast<std::size_t>(std::llround(opts.malicious_fraction * static_cast<double>(opts.labelled)));
    const std::size_t n_remote_total = (opts.labelled - n_mal) * 5 / 18;
    std::vector<Kind> kinds(n_mal, Kind::Malicious);
    kinds.insert(kinds.end(), n_remote_total, Kind::Remote);
    kinds.insert(kinds.end(), opts.labelled - n_mal - n_remote_total, Kind::Office);
    rng.shuffle(kinds);

    std::string labels = "session_id,label,note\n";
    std::size_t counter[3] = {0, 0, 0};
    for (std::size_t done = 0; done < kinds.size(); ++day) {
        const Timestamp d = epoch + std::chrono::hours{24 * static_cast<std::int64_t>(day)};
        auto o = office;
        auto r = remote;
        rng.shuffle(o);
        rng.shuffle(r);
        std::size_t oi = 0, ri = 0;
        const std::size_t n = std::min(per_day, kinds.size() - done);
        for (std::size_t i = 0; i < n; ++i) {
            const Kind k = kinds[done + i];
            const SynthUser* u = nullptr;
            if (k == Kind::Remote && ri < r.size()) u = &r[ri++];
            else if (k == Kind::Remote) u = &o[oi++];
            else u = &o[oi++];
            const auto login = emit_session(w, rng, *u, k, d);
            const auto slot = static_cast<std::size_t>(k);
            const char* split = counter[slot]++ % 2 == 0 ? "feedback" : "holdout";
            labels += "S-" + login + "," + (k == Kind::Malicious ? "malicious" : "benign") + "," + split + "\n";
            if (k == Kind::Malicious) ++summary.malicious;
            if (k == Kind::Remote) ++summary.remote_benign;
        }
        done += n;
        summary.sessions += n;
    }
    spit(dir / "labels.csv", labels);

    summary.events = w.size();
    w.flush(dir);
    return summary;
}

}  // namespace irm
