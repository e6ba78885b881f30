// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.
#include "oracles.hpp"
#include "policy_cases.hpp"
#include "support.hpp"

#include "irm/bench.hpp"
#include "irm/eval.hpp"
#include "irm/service.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace irm;
using irm::test::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void criterion(int n, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %2d %-28s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
}

Outcome worked_example() {
    const auto t0 = Clock::now();
    TempDir dir("acc");
    auto cfg = ServiceConfig::load(irm::test::fixture("worked-example/irm.json"));
    cfg.data_dir = dir.path();
    cfg.sync = false;
    cfg.recommend_command.clear();
    Engine engine(cfg);
    const auto counts = ingest_directory(engine, irm::test::fixture("worked-example"));
    const auto alerts = engine.store().alerts();
    const double took = seconds_since(t0);
    if (alerts.size() != 1 || !alerts[0].risk_score) return {false, "alerts=" + std::to_string(alerts.size())};
    const auto& r = *alerts[0].risk_score;
    const bool ok = std::abs(r.raw - 38.5) <= 1e-9 && std::abs(r.normalized - 0.385) <= 1e-9 &&
                    r.band == RiskBand::Moderate && counts.sessions_scored == 1 && took < 1.0;
    return {ok, "raw=" + fmt("%.12g", r.raw) + " normalized=" + fmt("%.12g", r.normalized) +
                    " band=" + std::string(to_string(r.band)) + " alerts=1 runtime=" + fmt("%.3fs", took)};
}

Outcome prism_properties() {
    const auto t0 = Clock::now();
    const auto err = oracle::prism_properties(1000, 20240601);
    const double took = seconds_since(t0);
    if (!err.empty()) return {false, err};
    return {took < 10.0, "1000 sessions, all properties hold, runtime=" + fmt("%.2fs", took)};
}

Outcome autoencoder_numerics() {
    const double grad = oracle::ae_gradient_check(20, 99);
    const double fwd = oracle::ae_forward_gap();
    const bool repro = oracle::ae_training_reproducible(3);
    return {grad <= 1e-4 && fwd <= 1e-6 && repro, "max grad rel err=" + fmt("%.2e", grad) + " forward gap=" +
                                                      fmt("%.2e", fwd) + " reproducible=" + (repro ? "yes" : "no")};
}

Outcome blend() {
    const auto err = oracle::blend_grid();
    return {err.empty(), err.empty() ? "125 grid points exact, alpha 0/1 identities hold" : err};
}

Outcome feedback_loop() {
    const auto t0 = Clock::now();
    const auto fx = irm::test::fixture("synthetic");
    const auto labels = load_labels(fx / "labels.csv");
    auto cfg = ServiceConfig::load(fx / "irm.json");
    EvalOptions opts;
    opts.generated_at = "fixed";
    const auto report = run_eval(cfg, fx, labels, opts);
    const double took = seconds_since(t0);
    if (report.curve.size() < 3) return {false, "curve has " + std::to_string(report.curve.size()) + " rows"};
    const double f0 = report.curve[0].holdout.fpr();
    const double f2 = report.curve[2].holdout.fpr();
    bool gaps = true;
    std::size_t retrains = 0;
    std::string gap_text;
    for (const auto& row : report.curve) {
        if (!row.gap_before) continue;
        ++retrains;
        gaps = gaps && *row.gap_after < *row.gap_before;
        gap_text += " " + fmt("%.4f", *row.gap_before) + "->" + fmt("%.4f", *row.gap_after);
    }
    const bool ok = labels.size() == 200 && f2 < f0 && retrains == 2 && gaps && took < 120.0;
    return {ok, "labelled=" + std::to_string(labels.size()) + " FPR " + fmt("%.3f", f0) + " -> " +
                    fmt("%.3f", report.curve[1].holdout.fpr()) + " -> " + fmt("%.3f", f2) + " gaps" + gap_text +
                    " runtime=" + fmt("%.1fs", took)};
}

Outcome policies() {
    std::set<std::string> covered;
    std::string bad;
    const auto cases = cases::table();
    for (const auto& c : cases) {
        covered.insert(c.policy_id);
        if (cases::run(c.policy_id, c.fires).size() != 1) bad += " " + c.policy_id + "(fire)";
        if (!cases::run(c.policy_id, c.quiet).empty()) bad += " " + c.policy_id + "(quiet)";
    }
    std::set<std::string> all;
    for (const auto& p : default_policies()) all.insert(p.policy_id);
    if (covered != all) bad += " coverage";

    const auto window = oracle::window_equivalence(100, 1000, 17);
    if (!window.empty()) bad += " window: " + window;

    const auto stream = oracle::mixed_stream(5, 3000);
    const auto aux = cases::test_aux();
    const auto a = oracle::replay(default_policies(), aux, stream);
    const auto b = oracle::replay(default_policies(), aux, stream);
    if (a != b) bad += " replay";

    if (!bad.empty()) return {false, bad};
    return {true, std::to_string(all.size()) + " policies fire+quiet, 100 window streams match, replay of " +
                      std::to_string(a.size()) + " violations identical"};
}

Outcome eval_oracle() {
    const auto labels = load_labels(irm::test::fixture("eval-mini/labels.csv"));
    const auto scores = load_scores(irm::test::fixture("eval-mini/scores.csv"));
    const auto c = confusion(scores, labels, 0.3);
    bool ok = c == Confusion{2, 1, 7, 0};
    const auto sweep = threshold_sweep(scores, labels, 100);
    ok = ok && sweep.size() == 100;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const auto& s = sweep[i].counts;
        ok = ok && std::abs(s.tpr() + s.fnr() - 1.0) < 1e-12;
        if (i) {
            const auto& p = sweep[i - 1].counts;
            ok = ok && s.tpr() <= p.tpr() && s.fpr() <= p.fpr() && s.tp + s.fp <= p.tp + p.fp;
        }
    }
    return {ok, "TP=" + std::to_string(c.tp) + " FP=" + std::to_string(c.fp) + " TN=" + std::to_string(c.tn) +
                    " FN=" + std::to_string(c.fn) + ", 100-point sweep monotone, TPR+FNR=1"};
}

Outcome performance() {
    TempDir dir("acc-bench");
    BenchOptions opts;
    opts.rate = 11000;
    opts.duration_s = 60;
    opts.users = 500;
    opts.preload = 1000000;
    opts.query_threads = 1;
    opts.data_dir = dir.path();
    opts.sync = true;
    const auto r = run_bench(opts);
    std::printf("      %s\n      %s\n", bench_table_header().c_str(), bench_table_row(r).c_str());
    const bool ok = r.achieved_rate >= 10000 && r.elapsed_s >= 60 && r.p95_ms < 300 && r.store_events >= 1000000 &&
                    r.queries > 0 && r.peak_rss_mb < 1024;
    return {ok, "achieved=" + fmt("%.0f eps", r.achieved_rate) + " p95=" + fmt("%.2fms", r.p95_ms) +
                    " store=" + std::to_string(r.store_events) + " rss=" + fmt("%.0fMB", r.peak_rss_mb)};
}

std::pair<int, std::string> run_cli(const std::string& args) {
    const std::string cmd = std::string(IRM_CLI) + " " + args + " 2>/dev/null";
    std::string out;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return {-1, ""};
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
    const int status = ::pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Outcome golden() {
    const auto fx = irm::test::fixture("cert-mini");
    const auto want = irm::test::slurp(fx / "golden.txt");
    std::vector<std::string> outs;
    double slowest = 0;
    for (int i = 0; i < 2; ++i) {
        TempDir dir("acc-golden");
        const auto t0 = Clock::now();
        auto [code, out] = run_cli("ingest --dir " + fx.string() + " --config " + (fx / "irm.json").string() +
                                   " --data-dir " + dir.path().string());
        slowest = std::max(slowest, seconds_since(t0));
        if (code != 0) return {false, "irm ingest exited " + std::to_string(code)};
        outs.push_back(out);
    }
    std::string flat = outs[0];
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    const bool ok = outs[0] == want && outs[1] == outs[0] && slowest < 30.0;
    return {ok, flat + "identical=" + (outs[1] == outs[0] ? "yes" : "no") + " runtime=" + fmt("%.2fs", slowest)};
}

Outcome standalone() {
    const auto build = std::filesystem::path(IRM_CLI).parent_path().parent_path();
    const auto source = std::filesystem::path(IRM_FIXTURES).parent_path();
    const bool console_built =
        std::filesystem::exists(build / "analyst_console") || std::filesystem::exists(source / "analyst_console" / "node_modules");
    return {!console_built, console_built ? "secondary component present in the build" : "no secondary component built"};
}

}  // namespace

int main() {
    criterion(1, "PRISM worked example", worked_example);
    criterion(2, "PRISM property suite", prism_properties);
    criterion(3, "autoencoder numerics", autoencoder_numerics);
    criterion(4, "feedback blend grid", blend);
    criterion(5, "feedback-loop improvement", feedback_loop);
    criterion(6, "policy engine", policies);
    criterion(7, "eval harness oracle", eval_oracle);
    criterion(8, "performance", performance);
    criterion(9, "golden ingest", golden);
    criterion(10, "no secondary component", standalone);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures;
}
