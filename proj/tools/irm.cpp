#include "irm/api.hpp"
#include "irm/bench.hpp"
#include "irm/eval.hpp"
#include "irm/service.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <pthread.h>
#include <thread>
#include <atomic>
#include <cstdio>
#include <iostream>

namespace {

irm::ServiceConfig config_from(const std::string& path, const std::string& data_dir) {
    irm::ServiceConfig cfg;
    if (!path.empty()) {
        cfg = irm::ServiceConfig::load(path);
    } else {
        cfg.apply_env();
    }
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    cfg.validate();
    return cfg;
}

void print_counts(const irm::PipelineCounts& c) {
    std::printf("rows=%zu\nevents=%zu\nduplicates=%zu\nerrors=%zu\nsessions=%zu\nviolations=%zu\nalerts=%zu\n",
                c.rows, c.events_stored, c.duplicates, c.errors, c.sessions_scored, c.violations, c.alerts);
}

int cmd_ingest(const std::string& dir, const std::string& config, const std::string& data_dir) {
    irm::Engine engine(config_from(config, data_dir));
    auto counts = irm::ingest_directory(engine, dir);
    std::size_t shown = 0;
    for (const auto& e : counts.error_details) {
        if (shown++ == 20) {
            std::fprintf(stderr, "... %zu more row errors\n", counts.error_details.size() - 20);
            break;
        }
        std::fprintf(stderr, "row %zu: %s: %s\n", e.row, std::string(irm::to_string(e.code)).c_str(),
                     e.message.c_str());
    }
    engine.wait_for_training();
    print_counts(counts);
    return 0;
}

int cmd_score(const std::string& session, const std::string& config, const std::string& data_dir) {
    auto cfg = config_from(config, data_dir);
    irm::RiskStore store(cfg.data_dir, irm::StoreOptions{false, {}});
    auto row = store.session(session);
    if (!row) throw irm::Error(irm::ErrorCode::NotFound, "no scored session " + session);
    std::cout << irm::to_json(*row).dump(2) << "\n";
    return 0;
}

int cmd_serve(const std::string& config) {
    irm::ServiceConfig cfg;
    try {
        cfg = irm::ServiceConfig::load(config);
    } catch (const irm::Error& e) {
        std::fprintf(stderr, "irm serve: %s\n", e.what());
        return 2;
    }
    if (cfg.auth_token.empty()) {
        std::fprintf(stderr, "irm serve: auth_token (or IRM_TOKEN) is required\n");
        return 2;
    }
    // Signals are taken by a waiter thread so stop() runs outside a handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    irm::Service service(cfg);
    irm::ApiServer server(service, cfg.auth_token);
    std::atomic<bool> stopping{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        stopping = true;
        server.stop();
    });
    std::fprintf(stderr, "listening on %s:%d\n", cfg.listen_host.c_str(), cfg.port);
    const bool ok = server.listen(cfg.listen_host, cfg.port);
    if (!stopping) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    if (!ok && !stopping) {
        std::fprintf(stderr, "irm serve: cannot listen on %s:%d\n", cfg.listen_host.c_str(), cfg.port);
        return 1;
    }
    return 0;
}

struct EvalArgs {
    std::string labels;
    std::string dir;
    std::string scores;
    std::string config;
    std::string out;
    std::string generated_at;
    std::size_t iterations = 2;
    double threshold = 0.3;
    double airs_threshold = 0.9;
};

int cmd_eval(const EvalArgs& a) {
    const auto labels = irm::load_labels(a.labels);
    if (!a.scores.empty()) {
        const auto scores = irm::load_scores(a.scores);
        const auto c = irm::confusion(scores, labels, a.threshold);
        std::cout << irm::to_json(c).dump(2) << "\n";
        return 0;
    }
    if (a.dir.empty()) throw irm::Error(irm::ErrorCode::ConfigError, "eval needs --dir or --scores");
    irm::EvalOptions opts;
    opts.curve.iterations = a.iterations;
    opts.curve.airs_threshold = a.airs_threshold;
    opts.generated_at = a.generated_at.empty() ? irm::format_iso(irm::now_utc()) : a.generated_at;
    auto cfg = config_from(a.config, "");
    auto report = irm::run_eval(cfg, a.dir, labels, opts);
    if (!a.out.empty()) irm::write_report(report, a.out);

    std::printf("%-14s %9s %6s %6s %6s\n", "scorer", "threshold", "FPR", "TPR", "FNR");
    for (const auto& s : report.scorers) {
        std::printf("%-14s %9.2f %6.3f %6.3f %6.3f\n", s.name.c_str(), s.threshold, s.counts.fpr(), s.counts.tpr(),
                    s.counts.fnr());
    }
    std::printf("\n%-9s %7s %8s %6s %6s %10s %9s\n", "iteration", "version", "feedback", "FPR", "FNR", "gap_before",
                "gap_after");
    for (const auto& c : report.curve) {
        std::printf("%-9zu %7llu %8zu %6.3f %6.3f", c.iteration, static_cast<unsigned long long>(c.model_version),
                    c.feedback_given, c.holdout.fpr(), c.holdout.fnr());
        if (c.gap_before) std::printf(" %10.4f %9.4f\n", *c.gap_before, *c.gap_after);
        else std::printf(" %10s %9s\n", "-", "-");
    }
    return 0;
}

int cmd_bench(irm::BenchOptions opts, const std::vector<double>& rates) {
    const auto root = opts.data_dir;
    std::printf("%s\n", irm::bench_table_header().c_str());
    for (const double rate : rates) {
        opts.rate = rate;
        opts.data_dir = rates.size() > 1 ? root / ("rate-" + std::to_string(static_cast<long long>(rate))) : root;
        std::printf("%s\n", irm::bench_table_row(irm::run_bench(opts)).c_str());
        std::fflush(stdout);
    }
    return 0;
}

int cmd_verify(const std::string& data_dir) {
    auto report = irm::RiskStore::verify(data_dir);
    std::printf("segments=%zu\nrecords=%zu\ntorn_tails=%zu\n", report.segments, report.records, report.torn_tails);
    for (const auto& e : report.errors) std::printf("error: %s\n", e.c_str());
    std::printf("%s\n", report.ok() ? "ok" : "corrupt");
    return report.ok() ? 0 : 1;
}

int cmd_synth(const std::string& out, const irm::SynthOptions& opts) {
    auto s = irm::generate_synthetic(out, opts);
    std::printf("events=%zu\nsessions=%zu\nmalicious=%zu\nremote_benign=%zu\n", s.events, s.sessions, s.malicious,
                s.remote_benign);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Insider risk scoring engine"};
    app.require_subcommand(1);

    std::string config, data_dir, dir, session;
    auto* ingest = app.add_subcommand("ingest", "Run a CERT directory through the pipeline");
    ingest->add_option("--dir", dir, "Directory with logon.csv, device.csv, file.csv")->required();
    ingest->add_option("--config", config, "Service config JSON");
    ingest->add_option("--data-dir", data_dir, "Store directory (overrides the config)");

    auto* score = app.add_subcommand("score", "Print the stored score of a session");
    score->add_option("--session", session, "Session id")->required();
    score->add_option("--config", config, "Service config JSON");
    score->add_option("--data-dir", data_dir, "Store directory");

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option("--config", config, "Service config JSON")->required();

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Score labelled sessions and write metrics");
    eval->add_option("--labels", ea.labels, "session_id,label,note CSV")->required();
    eval->add_option("--dir", ea.dir, "Fixture directory to run through the pipeline");
    eval->add_option("--scores", ea.scores, "session_id,score CSV (skips the pipeline)");
    eval->add_option("--config", ea.config, "Service config JSON");
    eval->add_option("--out", ea.out, "Report directory");
    eval->add_option("--iterations", ea.iterations, "Feedback iterations")->check(CLI::PositiveNumber);
    eval->add_option("--threshold", ea.threshold, "Threshold for --scores")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--airs-threshold", ea.airs_threshold, "AIRS decision threshold")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--generated-at", ea.generated_at, "Timestamp written into the report");

    irm::BenchOptions bo;
    std::string bench_dir;
    bool no_sync = false;
    auto* bench = app.add_subcommand("bench", "Sustained ingest with concurrent queries");
    std::vector<double> rates{bo.rate};
    bench->add_option("--rate", rates, "Offered events per second; several values give one row each")
        ->check(CLI::PositiveNumber)
        ->delimiter(',');
    bench->add_option("--duration", bo.duration_s, "Seconds")->check(CLI::PositiveNumber);
    bench->add_option("--users", bo.users, "Distinct users")->check(CLI::PositiveNumber);
    bench->add_option("--preload", bo.preload, "Events stored before the run");
    bench->add_option("--query-threads", bo.query_threads, "Concurrent readers");
    bench->add_option("--data-dir", bench_dir, "Store directory")->required();
    bench->add_flag("--no-sync", no_sync, "Skip fdatasync");

    auto* store = app.add_subcommand("store", "Store maintenance");
    store->require_subcommand(1);
    std::string verify_dir;
    auto* verify = store->add_subcommand("verify", "Check segment checksums");
    verify->add_option("--data-dir", verify_dir, "Store directory")->required();

    irm::SynthOptions so;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write the seeded synthetic fixture");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", so.seed, "Seed");
    synth->add_option("--labelled", so.labelled, "Labelled sessions");
    synth->add_option("--background", so.background, "Unlabelled sessions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*ingest) return cmd_ingest(dir, config, data_dir);
        if (*score) return cmd_score(session, config, data_dir);
        if (*serve) return cmd_serve(config);
        if (*eval) return cmd_eval(ea);
        if (*bench) {
            bo.data_dir = bench_dir;
            bo.sync = !no_sync;
            return cmd_bench(bo, rates);
        }
        if (*verify) return cmd_verify(verify_dir);
        if (*synth) return cmd_synth(synth_out, so);
    } catch (const irm::Error& e) {
        std::fprintf(stderr, "irm: %s: %s\n", std::string(irm::to_string(e.code())).c_str(), e.what());
        return e.code() == irm::ErrorCode::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "irm: %s\n", e.what());
        return 1;
    }
    return 0;
}
