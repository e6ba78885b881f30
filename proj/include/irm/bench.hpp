#pragma once

#include "irm/service.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace irm {

struct BenchOptions {
    double rate = 10000.0;  // offered events per second
    double duration_s = 10.0;
    std::size_t users = 500;
    std::size_t preload = 0;  // events appended straight to the store first
    std::size_t query_threads = 1;
    std::uint64_t seed = 1;
    std::filesystem::path data_dir;
    bool sync = true;
};

struct BenchResult {
    double offered_rate = 0.0;
    double achieved_rate = 0.0;  // events through the pipeline per wall second
    double elapsed_s = 0.0;
    std::uint64_t events = 0;
    std::uint64_t store_events = 0;  // store size at the end
    std::uint64_t queries = 0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    std::size_t alerts = 0;
    double peak_rss_mb = 0.0;  // process high-water mark
};

// VmHWM from /proc/self/status; 0 when unavailable.
double peak_rss_mb();

// Paced producer feeding the full pipeline while reader threads issue
// per-user range queries.
BenchResult run_bench(const BenchOptions& opts);

// Fixed-width rate-vs-latency table, one row per run.
std::string bench_table_header();
std::string bench_table_row(const BenchResult& r);

}  // namespace irm
