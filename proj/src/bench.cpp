#include "irm/bench.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

namespace irm {

namespace {

using Clock = std::chrono::steady_clock;

const char* kFiles[] = {"notes.docx", "plan.xlsx", "deck.pptx", "readme.txt", "payroll_q3.xlsx", "draft.docx"};
const char* kContent[] = {"weekly sync notes", "budget draft", "contact jane.doe@example.com", "status update",
                          "ssn 219-09-9999 on file", "design review"};

class BenchFeed {
public:
    BenchFeed(std::size_t users, std::uint64_t seed, Timestamp start) : rng_(seed), clock_(start) {
        state_.resize(users);
    }

    ActivityEvent next() {
        const std::size_t u = rng_() % state_.size();
        auto& st = state_[u];
        if (++seq_ % 10 == 0) clock_ += Seconds{1};
        ActivityEvent e;
        e.event_id = "B" + std::to_string(seq_);
        e.timestamp = clock_;
        e.user_id = "BU" + std::to_string(u);
        e.device_id = "BPC" + std::to_string(u);
        e.ip_address = "10.2." + std::to_string(u / 250) + "." + std::to_string(u % 250 + 1);
        if (!st.open) {
            e.source = EventSource::Logon;
            e.activity = Activity::Login;
            st.open = true;
            st.left = 5 + rng_() % 20;
        } else if (st.left == 0) {
            e.source = EventSource::Logon;
            e.activity = Activity::Logout;
            st.open = false;
        } else {
            --st.left;
            static const Activity acts[] = {Activity::FileRead, Activity::FileWrite, Activity::FileCreate,
                                            Activity::FileUpload, Activity::FileShareInternal, Activity::FileMove};
            e.source = EventSource::File;
            e.activity = acts[rng_() % std::size(acts)];
            e.app_context = static_cast<AppContext>(rng_() % 4);
            const auto f = rng_() % std::size(kFiles);
            e.raw_extra[extra_key::kFilename] = kFiles[f];
            e.raw_extra[extra_key::kContent] = kContent[rng_() % std::size(kContent)];
            e.file_id = "f" + std::to_string(f);
        }
        return e;
    }

    Timestamp now() const { return clock_; }

private:
    struct UserState {
        bool open = false;
        std::size_t left = 0;
    };
    std::mt19937_64 rng_;
    Timestamp clock_;
    std::uint64_t seq_ = 0;
    std::vector<UserState> state_;
};

}  // namespace

double peak_rss_mb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) return std::stod(line.substr(6)) / 1024.0;
    }
    return 0.0;
}

BenchResult run_bench(const BenchOptions& opts) {
    if (opts.rate <= 0 || opts.duration_s <= 0 || opts.users == 0) {
        throw Error(ErrorCode::OutOfRange, "bench needs a positive rate, duration and user count");
    }
    ServiceConfig cfg;
    cfg.data_dir = opts.data_dir;
    cfg.sync = opts.sync;
    cfg.bootstrap_sessions = std::numeric_limits<std::size_t>::max();
    Service service(cfg);

    BenchFeed gen(opts.users, opts.seed, from_epoch(1735689600));
    if (opts.preload > 0) {
        service.with_engine([&](Engine& engine) {
            std::vector<ActivityEvent> batch;
            batch.reserve(10000);
            for (std::size_t i = 0; i < opts.preload; ++i) {
                batch.push_back(gen.next());
                if (batch.size() == 10000) {
                    engine.store().append_events(batch);
                    batch.clear();
                }
            }
            if (!batch.empty()) engine.store().append_events(batch);
            return 0;
        });
    }

    std::atomic<bool> done{false};
    std::atomic<std::uint64_t> queries{0};
    std::vector<std::thread> readers;
    const Timestamp horizon_start = from_epoch(1735689600);
    for (std::size_t t = 0; t < opts.query_threads; ++t) {
        readers.emplace_back([&, t] {
            std::mt19937_64 rng(opts.seed + 100 + t);
            const RiskStore& store = service.engine_unlocked().store();
            while (!done.load()) {
                EventQuery q;
                q.user_id = "BU" + std::to_string(rng() % opts.users);
                q.from = horizon_start;
                q.to = horizon_start + std::chrono::hours{24 * 30};
                q.limit = 1000;
                store.query_events(q);
                ++queries;
                std::this_thread::sleep_for(std::chrono::milliseconds{5});
            }
        });
    }

    const std::size_t tick_events = std::max<std::size_t>(1, static_cast<std::size_t>(opts.rate / 100.0));
    const auto tick = std::chrono::duration<double>(static_cast<double>(tick_events) / opts.rate);
    std::vector<std::future<PipelineCounts>> pending;
    const auto t0 = Clock::now();
    const auto stop_at = t0 + std::chrono::duration<double>(opts.duration_s);
    auto next_tick = t0;
    PipelineCounts total;
    while (Clock::now() < stop_at) {
        std::vector<RowOutcome> rows;
        rows.reserve(tick_events);
        for (std::size_t i = 0; i < tick_events; ++i) {
            RowOutcome r;
            r.event = gen.next();
            rows.push_back(std::move(r));
        }
        pending.push_back(service.submit(std::move(rows)));
        while (!pending.empty() && pending.front().wait_for(std::chrono::seconds{0}) == std::future_status::ready) {
            total += pending.front().get();
            pending.erase(pending.begin());
        }
        next_tick += std::chrono::duration_cast<Clock::duration>(tick);
        std::this_thread::sleep_until(next_tick);
    }
    for (auto& f : pending) total += f.get();
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    done = true;
    for (auto& r : readers) r.join();

    BenchResult res;
    res.offered_rate = opts.rate;
    res.events = total.events_stored;
    res.elapsed_s = elapsed;
    res.achieved_rate = static_cast<double>(total.events_stored) / elapsed;
    res.alerts = total.alerts;
    const auto stats = service.engine_unlocked().store().stats();
    res.store_events = stats.events;
    res.queries = stats.queries;
    res.p50_ms = stats.p50_ms;
    res.p95_ms = stats.p95_ms;
    res.p99_ms = stats.p99_ms;
    res.peak_rss_mb = peak_rss_mb();
    return res;
}

std::string bench_table_header() {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%12s %12s %10s %12s %9s %9s %9s %9s %8s", "offered_eps", "achieved_eps",
                  "elapsed_s", "store_events", "queries", "p50_ms", "p95_ms", "p99_ms", "rss_mb");
    return buf;
}

std::string bench_table_row(const BenchResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%12.0f %12.0f %10.1f %12llu %9llu %9.3f %9.3f %9.3f %8.0f", r.offered_rate,
                  r.achieved_rate, r.elapsed_s, static_cast<unsigned long long>(r.store_events),
                  static_cast<unsigned long long>(r.queries), r.p50_ms, r.p95_ms, r.p99_ms, r.peak_rss_mb);
    return buf;
}

}  // namespace irm
