#include "doctest.h"
#include "support.hpp"

#include "irm/service.hpp"

#include <cstdlib>
#include <random>
#include <sstream>

using namespace irm;
using irm::test::TempDir;

namespace {

ServiceConfig quiet_config(const std::filesystem::path& data) {
    ServiceConfig cfg;
    cfg.data_dir = data;
    cfg.sync = false;
    return cfg;
}

std::vector<RowOutcome> read_rows(const std::string& text, EventSource source, const ParseOptions& opts) {
    CsvSourceReader reader(std::make_unique<std::istringstream>(text), source, opts);
    std::vector<RowOutcome> rows;
    while (auto r = reader.next()) rows.push_back(std::move(*r));
    return rows;
}

// 100 logon rows over five users, times strictly increasing.
std::vector<std::string> logon_lines() {
    std::vector<std::string> out;
    std::mt19937 rng(11);
    int minute = 0;
    for (int i = 0; i < 100; ++i) {
        minute += 1 + static_cast<int>(rng() % 9);
        char date[32];
        std::snprintf(date, sizeof date, "01/%02d/2010 %02d:%02d:00", 4 + minute / 1440, (minute / 60) % 24, minute % 60);
        const auto user = "USR" + std::to_string(rng() % 5);
        const char* act = (i % 4 == 3) ? "Logoff" : "Logon";
        out.push_back("L" + std::to_string(i) + "," + date + "," + user + ",PC-" + std::to_string(rng() % 3) + "," + act);
    }
    return out;
}

std::string join(const std::vector<std::string>& lines) {
    std::string s = "id,date,user,pc,activity\n";
    for (const auto& l : lines) s += l + "\n";
    return s;
}

std::vector<std::string> stored_ids(const RiskStore& s) {
    std::vector<std::string> ids;
    for (const auto& u : s.users()) {
        for (const auto& e : s.query_events({u, from_epoch(0), from_epoch(4102444800), {}, 100000})) ids.push_back(e.event_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

struct EnvGuard {
    std::vector<std::string> names;
    void set(const char* k, const char* v) {
        ::setenv(k, v, 1);
        names.emplace_back(k);
    }
    ~EnvGuard() {
        for (const auto& n : names) ::unsetenv(n.c_str());
    }
};

}  // namespace

TEST_CASE("worked example through the pipeline") {
    TempDir dir("svc");
    auto cfg = ServiceConfig::load(irm::test::fixture("worked-example/irm.json"));
    cfg.data_dir = dir.path();
    cfg.sync = false;
    Engine engine(cfg);
    auto counts = ingest_directory(engine, irm::test::fixture("worked-example"));
    engine.wait_for_recommendations();
    CHECK(counts.rows == 7);
    CHECK(counts.events_stored == 7);
    CHECK(counts.errors == 0);
    CHECK(counts.sessions_scored == 1);
    CHECK(counts.alerts == 1);

    const auto alerts = engine.store().alerts();
    REQUIRE(alerts.size() == 1);
    const auto& a = alerts[0];
    CHECK(a.origin == AlertOrigin::ScoreThreshold);
    CHECK(a.severity == Severity::Medium);
    REQUIRE(a.risk_score);
    CHECK(a.risk_score->raw == doctest::Approx(38.5).epsilon(1e-12));
    CHECK(a.risk_score->normalized == doctest::Approx(0.385).epsilon(1e-12));
    CHECK(a.risk_score->band == RiskBand::Moderate);
    REQUIRE(engine.store().get_alert(a.alert_id)->recommendation);
}

TEST_CASE("empty batch changes nothing") {
    TempDir dir("svc");
    Engine engine(quiet_config(dir.path()));
    auto c = engine.run_pipeline({});
    CHECK(c.rows == 0);
    CHECK(c.events_stored == 0);
    CHECK(c.alerts == 0);
    c = engine.flush();
    CHECK(c.sessions_scored == 0);
    CHECK(engine.store().event_count() == 0);
}

TEST_CASE("one malformed row in a hundred") {
    TempDir a("svc"), b("svc");
    Engine poisoned(quiet_config(a.path()));
    Engine clean(quiet_config(b.path()));

    auto lines = logon_lines();
    auto bad = lines;
    bad[37] = "L37,13/45/2010 99:00:00,USR1,PC-1,Logon";
    auto kept = lines;
    kept.erase(kept.begin() + 37);

    auto cp = poisoned.run_pipeline(read_rows(join(bad), EventSource::Logon, poisoned.parse_options()));
    cp += poisoned.flush();
    auto cc = clean.run_pipeline(read_rows(join(kept), EventSource::Logon, clean.parse_options()));
    cc += clean.flush();

    CHECK(cp.rows == 100);
    CHECK(cp.events_stored == 99);
    CHECK(cp.errors == 1);
    REQUIRE(cp.error_details.size() == 1);
    CHECK(cp.error_details[0].code == ErrorCode::BadTimestamp);

    CHECK(cc.errors == 0);
    CHECK(cp.events_stored == cc.events_stored);
    CHECK(cp.sessions_scored == cc.sessions_scored);
    CHECK(cp.violations == cc.violations);
    CHECK(cp.alerts == cc.alerts);
    CHECK(stored_ids(poisoned.store()) == stored_ids(clean.store()));

    auto scores = [](const RiskStore& s) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& r : s.sessions()) out.emplace_back(r.session_id, r.prism.raw);
        std::sort(out.begin(), out.end());
        return out;
    };
    CHECK(scores(poisoned.store()) == scores(clean.store()));
}

TEST_CASE("replayed rows are duplicates") {
    TempDir dir("svc");
    Engine engine(quiet_config(dir.path()));
    const auto text = join(logon_lines());
    auto first = engine.run_pipeline(read_rows(text, EventSource::Logon, engine.parse_options()));
    auto again = engine.run_pipeline(read_rows(text, EventSource::Logon, engine.parse_options()));
    CHECK(first.events_stored == 100);
    CHECK(again.events_stored == 0);
    CHECK(again.duplicates == 100);
}

TEST_CASE("service queue matches the engine") {
    TempDir a("svc"), b("svc");
    const auto text = join(logon_lines());
    PipelineCounts direct;
    {
        Engine engine(quiet_config(a.path()));
        direct = engine.run_pipeline(read_rows(text, EventSource::Logon, engine.parse_options()));
    }
    Service svc(quiet_config(b.path()));
    const auto opts = svc.with_engine([](Engine& e) { return e.parse_options(); });
    auto rows = read_rows(text, EventSource::Logon, opts);
    std::vector<RowOutcome> first(rows.begin(), rows.begin() + 50), second(rows.begin() + 50, rows.end());
    auto f1 = svc.submit(std::move(first));
    auto f2 = svc.submit(std::move(second));
    auto queued = f1.get();
    queued += f2.get();
    CHECK(queued.events_stored == direct.events_stored);
    CHECK(svc.with_engine([](Engine& e) { return e.store().event_count(); }) == 100);
}

TEST_CASE("dashboard is consistent with the store") {
    TempDir dir("svc");
    auto cfg = ServiceConfig::load(irm::test::fixture("cert-mini/irm.json"));
    cfg.data_dir = dir.path();
    cfg.sync = false;
    Engine engine(cfg);
    ingest_directory(engine, irm::test::fixture("cert-mini"));
    engine.wait_for_recommendations();

    const auto& store = engine.store();
    const auto d = build_dashboard(store, engine.prism());
    const auto alerts = store.alerts();
    REQUIRE_FALSE(alerts.empty());

    std::size_t sev_total = 0;
    for (const auto& [k, n] : d.severity_histogram) sev_total += n;
    CHECK(sev_total == alerts.size());

    std::set<std::string> users;
    for (const auto& s : store.sessions()) users.insert(s.user_id);
    std::size_t band_total = 0;
    for (const auto& [k, n] : d.band_histogram) band_total += n;
    CHECK(band_total == users.size());

    CHECK(d.urgent.size() <= kUrgentCount);
    for (std::size_t i = 1; i < d.urgent.size(); ++i) CHECK(d.urgent[i - 1].score >= d.urgent[i].score);
    for (const auto& a : d.urgent) CHECK(a.status == AlertStatus::Open);

    std::size_t series_sessions = 0, series_alerts = 0;
    for (std::size_t i = 0; i < d.series.size(); ++i) {
        series_sessions += d.series[i].sessions;
        series_alerts += d.series[i].alerts;
        if (i) CHECK(d.series[i].hour - d.series[i - 1].hour == std::chrono::hours{1});
    }
    CHECK(series_sessions == store.sessions().size());
    CHECK(series_alerts == alerts.size());

    // Closing an alert drops it from the urgent view but not from the histogram.
    engine.transition(d.urgent.front().alert_id, AlertStatus::Resolved, "", d.urgent.front().created_at);
    const auto after = build_dashboard(store, engine.prism());
    for (const auto& a : after.urgent) CHECK(a.alert_id != d.urgent.front().alert_id);
    CHECK(after.severity_histogram == d.severity_histogram);
}

TEST_CASE("service config loading") {
    auto cfg = ServiceConfig::load(irm::test::config_file("service.json"));
    CHECK(cfg.port == 8080);
    CHECK(cfg.alpha == doctest::Approx(0.5));
    CHECK(cfg.n_threshold == 50);
    CHECK(cfg.half_life == std::chrono::hours{24 * 7});
    CHECK(cfg.prism_config.is_absolute());
    CHECK(std::filesystem::exists(cfg.policy_config));
    CHECK_NOTHROW(cfg.validate());

    {
        EnvGuard env;
        env.set("IRM_PORT", "9191");
        env.set("IRM_TOKEN", "sekret");
        env.set("IRM_DATA_DIR", "/tmp/irm-env-data");
        auto over = ServiceConfig::load(irm::test::config_file("service.json"));
        CHECK(over.port == 9191);
        CHECK(over.auth_token == "sekret");
        CHECK(over.data_dir == "/tmp/irm-env-data");
    }
    {
        EnvGuard env;
        env.set("IRM_PORT", "80x");
        CHECK_THROWS_AS(ServiceConfig::load(irm::test::config_file("service.json")), Error);
    }
}

TEST_CASE("bad service config") {
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    CHECK(code_of([] { ServiceConfig::load("/nonexistent/irm.json"); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { ServiceConfig::from_json_text("{not json"); }) == ErrorCode::ConfigError);
    CHECK(code_of([] { ServiceConfig::from_json_text("{\"airs\": {\"alpha\": 2}}").validate(); }) ==
          ErrorCode::ConfigError);
    CHECK(code_of([] { ServiceConfig::from_json_text("{\"listen\": {\"port\": 0}}").validate(); }) ==
          ErrorCode::ConfigError);
    CHECK(code_of([] { ServiceConfig::from_json_text("{\"prism_config\": \"missing.json\"}").validate(); }) ==
          ErrorCode::ConfigError);
}
