#include "doctest.h"
#include "support.hpp"

#include "irm/recommend.hpp"

#include <chrono>

using namespace irm;
using irm::test::TempDir;
using irm::test::at;
using irm::test::make_event;

namespace {

struct World {
    TempDir dir{"rec"};
    RiskStore store{dir.path(), {.sync = false}};
    UserDirectory users = UserDirectory::from_csv_text(
        "user_id,employee_name,role,department,privilege\n"
        "U1,Ann,Analyst,Finance,Moderate\n"
        "U2,Bob,Analyst,Finance,Low\n"
        "U3,Cat,Clerk,Finance,Low\n"
        "U9,Dee,Contractor,Ops,Guest\n");
    std::vector<Policy> policies = load_policies_file(irm::test::config_file("policies.json"));
    IpReputation reputation{IpList::from_text("10.0.0.0/8\n"), IpList::from_text("198.51.100.0/24\n")};
    PrismConfig prism = PrismConfig::defaults();

    ContextSources sources() const { return {store, users, policies, reputation, prism}; }

    // A Mass Data Download violation for `user` at 23:00 on 02/10.
    std::string mass_download(const std::string& user, int reads, const std::string& ip = "203.0.113.7") {
        std::vector<ActivityEvent> evidence;
        std::vector<std::string> ids;
        for (int i = 0; i < reads; ++i) {
            auto e = make_event(user + "-ev" + std::to_string(i), at("02/10/2010 23:00:00") + Seconds{i * 10}, user,
                                Activity::FileRead);
            e.app_context = AppContext::OneDrive;
            e.ip_address = ip;
            e.file_id = "secret-file-" + std::to_string(i);
            e.raw_extra["filename"] = "payroll_secret_" + std::to_string(i) + ".xlsx";
            e.raw_extra["content"] = "SSN: 123-45-6789";
            ids.push_back(e.event_id);
            evidence.push_back(std::move(e));
        }
        store.append_events(evidence);
        PolicyViolation v;
        v.violation_id = "V-" + user;
        v.policy_id = "P-DM-01";
        v.policy_name = "Mass Data Download";
        v.category = PolicyCategory::DataMovement;
        v.severity = Severity::High;
        v.subject = v.user_id = user;
        v.triggering_event_ids = ids;
        v.first_event_at = evidence.front().timestamp;
        v.fired_at = evidence.back().timestamp;
        store.append_violation(v);
        Alert a;
        a.subject = user;
        a.created_at = v.fired_at;
        a.origin = AlertOrigin::PolicyViolation;
        a.origin_ref = v.violation_id;
        a.severity = Severity::High;
        a.score = 0.8;
        return store.upsert_alert(a).alert_id;
    }

    void history(const std::string& user, Activity a, int n) {
        std::vector<ActivityEvent> ev;
        for (int i = 0; i < n; ++i) {
            ev.push_back(make_event(user + "-h" + std::to_string(i) + std::string(to_string(a)),
                                    at("01/25/2010 10:00:00") + Seconds{i * 60}, user, a));
        }
        store.append_events(ev);
    }
};

RecommendationContext mass_download_context() {
    RecommendationContext c;
    c.alert_id = "A-000001";
    c.origin = AlertOrigin::PolicyViolation;
    c.severity = Severity::High;
    c.trigger = "Mass Data Download";
    c.policy_id = "P-DM-01";
    c.policy_action = ActionKind::RestrictFileAccess;
    c.trigger_activity = Activity::FileRead;
    c.score = 0.8;
    c.user_id = "U1";
    c.off_hours = true;
    c.device_trust = DeviceTrust::ManagedCompliant;
    return c;
}

bool has(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_CASE("template for an off-hours mass download") {
    auto c = mass_download_context();
    auto r = TemplateGenerator().generate(c);
    CHECK(r.actions == std::vector<RecAction>{RecAction::RestrictFileAccess, RecAction::Investigate});
    CHECK(r.confidence == Confidence::High);
    CHECK(r.generator == "template");
    CHECK(r.summary == "High Mass Data Download alert for U1");
    CHECK(r.steps.size() >= 3);
    CHECK_FALSE(r.fallback_reason);
    CHECK(adverse_signals(c) == std::vector<std::string>{"off_hours", "no_history"});
}

TEST_CASE("quiet context gets low confidence and dismiss") {
    auto c = mass_download_context();
    c.off_hours = false;
    c.similar_actions_30d = 30;
    c.evidence_count = 1;
    c.prior_daily_mean = 1.0;
    c.baseline_delta = 0.0;
    c.origin = AlertOrigin::ScoreThreshold;
    c.policy_action.reset();
    CHECK(adverse_signals(c).empty());
    auto r = TemplateGenerator().generate(c);
    CHECK(r.confidence == Confidence::Low);
    CHECK(r.actions == std::vector<RecAction>{RecAction::Investigate, RecAction::FlagUser, RecAction::Dismiss});

    c.device_trust = DeviceTrust::Unmanaged;
    CHECK(TemplateGenerator().generate(c).confidence == Confidence::Medium);
}

TEST_CASE("context with history") {
    World w;
    w.history("U1", Activity::FileRead, 60);
    w.history("U2", Activity::FileRead, 10);
    w.history("U3", Activity::FileRead, 20);
    const auto id = w.mass_download("U1", 120);
    auto c = assemble_context(id, w.sources());
    CHECK(c.has_history);
    CHECK(c.policy_id == "P-DM-01");
    CHECK(c.policy_action == ActionKind::RestrictFileAccess);
    CHECK(c.trigger_activity == Activity::FileRead);
    CHECK(c.similar_actions_30d == 60);
    CHECK(c.evidence_count == 120);
    CHECK(c.prior_daily_mean == doctest::Approx(2.0));
    REQUIRE(c.baseline_delta);
    CHECK(*c.baseline_delta == doctest::Approx(118.0));
    CHECK(c.department == "Finance");
    CHECK(c.privilege == Privilege::Moderate);
    CHECK(c.department_peers == 2);
    CHECK(c.department_median == doctest::Approx(15.0));
    CHECK(c.ip == IpStanding::Unknown);
    CHECK(c.off_hours);
    CHECK(c.activity_counts_30d.at("FileRead") == 60);
    CHECK_FALSE(has(c.no_history_markers, "no_prior_activity"));
    CHECK(has(c.no_history_markers, "no_prior_alerts"));

    const auto signals = adverse_signals(c);
    CHECK(has(signals, "spike"));
    CHECK(has(signals, "above_department"));
    CHECK_FALSE(has(signals, "no_history"));
}

TEST_CASE("context without history is marked") {
    World w;
    const auto id = w.mass_download("U9", 5, "10.1.2.3");
    auto c = assemble_context(id, w.sources());
    CHECK_FALSE(c.has_history);
    CHECK_FALSE(c.baseline_delta);
    CHECK_FALSE(c.department_median);
    CHECK(c.ip == IpStanding::Trusted);
    for (const char* m : {"no_prior_activity", "no_prior_alerts", "no_similar_actions", "no_department_peers"}) {
        CHECK(has(c.no_history_markers, m));
    }
    CHECK_THROWS_AS(assemble_context("A-404", w.sources()), Error);
}

TEST_CASE("context carries no raw identifiers") {
    World w;
    const auto id = w.mass_download("U1", 8, "198.51.100.9");
    const auto c = assemble_context(id, w.sources());
    CHECK(c.ip == IpStanding::Blacklisted);
    const auto text = to_json(c).dump();
    for (const char* leak : {"payroll_secret", "secret-file", "198.51.100", "123-45-6789", "SSN", "ev0"}) {
        CHECK_MESSAGE(text.find(leak) == std::string::npos, leak);
    }
}

TEST_CASE("generation is deterministic and side-effect free") {
    World w;
    w.history("U1", Activity::FileRead, 3);
    const auto id = w.mass_download("U1", 40);
    const auto before_alerts = irm::test::slurp(w.dir / "alerts.jsonl");
    const auto before_events = w.store.event_count();

    const auto c1 = assemble_context(id, w.sources());
    const auto c2 = assemble_context(id, w.sources());
    CHECK(c1 == c2);
    TemplateGenerator gen;
    CHECK(gen.generate(c1) == gen.generate(c2));
    CHECK(to_json(gen.generate(c1)).dump() == to_json(gen.generate(c2)).dump());

    CHECK(irm::test::slurp(w.dir / "alerts.jsonl") == before_alerts);
    CHECK(w.store.event_count() == before_events);
    CHECK(w.store.get_alert(id)->status == AlertStatus::Open);
    CHECK_FALSE(w.store.get_alert(id)->recommendation);
}

TEST_CASE("external generator") {
    const auto c = mass_download_context();
    const auto tmpl = TemplateGenerator().generate(c);

    SUBCASE("valid output is used") {
        ExternalGenerator gen({"/bin/sh", "-c",
                               "cat >/dev/null; echo '{\"summary\":\"s\",\"reasoning\":[{\"observation\":\"o\","
                               "\"inference\":\"i\"}],\"actions\":[\"FlagUser\"],\"confidence\":\"Medium\"}'"});
        auto r = gen.generate(c);
        CHECK(r.summary == "s");
        CHECK(r.actions == std::vector<RecAction>{RecAction::FlagUser});
        CHECK(r.generator == "/bin/sh");
        CHECK_FALSE(r.fallback_reason);
    }
    SUBCASE("zero reasoning steps fall back") {
        ExternalGenerator gen({"/bin/sh", "-c",
                               "cat >/dev/null; echo '{\"summary\":\"s\",\"reasoning\":[],\"actions\":[\"FlagUser\"],"
                               "\"confidence\":\"High\"}'"});
        auto r = gen.generate(c);
        REQUIRE(r.fallback_reason);
        CHECK(r.fallback_reason->find("no reasoning steps") != std::string::npos);
        CHECK(r.actions == tmpl.actions);
        CHECK(r.steps == tmpl.steps);
    }
    SUBCASE("unknown action falls back") {
        ExternalGenerator gen({"/bin/sh", "-c",
                               "cat >/dev/null; echo '{\"summary\":\"s\",\"reasoning\":[{\"observation\":\"o\","
                               "\"inference\":\"i\"}],\"actions\":[\"Nuke\"],\"confidence\":\"High\"}'"});
        CHECK(gen.generate(c).fallback_reason);
    }
    SUBCASE("non-zero exit falls back") {
        ExternalGenerator gen({"/bin/sh", "-c", "cat >/dev/null; exit 3"});
        auto r = gen.generate(c);
        REQUIRE(r.fallback_reason);
        CHECK(r.fallback_reason->find("3") != std::string::npos);
    }
    SUBCASE("missing binary falls back") {
        ExternalGenerator gen({"/nonexistent/generator"});
        CHECK(gen.generate(c).fallback_reason);
    }
    SUBCASE("timeout kills the child") {
        ExternalGenerator gen({"/bin/sh", "-c", "sleep 5"}, std::chrono::milliseconds{200});
        const auto t0 = std::chrono::steady_clock::now();
        auto r = gen.generate(c);
        const auto took = std::chrono::steady_clock::now() - t0;
        CHECK(took < std::chrono::seconds{3});
        REQUIRE(r.fallback_reason);
        CHECK(*r.fallback_reason == "GeneratorTimeout");
        CHECK(r.actions == tmpl.actions);
    }
}

TEST_CASE("generator sees the context on stdin") {
    const auto c = mass_download_context();
    auto p = run_process({"/bin/cat"}, to_json(c).dump(), std::chrono::seconds{5});
    CHECK(p.exit_code == 0);
    CHECK_FALSE(p.timed_out);
    CHECK(nlohmann::json::parse(p.out)["policy_id"] == "P-DM-01");
}

TEST_CASE("recommendation json round trip") {
    const auto r = TemplateGenerator().generate(mass_download_context());
    const auto back = recommendation_from_json(to_json(r));
    CHECK(back == r);
    CHECK_THROWS_AS(recommendation_from_json(nlohmann::json::array()), Error);
    CHECK_THROWS_AS(recommendation_from_json(nlohmann::json{{"summary", ""}}), Error);
}

TEST_CASE("template tables load") {
    auto t = TemplateTable::load(irm::test::config_file("templates.json"));
    CHECK(t.high_at == 2);
    CHECK(t.steps.count("benign") == 1);
    CHECK_THROWS_AS(TemplateTable::from_json_text("{\"summary\": 3}"), Error);
}
