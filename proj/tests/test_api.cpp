#include "doctest.h"
#include "support.hpp"

#include "irm/api.hpp"
#include "httplib.h"

#include <random>
#include <thread>

using namespace irm;
using irm::test::TempDir;
using irm::test::at;
using irm::test::make_event;

namespace {

constexpr const char* kToken = "test-token";

ServiceConfig api_config(const std::filesystem::path& data) {
    ServiceConfig cfg;
    cfg.data_dir = data;
    cfg.sync = false;
    cfg.auth_token = kToken;
    cfg.airs.initial.epochs = 40;
    cfg.airs.finetune.epochs = 20;
    return cfg;
}

// Publishes a small model so alerts can carry S_AI.
void seed_model(Engine& e) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    std::vector<LabeledVector> data;
    for (int i = 0; i < 200; ++i) {
        FeatureVector v;
        for (auto& x : v.values) x = u(rng);
        data.push_back({v, 0.1});
    }
    auto r = train_initial(data, 0.3, e.config().airs);
    e.airs().set_baseline(r.train_set, r.holdout_set);
    e.airs().publish(r.model);
}

std::string ai_alert(Engine& e, double s_ai, const std::string& user = "U1") {
    Alert a;
    a.subject = user;
    a.created_at = at("01/04/2010 10:00:00");
    a.origin = AlertOrigin::CumulativeRisk;
    a.score = s_ai;
    a.s_ai = s_ai;
    FeatureVector v;
    v.values.fill(0.5);
    a.features = v;
    return e.store().upsert_alert(a).alert_id;
}

struct Harness {
    TempDir dir{"api"};
    Service service;
    ApiServer api;
    int port = 0;
    std::thread thread;

    Harness() : service(api_config(dir.path())), api(service, kToken) {
        port = api.bind_any("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { api.listen_after_bind(); });
        api.wait_until_ready();
    }
    ~Harness() {
        api.stop();
        thread.join();
    }

    httplib::Client client(bool auth = true) const {
        httplib::Client c("127.0.0.1", port);
        if (auth) c.set_bearer_token_auth(kToken);
        c.set_read_timeout(30, 0);
        return c;
    }
    Engine& engine() { return service.engine_unlocked(); }
};

nlohmann::json body(const httplib::Result& r) {
    REQUIRE(r);
    return nlohmann::json::parse(r->body);
}

std::string feedback_body(double s_user) { return nlohmann::json{{"s_user", s_user}, {"analyst_id", "ana"}}.dump(); }

}  // namespace

TEST_CASE("every route needs the token") {
    Harness h;
    auto anon = h.client(false);
    for (const char* path : {"/v1/alerts", "/v1/metrics", "/v1/dashboard/overview", "/v1/dashboard/urgent"}) {
        auto r = anon.Get(path);
        REQUIRE(r);
        CHECK(r->status == 401);
        CHECK(body(r)["code"] == "Unauthorized");
    }
    auto r = anon.Post("/v1/events", "[]", "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);

    httplib::Client wrong("127.0.0.1", h.port);
    wrong.set_bearer_token_auth("nope");
    CHECK(wrong.Get("/v1/alerts")->status == 401);

    CHECK(h.client().Get("/v1/alerts")->status == 200);
    CHECK(h.client().Get("/v1/nothing")->status == 404);
}

TEST_CASE("feedback validation and blend") {
    Harness h;
    seed_model(h.engine());
    const auto id = ai_alert(h.engine(), 0.6);
    auto c = h.client();

    auto r = c.Post(("/v1/alerts/" + id + "/feedback").c_str(), feedback_body(1.5), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(body(r)["code"] == "OutOfRange");
    CHECK(h.engine().airs().feedback().size() == 0);

    r = c.Post(("/v1/alerts/" + id + "/feedback").c_str(), "{\"note\": 1}", "application/json");
    CHECK(r->status == 400);
    r = c.Post("/v1/alerts/A-404/feedback", feedback_body(0.5), "application/json");
    CHECK(r->status == 404);

    r = c.Post(("/v1/alerts/" + id + "/feedback").c_str(), feedback_body(0.9), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto j = body(r);
    CHECK(j["S_AI"].get<double>() == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(j["alpha"].get<double>() == 0.5);
    CHECK(j["S_final"].get<double>() == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(h.engine().store().get_alert(id)->feedback_ref);
}

TEST_CASE("status transitions over http") {
    Harness h;
    seed_model(h.engine());
    const auto id = ai_alert(h.engine(), 0.4);
    auto c = h.client();
    const auto path = "/v1/alerts/" + id + "/status";

    auto r = c.Post(path.c_str(), "{\"status\": \"Rejected\"}", "application/json");
    CHECK(r->status == 409);
    CHECK(body(r)["code"] == "MissingFeedback");

    r = c.Post(path.c_str(), "{\"status\": \"Resolved\", \"note\": \"fixed\"}", "application/json");
    CHECK(r->status == 200);
    CHECK(body(r)["status"] == "Resolved");

    r = c.Post(path.c_str(), "{\"status\": \"Open\"}", "application/json");
    CHECK(r->status == 409);
    CHECK(body(r)["code"] == "IllegalTransition");

    r = c.Post(path.c_str(), "{\"status\": \"Sideways\"}", "application/json");
    CHECK(r->status == 400);

    const auto detail = body(c.Get(("/v1/alerts/" + id).c_str()));
    REQUIRE(detail["audit"].size() == 1);
    CHECK(detail["audit"][0]["to"] == "Resolved");
}

TEST_CASE("fiftieth feedback retrains the model") {
    Harness h;
    seed_model(h.engine());
    const auto v0 = h.engine().model_version();
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) ids.push_back(ai_alert(h.engine(), 0.3 + 0.01 * i, "U" + std::to_string(i % 4)));
    auto c = h.client();
    for (int i = 0; i < 49; ++i) {
        auto r = c.Post(("/v1/alerts/" + ids[i] + "/feedback").c_str(), feedback_body(0.1), "application/json");
        REQUIRE(r->status == 200);
    }
    h.engine().wait_for_training();
    CHECK(h.engine().model_version() == v0);
    CHECK(body(c.Get("/v1/metrics"))["feedback_counters"]["unconsumed"] == 49);

    auto r = c.Post(("/v1/alerts/" + ids[49] + "/feedback").c_str(), feedback_body(0.1), "application/json");
    REQUIRE(r->status == 200);
    h.engine().wait_for_training();
    CHECK(h.engine().model_version() == v0 + 1);
    const auto m = body(c.Get("/v1/metrics"));
    CHECK(m["model"]["version"] == v0 + 1);
    CHECK(m["feedback_counters"]["unconsumed"] == 0);
    CHECK(m["feedback_counters"]["retrains"] == 1);
}

TEST_CASE("retrain endpoint") {
    Harness h;
    auto c = h.client();
    auto r = c.Post("/v1/model/retrain", "", "application/json");
    CHECK(r->status == 409);
    seed_model(h.engine());
    const auto v0 = h.engine().model_version();
    r = c.Post("/v1/model/retrain", "", "application/json");
    REQUIRE(r->status == 200);
    CHECK(body(r)["model_version"] == v0 + 1);
}

TEST_CASE("api ingest matches the engine") {
    std::vector<ActivityEvent> events;
    std::mt19937 rng(9);
    for (int i = 0; i < 300; ++i) {
        auto e = make_event("E" + std::to_string(i), at("01/04/2010 21:00:00") + Seconds{i * 37},
                            "U" + std::to_string(rng() % 4),
                            std::vector<Activity>{Activity::Login, Activity::FileWrite, Activity::FileDelete,
                                                  Activity::LoginFailed, Activity::FileUpload}[rng() % 5]);
        e.ip_address = "203.0.113." + std::to_string(rng() % 5);
        events.push_back(std::move(e));
    }
    auto payload = Json::array();
    for (const auto& e : events) payload.push_back(to_json(e));
    payload.push_back({{"event_id", "broken"}});

    Harness h;
    auto r = h.client().Post("/v1/events?flush=true", payload.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto via_api = body(r);

    TempDir dir("api");
    Engine direct(api_config(dir.path()));
    auto counts = direct.run_events(events);
    counts += direct.flush();

    CHECK(via_api["events_stored"] == counts.events_stored);
    CHECK(via_api["errors"] == 1);
    CHECK(via_api["sessions_scored"] == counts.sessions_scored);
    CHECK(via_api["violations"] == counts.violations);
    CHECK(via_api["alerts"] == counts.alerts);

    auto summary = [](const std::vector<Alert>& alerts) {
        std::vector<std::string> out;
        for (const auto& a : alerts) {
            out.push_back(a.alert_id + "|" + a.subject + "|" + std::string(to_string(a.origin)) + "|" + a.origin_ref);
        }
        return out;
    };
    CHECK(summary(h.engine().store().alerts()) == summary(direct.store().alerts()));

    const auto list = body(h.client().Get("/v1/alerts?limit=1000"));
    CHECK(list["total"] == direct.store().alerts().size());
    const auto urgent = body(h.client().Get("/v1/dashboard/urgent?n=5"));
    CHECK(urgent["urgent"].size() <= 5);
    if (!direct.store().sessions().empty()) {
        const auto user = direct.store().sessions().front().user_id;
        CHECK(h.client().Get(("/v1/users/" + user + "/risk").c_str())->status == 200);
    }
    CHECK(h.client().Get("/v1/users/nobody/risk")->status == 404);
}

TEST_CASE("csv upload and bad bodies") {
    Harness h;
    auto c = h.client();
    auto r = c.Post("/v1/events?source=logon",
                    "id,date,user,pc,activity\nX1,01/04/2010 09:00:00,U1,PC-1,Logon\nX2,bad,U1,PC-1,Logon\n", "text/csv");
    REQUIRE(r->status == 200);
    CHECK(body(r)["events_stored"] == 1);
    CHECK(body(r)["errors"] == 1);
    CHECK(c.Post("/v1/events", "id,date\n", "text/csv")->status == 400);
    CHECK(c.Post("/v1/events", "{not json", "application/json")->status == 400);
    CHECK(c.Get("/v1/alerts?status=Weird")->status == 400);
    CHECK(c.Get("/v1/alerts?limit=x")->status == 422);
}

TEST_CASE("error status mapping") {
    CHECK(http_status_for(ErrorCode::OutOfRange) == 422);
    CHECK(http_status_for(ErrorCode::IllegalTransition) == 409);
    CHECK(http_status_for(ErrorCode::AlertNotFound) == 404);
    CHECK(http_status_for(ErrorCode::StorageFull) == 507);
    const auto env = error_envelope("X", "y");
    CHECK(env["code"] == "X");
    CHECK(env["detail"].is_object());
}
