#include "irm/api.hpp"

#include "irm/error.hpp"
#include "httplib.h"

#include <sstream>

namespace irm {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status_for(e.code()), error_envelope(std::string(to_string(e.code())), e.what()));
}

Json alert_view(const Alert& a) {
    auto j = to_json(a);
    if (a.recommendation) {
        try {
            j["recommendation"] = Json::parse(*a.recommendation);
        } catch (const nlohmann::json::exception&) {
            // Leave plain text as is.
        }
    }
    return j;
}

nlohmann::json parse_body(const httplib::Request& req) {
    try {
        return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedRow, std::string("request body is not JSON: ") + e.what());
    }
}

std::size_t param_size(const httplib::Request& req, const char* key, std::size_t fallback, std::size_t max) {
    if (!req.has_param(key)) return fallback;
    try {
        return std::min<std::size_t>(max, std::stoul(req.get_param_value(key)));
    } catch (const std::exception&) {
        throw Error(ErrorCode::OutOfRange, std::string(key) + " must be a non-negative integer");
    }
}

}  // namespace

int http_status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRow:
        case ErrorCode::BadTimestamp:
        case ErrorCode::UnknownActivity:
        case ErrorCode::SchemaMismatch:
        case ErrorCode::ShapeMismatch:
        case ErrorCode::InvalidRange:
        case ErrorCode::ConfigError:
        case ErrorCode::PolicyConfigError:
        case ErrorCode::LabelMismatch:
            return 400;
        case ErrorCode::AlertNotFound:
        case ErrorCode::NotFound:
            return 404;
        case ErrorCode::IllegalTransition:
        case ErrorCode::MissingFeedback:
        case ErrorCode::Precondition:
        case ErrorCode::UncalibratedModel:
        case ErrorCode::InsufficientData:
        case ErrorCode::DuplicateAction:
            return 409;
        case ErrorCode::OutOfRange:
            return 422;
        case ErrorCode::StorageFull:
            return 507;
        case ErrorCode::GeneratorTimeout:
            return 504;
        default:
            return 500;
    }
}

Json error_envelope(const std::string& code, const std::string& message, const Json& detail) {
    return Json{{"code", code}, {"message", message}, {"detail", detail}};
}

ApiServer::ApiServer(Service& service, std::string token)
    : service_(service), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen(const std::string& host, int port) { return server_->listen(host, port); }
int ApiServer::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }
bool ApiServer::listen_after_bind() { return server_->listen_after_bind(); }
void ApiServer::stop() {
    if (server_) server_->stop();
}
void ApiServer::wait_until_ready() { server_->wait_until_ready(); }

void ApiServer::routes() {
    auto& srv = *server_;

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        const auto header = req.get_header_value("Authorization");
        if (token_.empty() || header != "Bearer " + token_) {
            send_json(res, 401, error_envelope("Unauthorized", "missing or invalid bearer token"));
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, e);
        } catch (const nlohmann::json::exception& e) {
            send_json(res, 400, error_envelope("MalformedRow", e.what()));
        } catch (const std::exception& e) {
            send_json(res, 500, error_envelope("Internal", e.what()));
        }
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const std::string code = res.status == 404 ? "NotFound" : "HttpError";
            send_json(res, res.status, error_envelope(code, "no such route"));
        }
    });

    srv.Post("/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
        std::vector<RowOutcome> rows;
        const auto type = req.get_header_value("Content-Type");
        if (type.rfind("text/csv", 0) == 0) {
            const auto source_name = req.get_param_value("source");
            EventSource source;
            if (source_name == "logon") source = EventSource::Logon;
            else if (source_name == "device") source = EventSource::Device;
            else if (source_name == "file") source = EventSource::File;
            else throw Error(ErrorCode::MalformedRow, "CSV upload needs ?source=logon|device|file");
            ParseOptions opts;
            opts.tz = service_.engine_unlocked().prism().tz;
            CsvSourceReader reader(std::make_unique<std::istringstream>(req.body), source, opts);
            while (auto r = reader.next()) rows.push_back(std::move(*r));
        } else {
            auto body = parse_body(req);
            if (body.is_object() && body.contains("events")) body = body.at("events");
            if (!body.is_array()) throw Error(ErrorCode::MalformedRow, "expected a JSON array of events");
            for (std::size_t i = 0; i < body.size(); ++i) {
                RowOutcome r;
                r.line_no = i + 1;
                try {
                    r.event = event_from_json(body[i]);
                } catch (const Error& e) {
                    r.error = e;
                }
                rows.push_back(std::move(r));
            }
        }
        auto counts = service_.ingest(std::move(rows));
        if (req.get_param_value("flush") == "true") {
            counts += service_.with_engine([](Engine& e) { return e.flush(); });
        }
        send_json(res, 200, to_json(counts));
    });

    srv.Get("/v1/alerts", [this](const httplib::Request& req, httplib::Response& res) {
        std::optional<AlertStatus> status;
        std::optional<Severity> severity;
        if (req.has_param("status")) {
            status = parse_alert_status(req.get_param_value("status"));
            if (!status) throw Error(ErrorCode::MalformedRow, "unknown status filter");
        }
        if (req.has_param("severity")) {
            severity = parse_severity(req.get_param_value("severity"));
            if (!severity) throw Error(ErrorCode::MalformedRow, "unknown severity filter");
        }
        const auto user = req.get_param_value("user");
        const auto offset = param_size(req, "offset", 0, SIZE_MAX);
        const auto limit = param_size(req, "limit", 100, 1000);
        std::vector<Alert> hits;
        for (auto& a : service_.engine_unlocked().store().alerts()) {
            if (status && a.status != *status) continue;
            if (severity && a.severity != *severity) continue;
            if (!user.empty() && a.subject != user) continue;
            hits.push_back(std::move(a));
        }
        auto page = Json::array();
        for (std::size_t i = offset; i < hits.size() && page.size() < limit; ++i) page.push_back(alert_view(hits[i]));
        send_json(res, 200, Json{{"total", hits.size()}, {"offset", offset}, {"limit", limit}, {"alerts", page}});
    });

    srv.Get(R"(/v1/alerts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        auto& store = service_.engine_unlocked().store();
        auto a = store.get_alert(id);
        if (!a) throw Error(ErrorCode::AlertNotFound, "no alert " + id);
        auto j = alert_view(*a);
        auto audit = Json::array();
        for (const auto& r : store.audit(id)) audit.push_back(to_json(r));
        j["audit"] = std::move(audit);
        send_json(res, 200, j);
    });

    srv.Post(R"(/v1/alerts/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        const auto body = parse_body(req);
        if (!body.is_object() || !body.contains("s_user") || !body.at("s_user").is_number()) {
            throw Error(ErrorCode::MalformedRow, "body needs a numeric s_user");
        }
        auto& engine = service_.engine_unlocked();
        const auto record = engine.submit_feedback(id, body.at("s_user").get<double>(),
                                                   body.value("analyst_id", std::string{"analyst"}),
                                                   body.value("note", std::string{}), now_utc());
        send_json(res, 200,
                  Json{{"alert_id", id},
                       {"S_AI", record.s_ai},
                       {"S_user", record.s_user},
                       {"alpha", record.alpha_used},
                       {"S_final", record.s_final},
                       {"unconsumed_feedback", engine.airs().feedback().unconsumed_count()},
                       {"model_version", engine.model_version()}});
    });

    srv.Post(R"(/v1/alerts/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        const auto body = parse_body(req);
        const auto to = parse_alert_status(body.value("status", std::string{}));
        if (!to) throw Error(ErrorCode::MalformedRow, "unknown status");
        auto a = service_.engine_unlocked().transition(id, *to, body.value("note", std::string{}), now_utc());
        send_json(res, 200, alert_view(a));
    });

    srv.Post("/v1/model/retrain", [this](const httplib::Request&, httplib::Response& res) {
        auto& engine = service_.engine_unlocked();
        if (!engine.airs().has_model()) throw Error(ErrorCode::Precondition, "no AI model has been trained yet");
        auto m = engine.retrain(true);
        send_json(res, 200, Json{{"model_version", engine.model_version()}, {"retrained", m.has_value()}});
    });

    srv.Get("/v1/dashboard/overview", [this](const httplib::Request&, httplib::Response& res) {
        auto& engine = service_.engine_unlocked();
        auto d = to_json(build_dashboard(engine.store(), engine.prism()));
        d.erase("urgent");
        send_json(res, 200, d);
    });

    srv.Get("/v1/dashboard/urgent", [this](const httplib::Request& req, httplib::Response& res) {
        auto& engine = service_.engine_unlocked();
        const auto n = param_size(req, "n", kUrgentCount, 1000);
        const auto d = build_dashboard(engine.store(), engine.prism(), n);
        auto list = Json::array();
        for (const auto& a : d.urgent) list.push_back(alert_view(a));
        send_json(res, 200, Json{{"urgent", list}});
    });

    srv.Get(R"(/v1/users/([^/]+)/risk)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto user = req.matches[1].str();
        auto& store = service_.engine_unlocked().store();
        auto profile = store.profile(user);
        auto sessions = store.sessions(user);
        if (!profile && sessions.empty()) throw Error(ErrorCode::NotFound, "no risk data for " + user);
        RiskProfile p;
        p.user_id = user;
        if (profile) p = *profile;
        auto recent = Json::array();
        const std::size_t start = sessions.size() > 20 ? sessions.size() - 20 : 0;
        for (std::size_t i = start; i < sessions.size(); ++i) {
            const auto& s = sessions[i];
            recent.push_back({{"session_id", s.session_id},
                              {"end", format_iso(s.end)},
                              {"prism", s.prism.normalized},
                              {"band", to_string(s.prism.band)},
                              {"S_AI", s.s_ai ? Json(*s.s_ai) : Json(nullptr)}});
        }
        send_json(res, 200, Json{{"profile", to_json(p)}, {"recent_scores", recent}});
    });

    srv.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
        auto& engine = service_.engine_unlocked();
        auto j = to_json(engine.store().stats());
        auto model = engine.airs().model();
        j["model"] = {{"version", model ? model->version : 0}, {"trained_on", model ? model->trained_on : 0}};
        j["feedback_counters"] = {{"total", engine.airs().feedback().size()},
                                  {"unconsumed", engine.airs().feedback().unconsumed_count()},
                                  {"n_threshold", engine.airs().n_threshold()},
                                  {"retrains", engine.retrains()}};
        send_json(res, 200, j);
    });
}

}  // namespace irm
