#include "irm/recommend.hpp"

#include "irm/error.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <poll.h>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace irm {

namespace {

constexpr std::array<std::string_view, 3> kConfidenceNames{"Low", "Medium", "High"};
constexpr std::array<std::string_view, 7> kRecActionNames{"AlertOnly",        "RevokePrivilege", "RestrictFileAccess",
                                                          "FlagUser",         "DisconnectDevice", "Investigate",
                                                          "Dismiss"};
constexpr std::array<std::string_view, 4> kIpNames{"NoAddress", "Trusted", "Unknown", "Blacklisted"};

int trust_rank(DeviceTrust t) {
    switch (t) {
        case DeviceTrust::ManagedCompliant: return 0;
        case DeviceTrust::ManagedNonCompliant: return 1;
        case DeviceTrust::Unknown: return 2;
        case DeviceTrust::Unmanaged: return 3;
    }
    return 2;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void replace_all(std::string& s, std::string_view key, std::string_view value) {
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
        s.replace(pos, key.size(), value);
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::vector<ActivityEvent> evidence_events(const RiskStore& store, const std::string& user, Timestamp from,
                                           Timestamp to, const std::vector<std::string>& ids) {
    EventQuery q;
    q.user_id = user;
    q.from = from;
    q.to = to;
    q.limit = 100000;
    auto events = store.query_events(q);
    if (ids.empty()) return events;
    std::vector<ActivityEvent> out;
    for (auto& e : events) {
        if (std::find(ids.begin(), ids.end(), e.event_id) != ids.end()) out.push_back(std::move(e));
    }
    return out;
}

std::optional<Activity> most_frequent(const std::vector<ActivityEvent>& events) {
    std::array<std::size_t, kActivityCount> counts{};
    for (const auto& e : events) ++counts[static_cast<std::size_t>(e.activity)];
    const auto it = std::max_element(counts.begin(), counts.end());
    if (*it == 0) return std::nullopt;
    return static_cast<Activity>(it - counts.begin());
}

}  // namespace

std::string_view to_string(Confidence c) { return kConfidenceNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(RecAction a) { return kRecActionNames[static_cast<std::size_t>(a)]; }
std::string_view to_string(IpStanding s) { return kIpNames[static_cast<std::size_t>(s)]; }

std::optional<Confidence> parse_confidence(std::string_view s) {
    for (std::size_t i = 0; i < kConfidenceNames.size(); ++i) {
        if (kConfidenceNames[i] == s) return static_cast<Confidence>(i);
    }
    return std::nullopt;
}

std::optional<RecAction> parse_rec_action(std::string_view s) {
    for (std::size_t i = 0; i < kRecActionNames.size(); ++i) {
        if (kRecActionNames[i] == s) return static_cast<RecAction>(i);
    }
    return std::nullopt;
}

RecAction rec_action_for(ActionKind k) { return static_cast<RecAction>(static_cast<int>(k)); }

Json to_json(const RecommendationContext& c) {
    Json j;
    j["alert_id"] = c.alert_id;
    j["origin"] = to_string(c.origin);
    j["severity"] = to_string(c.severity);
    j["trigger"] = c.trigger;
    if (c.policy_id) j["policy_id"] = *c.policy_id;
    if (c.policy_action) j["policy_action"] = to_string(*c.policy_action);
    if (c.trigger_activity) j["trigger_activity"] = to_string(*c.trigger_activity);
    j["score"] = c.score;
    j["user"] = {{"user_id", c.user_id}, {"department", c.department}, {"privilege", to_string(c.privilege)}};
    Json history;
    history["has_history"] = c.has_history;
    history["activity_counts_30d"] = c.activity_counts_30d;
    history["similar_actions_30d"] = c.similar_actions_30d;
    history["prior_alerts"] = c.prior_alerts;
    history["prior_daily_mean"] = c.prior_daily_mean;
    history["evidence_count"] = c.evidence_count;
    history["baseline_delta"] = c.baseline_delta ? Json(*c.baseline_delta) : Json(nullptr);
    j["history"] = std::move(history);
    j["org_norms"] = {{"department_median", c.department_median ? Json(*c.department_median) : Json(nullptr)},
                      {"department_peers", c.department_peers}};
    j["environment"] = {
        {"device_trust", to_string(c.device_trust)}, {"ip", to_string(c.ip)}, {"off_hours", c.off_hours}};
    j["no_history_markers"] = c.no_history_markers;
    return j;
}

Json to_json(const Recommendation& r) {
    Json j;
    j["summary"] = r.summary;
    auto steps = Json::array();
    for (const auto& s : r.steps) steps.push_back({{"observation", s.observation}, {"inference", s.inference}});
    j["reasoning"] = std::move(steps);
    auto actions = Json::array();
    for (auto a : r.actions) actions.push_back(to_string(a));
    j["actions"] = std::move(actions);
    j["confidence"] = to_string(r.confidence);
    j["generator"] = r.generator;
    if (r.fallback_reason) j["fallback_reason"] = *r.fallback_reason;
    return j;
}

Recommendation recommendation_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, "recommendation: " + msg); };
    if (!j.is_object()) fail("not an object");
    Recommendation r;
    try {
        r.summary = j.value("summary", std::string{});
        if (r.summary.empty()) fail("empty summary");
        for (const auto& s : j.value("reasoning", nlohmann::json::array())) {
            ReasoningStep step{s.at("observation").get<std::string>(), s.at("inference").get<std::string>()};
            if (step.observation.empty() || step.inference.empty()) fail("empty reasoning step");
            r.steps.push_back(std::move(step));
        }
        if (r.steps.empty()) fail("no reasoning steps");
        for (const auto& a : j.value("actions", nlohmann::json::array())) {
            auto act = parse_rec_action(a.get<std::string>());
            if (!act) fail("unknown action " + a.get<std::string>());
            r.actions.push_back(*act);
        }
        if (r.actions.empty()) fail("no actions");
        auto conf = parse_confidence(j.value("confidence", std::string{}));
        if (!conf) fail("unknown confidence");
        r.confidence = *conf;
        r.generator = j.value("generator", std::string{"external"});
    } catch (const nlohmann::json::exception& e) {
        fail(e.what());
    }
    return r;
}

RecommendationContext assemble_context(const std::string& alert_id, const ContextSources& src) {
    const auto alert = src.store.get_alert(alert_id);
    if (!alert) throw Error(ErrorCode::AlertNotFound, "no alert " + alert_id);

    RecommendationContext c;
    c.alert_id = alert->alert_id;
    c.origin = alert->origin;
    c.severity = alert->severity;
    c.score = alert->score;
    c.user_id = alert->subject;
    const auto user = src.users.resolve(c.user_id);
    c.department = user.department;
    c.privilege = user.privilege;

    // Evidence window and events.
    Timestamp from = alert->created_at - std::chrono::hours{24};
    Timestamp to = alert->created_at;
    std::vector<std::string> ids;
    const Policy* policy = nullptr;
    switch (alert->origin) {
        case AlertOrigin::PolicyViolation: {
            if (auto v = src.store.violation(alert->origin_ref)) {
                from = v->first_event_at;
                to = v->fired_at;
                ids = v->triggering_event_ids;
                c.policy_id = v->policy_id;
                c.trigger = v->policy_name;
            }
            if (c.policy_id) {
                for (const auto& p : src.policies) {
                    if (p.policy_id == *c.policy_id) policy = &p;
                }
            }
            break;
        }
        case AlertOrigin::ScoreThreshold: {
            c.trigger = "PRISM score";
            if (auto s = src.store.session(alert->origin_ref)) {
                from = s->start;
                to = s->end;
            }
            break;
        }
        case AlertOrigin::CumulativeRisk: c.trigger = "cumulative AI risk"; break;
    }
    if (c.trigger.empty()) c.trigger = std::string(to_string(alert->origin));
    const auto evidence = evidence_events(src.store, c.user_id, from, to, ids);

    if (policy) {
        c.policy_action = policy->action;
        if (!policy->trigger.params.activities.empty()) c.trigger_activity = policy->trigger.params.activities.front();
    }
    if (!c.trigger_activity) c.trigger_activity = most_frequent(evidence);

    // History strictly before the evidence window.
    const Timestamp hist_from = from - kHistoryWindow;
    const Timestamp hist_to = from - Seconds{1};
    const auto counts = src.store.activity_counts(c.user_id, hist_from, hist_to);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < kActivityCount; ++i) {
        if (counts[i] == 0) continue;
        c.activity_counts_30d[std::string(to_string(static_cast<Activity>(i)))] = counts[i];
        total += counts[i];
    }
    c.has_history = total > 0;
    if (!c.has_history) c.no_history_markers.push_back("no_prior_activity");

    c.prior_alerts = src.store.prior_alert_count(c.user_id, c.alert_id);
    if (c.prior_alerts == 0) c.no_history_markers.push_back("no_prior_alerts");

    if (c.trigger_activity) {
        const auto idx = static_cast<std::size_t>(*c.trigger_activity);
        c.similar_actions_30d = counts[idx];
        c.evidence_count = static_cast<std::uint64_t>(std::count_if(
            evidence.begin(), evidence.end(), [&](const auto& e) { return e.activity == *c.trigger_activity; }));
        c.prior_daily_mean = static_cast<double>(c.similar_actions_30d) / 30.0;
        if (c.similar_actions_30d > 0) {
            c.baseline_delta = static_cast<double>(c.evidence_count) - c.prior_daily_mean;
        } else {
            c.no_history_markers.push_back("no_similar_actions");
        }

        std::vector<double> peer_counts;
        if (!c.department.empty()) {
            for (const auto& peer : src.users.users_in_department(c.department)) {
                if (peer == c.user_id) continue;
                peer_counts.push_back(static_cast<double>(src.store.activity_counts(peer, hist_from, hist_to)[idx]));
            }
        }
        c.department_peers = peer_counts.size();
        if (peer_counts.empty()) {
            c.no_history_markers.push_back("no_department_peers");
        } else {
            c.department_median = median(std::move(peer_counts));
        }
    } else {
        c.no_history_markers.push_back("no_trigger_activity");
    }

    int worst_trust = -1;
    for (const auto& e : evidence) {
        if (trust_rank(e.device_trust) > worst_trust) {
            worst_trust = trust_rank(e.device_trust);
            c.device_trust = e.device_trust;
        }
        IpStanding ip = IpStanding::NoAddress;
        if (e.ip_address) {
            if (src.reputation.blacklist.contains(*e.ip_address)) ip = IpStanding::Blacklisted;
            else if (src.reputation.trusted.contains(*e.ip_address)) ip = IpStanding::Trusted;
            else ip = IpStanding::Unknown;
        }
        c.ip = std::max(c.ip, ip);
        if (hours_points(e, src.prism) > 0) c.off_hours = true;
    }
    return c;
}

std::vector<std::string> adverse_signals(const RecommendationContext& c) {
    std::vector<std::string> out;
    if (c.off_hours) out.push_back("off_hours");
    if (c.trigger_activity && c.similar_actions_30d == 0) out.push_back("no_history");
    if (c.baseline_delta && c.prior_daily_mean > 0 &&
        static_cast<double>(c.evidence_count) > 3.0 * c.prior_daily_mean) {
        out.push_back("spike");
    }
    if (c.department_median) {
        const double mine = static_cast<double>(c.similar_actions_30d + c.evidence_count);
        if (mine > 0 && mine > 2.0 * *c.department_median) out.push_back("above_department");
    }
    if (c.device_trust != DeviceTrust::ManagedCompliant) out.push_back("untrusted_device");
    if (c.ip == IpStanding::Unknown) out.push_back("ip_unknown");
    if (c.ip == IpStanding::Blacklisted) out.push_back("ip_blacklisted");
    if (c.prior_alerts > 0) out.push_back("prior_alerts");
    return out;
}

TemplateTable TemplateTable::from_json_text(const std::string& text) {
    TemplateTable t;
    try {
        auto doc = nlohmann::json::parse(text);
        t.summary = doc.at("summary").get<std::string>();
        for (const auto& [origin, actions] : doc.at("origin_actions").items()) {
            if (!parse_alert_origin(origin)) throw Error(ErrorCode::ConfigError, "unknown origin " + origin);
            auto list = actions.get<std::vector<std::string>>();
            for (const auto& a : list) {
                if (a != "{policy_action}" && !parse_rec_action(a)) {
                    throw Error(ErrorCode::ConfigError, "unknown action " + a);
                }
            }
            t.origin_actions[origin] = std::move(list);
        }
        for (const auto& [name, step] : doc.at("steps").items()) {
            t.steps[name] = {step.at("observation").get<std::string>(), step.at("inference").get<std::string>()};
        }
        for (const char* required : {"trigger", "benign"}) {
            if (!t.steps.count(required)) throw Error(ErrorCode::ConfigError, std::string("missing step ") + required);
        }
        if (doc.contains("confidence")) {
            t.high_at = doc.at("confidence").value("high_at", t.high_at);
            t.medium_at = doc.at("confidence").value("medium_at", t.medium_at);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("template table: ") + e.what());
    }
    return t;
}

TemplateTable TemplateTable::defaults() { return from_json_text(default_templates_json()); }

TemplateTable TemplateTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

TemplateGenerator::TemplateGenerator(TemplateTable table) : table_(std::move(table)) {}

Recommendation TemplateGenerator::generate(const RecommendationContext& c) const {
    const std::string activity = c.trigger_activity ? std::string(to_string(*c.trigger_activity)) : "activity";
    auto fill = [&](std::string s) {
        replace_all(s, "{severity}", to_string(c.severity));
        replace_all(s, "{trigger}", c.trigger);
        replace_all(s, "{user}", c.user_id);
        replace_all(s, "{score}", fixed(c.score, 3));
        replace_all(s, "{activity}", activity);
        replace_all(s, "{similar}", std::to_string(c.similar_actions_30d));
        replace_all(s, "{evidence}", std::to_string(c.evidence_count));
        replace_all(s, "{mean}", fixed(c.prior_daily_mean, 2));
        replace_all(s, "{median}", c.department_median ? fixed(*c.department_median, 1) : "n/a");
        replace_all(s, "{device}", to_string(c.device_trust));
        replace_all(s, "{prior}", std::to_string(c.prior_alerts));
        return s;
    };
    auto step = [&](const std::string& name) -> std::optional<ReasoningStep> {
        auto it = table_.steps.find(name);
        if (it == table_.steps.end()) return std::nullopt;
        return ReasoningStep{fill(it->second.observation), fill(it->second.inference)};
    };

    Recommendation r;
    r.generator = "template";
    r.summary = fill(table_.summary);
    r.steps.push_back(*step("trigger"));

    const auto signals = adverse_signals(c);
    for (const auto& s : signals) {
        if (auto st = step(s)) r.steps.push_back(*st);
    }
    if (c.trigger_activity && c.similar_actions_30d > 0) {
        if (auto st = step("history")) r.steps.push_back(*st);
    }
    if (c.department_median && std::find(signals.begin(), signals.end(), "above_department") == signals.end()) {
        if (auto st = step("within_department")) r.steps.push_back(*st);
    }
    if (signals.empty()) r.steps.push_back(*step("benign"));

    auto origin_it = table_.origin_actions.find(std::string(to_string(c.origin)));
    if (origin_it != table_.origin_actions.end()) {
        for (const auto& a : origin_it->second) {
            RecAction act;
            if (a == "{policy_action}") {
                if (!c.policy_action || *c.policy_action == ActionKind::AlertOnly) continue;
                act = rec_action_for(*c.policy_action);
            } else {
                act = *parse_rec_action(a);
            }
            if (std::find(r.actions.begin(), r.actions.end(), act) == r.actions.end()) r.actions.push_back(act);
        }
    }
    if (r.actions.empty()) r.actions.push_back(RecAction::Investigate);
    if (signals.empty()) r.actions.push_back(RecAction::Dismiss);

    r.confidence = signals.size() >= table_.high_at     ? Confidence::High
                   : signals.size() >= table_.medium_at ? Confidence::Medium
                                                        : Confidence::Low;
    return r;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::milliseconds timeout) {
    ProcessResult result;
    if (argv.empty()) return result;
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) return result;
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        return result;
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        return result;
    }
    if (pid == 0) {
        ::setpgid(0, 0);  // own group, so a timeout also takes down grandchildren
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    int wfd = in_pipe[1];
    const int rfd = out_pipe[0];
    ::fcntl(wfd, F_SETFL, O_NONBLOCK);
    std::signal(SIGPIPE, SIG_IGN);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t written = 0;
    if (input.empty()) {
        ::close(wfd);
        wfd = -1;
    }
    bool open_read = true;
    while (open_read) {
        const auto left =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            break;
        }
        pollfd fds[2];
        nfds_t n = 0;
        fds[n++] = {rfd, POLLIN, 0};
        if (wfd >= 0) fds[n++] = {wfd, POLLOUT, 0};
        const int rc = ::poll(fds, n, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (wfd >= 0 && n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            const auto w = ::write(wfd, input.data() + written, input.size() - written);
            if (w > 0) written += static_cast<std::size_t>(w);
            if (w < 0 && errno != EAGAIN) written = input.size();
            if (written >= input.size()) {
                ::close(wfd);
                wfd = -1;
            }
        }
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            char buf[4096];
            const auto r = ::read(rfd, buf, sizeof buf);
            if (r > 0) result.out.append(buf, static_cast<std::size_t>(r));
            else if (r == 0 || errno != EINTR) open_read = false;
        }
    }
    if (wfd >= 0) ::close(wfd);
    ::close(rfd);
    if (result.timed_out) ::kill(-pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (!result.timed_out && WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

ExternalGenerator::ExternalGenerator(std::vector<std::string> argv, std::chrono::milliseconds timeout,
                                     TemplateTable fallback)
    : argv_(std::move(argv)), timeout_(timeout), fallback_(std::move(fallback)) {}

Recommendation ExternalGenerator::generate(const RecommendationContext& c) const {
    auto fallback = [&](std::string reason) {
        auto r = fallback_.generate(c);
        r.fallback_reason = std::move(reason);
        return r;
    };
    const auto proc = run_process(argv_, to_json(c).dump(), timeout_);
    if (proc.timed_out) return fallback(std::string(to_string(ErrorCode::GeneratorTimeout)));
    if (proc.exit_code != 0) return fallback("generator exited with code " + std::to_string(proc.exit_code));
    try {
        auto r = recommendation_from_json(nlohmann::json::parse(proc.out));
        r.generator = argv_.front();
        return r;
    } catch (const std::exception& e) {
        return fallback(std::string("rejected generator output: ") + e.what());
    }
}

}  // namespace irm
