#pragma once

#include "support.hpp"

#include "irm/airs.hpp"
#include "irm/autoencoder.hpp"
#include "irm/policy.hpp"
#include "irm/prism.hpp"
#include "irm/sensitivity.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace irm::oracle {

// Low-privilege user, five SharePoint moves at night from an unknown address
// on a non-compliant device.
inline Session worked_example_session() {
    Session s;
    s.session_id = "S-W-L1";
    s.user_id = "WX0001";
    s.device_id = "PC-WX01";
    for (int i = 0; i < 5; ++i) {
        auto e = test::make_event("W-F" + std::to_string(i + 1), test::at("03/04/2025 22:12:00") + Seconds{120 * i},
                                  "WX0001", Activity::FileMove, "PC-WX01");
        e.app_context = AppContext::SharePoint;
        e.ip_address = "203.0.113.77";
        e.device_trust = DeviceTrust::ManagedNonCompliant;
        s.events.push_back(e);
    }
    s.start = s.events.front().timestamp;
    s.end = s.events.back().timestamp;
    return s;
}

inline IpReputation office_reputation() {
    IpReputation rep;
    rep.trusted = IpList::from_text("10.0.0.0/8\n192.168.0.0/16\n");
    rep.blacklist = IpList::from_text("198.51.100.0/24\n");
    return rep;
}

struct RandomSession {
    Session session;
    UserRecord user;
    std::size_t actions = 0;
};

class SessionGen {
public:
    explicit SessionGen(std::uint64_t seed) : rng_(seed) {}

    ActivityEvent event(const std::string& id, Timestamp ts) {
        static const Activity kAll[] = {
            Activity::Login,      Activity::LoginFailed,       Activity::Logout,          Activity::DeviceConnect,
            Activity::FileUpload, Activity::FileCreate,        Activity::FileRead,        Activity::FileWrite,
            Activity::FileRename, Activity::FileMove,          Activity::FileDelete,      Activity::FileShareExternal,
            Activity::FileShareInternal, Activity::AttachmentShare, Activity::AttachmentEdit};
        static const char* kIps[] = {"10.2.3.4", "192.168.7.1", "203.0.113.9", "198.51.100.4"};
        auto e = test::make_event(id, ts, "U", kAll[pick(std::size(kAll))]);
        e.app_context = static_cast<AppContext>(pick(kAppContextCount));
        e.device_trust = static_cast<DeviceTrust>(pick(4));
        if (pick(5) != 0) e.ip_address = kIps[pick(std::size(kIps))];
        if (e.device_trust == DeviceTrust::Unmanaged && pick(2) == 0) e.raw_extra[extra_key::kDeviceNonCompliant] = "true";
        return e;
    }

    RandomSession next() {
        RandomSession r;
        r.user.user_id = "U";
        r.user.privilege = static_cast<Privilege>(pick(4));
        r.session.session_id = "S-" + std::to_string(n_++);
        r.session.user_id = "U";
        std::int64_t t = 1262563200 + static_cast<std::int64_t>(pick(86400));
        const std::size_t len = 1 + pick(30);
        for (std::size_t i = 0; i < len; ++i) {
            t += static_cast<std::int64_t>(pick(600));
            r.session.events.push_back(event("E" + std::to_string(i), from_epoch(t)));
        }
        r.session.start = r.session.events.front().timestamp;
        r.session.end = r.session.events.back().timestamp;
        r.actions = pick(60);
        return r;
    }

    std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

private:
    std::mt19937_64 rng_;
    std::size_t n_ = 0;
};

// Returns the first broken property, or an empty string.
inline std::string prism_properties(std::size_t sessions, std::uint64_t seed) {
    const PrismConfig cfg = PrismConfig::defaults();
    const IpReputation rep = office_reputation();
    SessionGen gen(seed);
    const double scales[] = {0.5, 2.0, 3.0, 10.0};
    std::ostringstream why;

    for (std::size_t n = 0; n < sessions; ++n) {
        auto r = gen.next();
        const auto base = score_session(r.session, r.user, cfg, rep, r.actions);

        if (base.normalized < 0.0 || base.normalized > 1.0 ||
            base.normalized != std::clamp(base.raw / cfg.r_max, 0.0, 1.0)) {
            why << "clamp: raw " << base.raw << " normalized " << base.normalized;
            return why.str();
        }
        const bool alert = base.normalized >= cfg.alert_threshold;
        if (alert != (base.band != RiskBand::Low)) {
            why << "band/threshold mismatch at " << base.normalized;
            return why.str();
        }

        // Breakdown against the event list and the linear form.
        const auto& b = base.breakdown;
        double per_event = 0.0;
        for (const auto& c : b.per_event) per_event += c.points;
        const auto& w = cfg.weights;
        const double linear = (w.activity * b.activity + w.context * b.context + w.ip * b.ip + w.hours * b.hours +
                               w.device * b.device + w.cumulative * b.cumulative) *
                              cfg.multiplier(r.user.privilege);
        if (std::abs(per_event - b.activity) > 1e-9 || std::abs(base.raw - recompute_raw(b, cfg)) > 1e-9 ||
            std::abs(base.raw - linear) > 1e-9) {
            why << "breakdown: raw " << base.raw << " linear " << linear;
            return why.str();
        }

        // Appending any activity never lowers the raw score.
        auto grown = r.session;
        grown.events.push_back(gen.event("X" + std::to_string(n), grown.end + Seconds{30}));
        grown.end = grown.events.back().timestamp;
        const auto more = score_session(grown, r.user, cfg, rep, r.actions + 1);
        if (more.raw < base.raw) {
            why << "monotonicity: " << base.raw << " -> " << more.raw;
            return why.str();
        }

        // Privilege ordering with everything else fixed.
        auto with = [&](Privilege p) {
            UserRecord u = r.user;
            u.privilege = p;
            return score_session(r.session, u, cfg, rep, r.actions).raw;
        };
        const double hi = with(Privilege::High), mod = with(Privilege::Moderate), lo = with(Privilege::Low),
                     guest = with(Privilege::Guest);
        if (!(lo >= mod && mod >= hi && guest == lo)) {
            why << "privilege ordering: " << lo << " " << mod << " " << hi;
            return why.str();
        }

        // Scaling weights and R_max together leaves the normalized score alone.
        const double k = scales[n % std::size(scales)];
        PrismConfig scaled = cfg;
        for (double* x : {&scaled.weights.privilege, &scaled.weights.activity, &scaled.weights.context,
                          &scaled.weights.ip, &scaled.weights.hours, &scaled.weights.device,
                          &scaled.weights.cumulative}) {
            *x *= k;
        }
        scaled.r_max *= k;
        const auto s2 = score_session(r.session, r.user, scaled, rep, r.actions);
        if (std::abs(s2.normalized - base.normalized) > 1e-12 || s2.band != base.band) {
            why << "scale " << k << ": " << base.normalized << " vs " << s2.normalized;
            return why.str();
        }
    }
    return {};
}

// Largest relative gap between analytic and central-difference gradients.
inline double ae_gradient_check(std::size_t models, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (std::size_t m = 0; m < models; ++m) {
        const std::size_t in = 2 + rng() % 4;
        std::vector<std::size_t> sizes{in};
        const std::size_t hidden = 1 + rng() % 3;
        for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(1 + rng() % 4);
        sizes.push_back(in);
        auto model = AutoencoderModel::initialise(sizes, rng());

        Calibration cal{0.01, 0.2, true};
        std::vector<TrainingSample> samples(2 + rng() % 5);
        for (auto& s : samples) {
            s.x.resize(in);
            for (auto& v : s.x) v = unit(rng);
            s.weight = 0.5 + 3.0 * unit(rng);
            if (rng() % 3 == 0) s.target_score = unit(rng);
        }

        Gradient g;
        loss_and_gradient(model, samples, cal, &g);
        const double h = 1e-5;
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = loss_and_gradient(model, samples, cal, nullptr);
            param = keep - h;
            const double down = loss_and_gradient(model, samples, cal, nullptr);
            param = keep;
            const double numeric = (up - down) / (2 * h);
            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            worst = std::max(worst, rel);
        };
        for (std::size_t li = 0; li < model.layers().size(); ++li) {
            auto& l = model.layers()[li];
            for (std::size_t k = 0; k < l.weights.size(); ++k) probe(l.weights[k], g.layers[li].weights[k]);
            for (std::size_t k = 0; k < l.bias.size(); ++k) probe(l.bias[k], g.layers[li].bias[k]);
        }
    }
    return worst;
}

// Max |forward - expected| over the published fixture model, or +inf when the
// assets are unreadable.
inline double ae_forward_gap() {
    auto model = AutoencoderModel::load(test::fixture("models/ae-4-3-2-3-4.json"));
    auto expected = nlohmann::json::parse(test::slurp(test::fixture("models/ae-4-3-2-3-4.expected.json")));
    double gap = 0.0;
    for (const auto& c : expected) {
        const auto x = c.at("input").get<std::vector<double>>();
        const auto want = c.at("output").get<std::vector<double>>();
        const auto got = model.forward(x);
        if (got.size() != want.size()) return INFINITY;
        for (std::size_t i = 0; i < got.size(); ++i) gap = std::max(gap, std::abs(got[i] - want[i]));
        gap = std::max(gap, std::abs(reconstruction_error(x, got) - c.at("mse").get<double>()));
    }
    return gap;
}

// Two seeded trainings on the same data produce identical weights.
inline bool ae_training_reproducible(std::uint64_t seed) {
    auto run = [&] {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 0.3);
        std::vector<TrainingSample> samples(64);
        for (auto& s : samples) {
            s.x.resize(kFeatureDim);
            for (auto& v : s.x) v = unit(rng);
        }
        auto m = AutoencoderModel::initialise(kDefaultLayerSizes, seed);
        train(m, samples, {}, TrainHyper{50, 0.05, 16, seed});
        return m;
    };
    const auto a = run();
    const auto b = run();
    return a == b && a.to_json_text() == b.to_json_text();
}

// Grid check of S_AI + alpha (S_user - S_AI), identities included.
inline std::string blend_grid() {
    const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::ostringstream why;
    for (double ai : grid) {
        for (double user : grid) {
            for (double a : grid) {
                const double got = blend_feedback(ai, user, a);
                const double want = (1.0 - a) * ai + a * user;
                if (got != want) {
                    why << "blend(" << ai << "," << user << "," << a << ") = " << got << " want " << want;
                    return why.str();
                }
                if (got < std::min(ai, user) || got > std::max(ai, user)) {
                    why << "not convex at " << ai << "," << user << "," << a;
                    return why.str();
                }
            }
            if (blend_feedback(ai, user, 0.0) != ai || blend_feedback(ai, user, 1.0) != user) {
                why << "identity fails at " << ai << "," << user;
                return why.str();
            }
        }
    }
    return {};
}

// Random per-user streams for the windowed policies.
inline std::vector<ActivityEvent> window_stream(std::mt19937_64& rng, std::size_t max_events) {
    static const Activity kActs[] = {Activity::LoginFailed, Activity::LoginFailed,      Activity::LoginFailed,
                                     Activity::FileDelete,  Activity::FileDelete,       Activity::FileShareExternal,
                                     Activity::AttachmentShare, Activity::FileShareInternal, Activity::Login};
    const std::size_t n = 1 + rng() % max_events;
    std::vector<ActivityEvent> out;
    std::int64_t t = 1262600000;
    for (std::size_t i = 0; i < n; ++i) {
        // Bursts with ties, then quiet stretches.
        const auto r = rng() % 10;
        t += r < 2 ? 0 : r < 8 ? static_cast<std::int64_t>(rng() % 90) : static_cast<std::int64_t>(rng() % 2400);
        auto e = test::make_event("E" + std::to_string(i), from_epoch(t), "U" + std::to_string(rng() % 3),
                                  kActs[rng() % std::size(kActs)], "PC-" + std::to_string(rng() % 5));
        out.push_back(e);
    }
    return out;
}

struct Firing {
    std::size_t index = 0;
    std::string policy;
    std::vector<std::string> ids;
    double observed = 0.0;
    bool operator==(const Firing&) const = default;
};

// Brute-force replay of one count policy: at each matching event rescan the
// whole history for events in [t - w, t].
inline std::vector<Firing> scan_oracle(const Policy& p, std::span<const ActivityEvent> stream) {
    const auto& prm = p.trigger.params;
    auto matches = [&](const ActivityEvent& e) {
        if (p.trigger.kind == TriggerKind::MassDeletion) return e.activity == Activity::FileDelete;
        return std::find(prm.activities.begin(), prm.activities.end(), e.activity) != prm.activities.end();
    };
    std::vector<Firing> out;
    std::map<std::string, Timestamp> last_fired;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& e = stream[i];
        if (!matches(e)) continue;
        const Timestamp lo = e.timestamp - prm.window;
        std::vector<std::string> ids;
        std::set<std::string> devices;
        for (std::size_t j = 0; j <= i; ++j) {
            const auto& o = stream[j];
            if (o.user_id != e.user_id || !matches(o) || o.timestamp < lo) continue;
            ids.push_back(o.event_id);
            devices.insert(o.device_id);
        }
        const double measure = prm.distinct_devices ? static_cast<double>(devices.size()) : static_cast<double>(ids.size());
        if (measure < static_cast<double>(prm.threshold)) continue;
        auto it = last_fired.find(e.user_id);
        if (it != last_fired.end() && it->second >= lo) continue;
        last_fired[e.user_id] = e.timestamp;
        out.push_back({i, p.policy_id, ids, measure});
    }
    return out;
}

inline std::vector<Policy> window_policies() {
    std::vector<Policy> out;
    for (const auto& p : default_policies()) {
        if (p.policy_id == "P-UR-01" || p.policy_id == "P-AR-01" || p.policy_id == "P-DC-03" ||
            p.policy_id == "P-DR-02") {
            out.push_back(p);
        }
    }
    return out;
}

// Engine vs scan oracle on `streams` random streams. Returns the first
// disagreement, or an empty string.
inline std::string window_equivalence(std::size_t streams, std::size_t max_events, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto policies = window_policies();
    for (std::size_t s = 0; s < streams; ++s) {
        const auto stream = window_stream(rng, max_events);
        PolicyEngine engine(policies, PolicyAux{});
        std::vector<Firing> got;
        for (std::size_t i = 0; i < stream.size(); ++i) {
            UserRecord u;
            u.user_id = stream[i].user_id;
            for (auto& v : engine.evaluate(stream[i], u, {})) {
                // Window soundness: evidence spans at most the window.
                const auto* p = engine.find(v.policy_id);
                if (stream[i].timestamp - v.first_event_at > p->trigger.params.window) {
                    return "violation " + v.violation_id + " spans more than its window";
                }
                got.push_back({i, v.policy_id, v.triggering_event_ids, v.observed});
            }
        }
        std::vector<Firing> want;
        for (const auto& p : policies) {
            auto f = scan_oracle(p, stream);
            want.insert(want.end(), f.begin(), f.end());
        }
        auto order = [](const Firing& a, const Firing& b) {
            return std::tie(a.index, a.policy) < std::tie(b.index, b.policy);
        };
        std::sort(got.begin(), got.end(), order);
        std::sort(want.begin(), want.end(), order);
        if (got != want) {
            std::ostringstream why;
            why << "stream " << s << " (" << stream.size() << " events): engine fired " << got.size()
                << " times, oracle " << want.size();
            return why.str();
        }
    }
    return {};
}

// A mixed stream that touches most trigger kinds.
inline std::vector<std::pair<ActivityEvent, LabelSet>> mixed_stream(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    SensitivityClassifier cls;
    static const char* kContent[] = {"lunch", "SSN: 123-45-6789", "patient MRN:00123456", "card number 4111 1111 1111 1111"};
    static const char* kRecipients[] = {"", "a@example.com", "b@rival.org", "c@partner.example.net"};
    static const char* kRegions[] = {"US", "GB", "RU", "SG"};
    std::vector<std::pair<ActivityEvent, LabelSet>> out;
    SessionGen gen(seed + 1);
    std::int64_t t = 1262600000;
    for (std::size_t i = 0; i < n; ++i) {
        t += static_cast<std::int64_t>(rng() % 300);
        auto e = gen.event("M" + std::to_string(i), from_epoch(t));
        e.user_id = "U" + std::to_string(rng() % 4);
        e.device_id = "PC-" + std::to_string(rng() % 6);
        e.source = source_of(e.activity);
        LabelSet labels;
        if (e.source == EventSource::File) {
            e.raw_extra[extra_key::kFilename] = "/shares/" + std::to_string(rng() % 3) + "/doc.txt";
            e.raw_extra[extra_key::kRecipient] = kRecipients[rng() % 4];
            if (rng() % 4 == 0) e.raw_extra[extra_key::kEncrypted] = "false";
            if (rng() % 5 == 0) e.raw_extra[extra_key::kSyncTarget] = rng() % 2 ? "Dropbox" : "OneDrive";
            labels = cls.classify_text(kContent[rng() % 4]);
        } else if (e.activity == Activity::Login) {
            e.geo_region = kRegions[rng() % 4];
            if (rng() % 10 == 0) e.raw_extra[extra_key::kPrivilegeGrant] = "admin";
        }
        out.emplace_back(std::move(e), std::move(labels));
    }
    return out;
}

inline std::vector<std::string> replay(const std::vector<Policy>& policies, const PolicyAux& aux,
                                       const std::vector<std::pair<ActivityEvent, LabelSet>>& stream) {
    PolicyEngine engine(policies, aux);
    std::vector<std::string> out;
    for (const auto& [e, labels] : stream) {
        UserRecord u;
        u.user_id = e.user_id;
        u.privilege = e.user_id == "U0" ? Privilege::High : Privilege::Low;
        for (const auto& v : engine.evaluate(e, u, labels)) {
            std::ostringstream row;
            row << v.policy_id << '|' << v.subject << '|' << to_epoch(v.first_event_at) << '|' << to_epoch(v.fired_at)
                << '|' << v.observed << '|' << v.threshold << '|';
            for (const auto& id : v.triggering_event_ids) row << id << ',';
            if (v.action_taken) row << '|' << to_string(v.action_taken->action);
            out.push_back(row.str());
        }
    }
    return out;
}

}  // namespace irm::oracle
