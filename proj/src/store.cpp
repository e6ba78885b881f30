#include "irm/store.hpp"

#include "irm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

namespace irm {

namespace {

constexpr std::array<std::string_view, 3> kOriginNames{"PolicyViolation", "ScoreThreshold", "CumulativeRisk"};
constexpr std::array<std::string_view, 4> kStatusNames{"Open", "Acknowledged", "Resolved", "Rejected"};
constexpr std::uint8_t kCodecVersion = 1;
constexpr std::size_t kHeader = 8;

std::uint32_t crc_of(std::string_view bytes) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& out, std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_str(std::string& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

struct Reader {
    std::string_view in;
    std::size_t pos = 0;

    void need(std::size_t n) {
        if (pos + n > in.size()) throw Error(ErrorCode::CorruptSegment, "truncated event record");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        auto v = get_u32(in.data() + pos);
        pos += 4;
        return v;
    }
    std::int64_t i64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
        pos += 8;
        return static_cast<std::int64_t>(v);
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(in.substr(pos, n));
        pos += n;
        return s;
    }
};

std::string day_name(Timestamp ts) {
    const auto days = std::chrono::floor<std::chrono::days>(ts);
    const std::chrono::year_month_day ymd{days};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

std::int64_t steady_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void write_all(int fd, const std::string& data) {
    std::size_t done = 0;
    while (done < data.size()) {
        const auto n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ENOSPC || errno == EDQUOT) throw Error(ErrorCode::StorageFull, "no space left for segment");
            throw Error(ErrorCode::IoError, std::string("segment write failed: ") + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

struct ScanResult {
    std::uint64_t good_bytes = 0;
    bool torn = false;
};

// Walks the records of one segment. A bad record at the very end is a torn
// tail; anywhere else it is corruption.
template <typename OnRecord>
ScanResult scan_segment(const std::string& name, const std::string& data, OnRecord&& on_record) {
    ScanResult r;
    std::size_t pos = 0;
    while (pos < data.size()) {
        if (data.size() - pos < kHeader) {
            r.torn = true;
            break;
        }
        const auto len = get_u32(data.data() + pos);
        const auto crc = get_u32(data.data() + pos + 4);
        if (data.size() - pos - kHeader < len) {
            r.torn = true;
            break;
        }
        const std::string_view payload(data.data() + pos + kHeader, len);
        if (crc_of(payload) != crc) {
            if (pos + kHeader + len == data.size()) {
                r.torn = true;
                break;
            }
            throw Error(ErrorCode::CorruptSegment,
                        "checksum mismatch in segment " + name + " at offset " + std::to_string(pos));
        }
        on_record(payload, pos, len);
        pos += kHeader + len;
        r.good_bytes = pos;
    }
    return r;
}

Severity severity_or(const nlohmann::json& j, const char* key) {
    return parse_severity(j.value(key, std::string{"Medium"})).value_or(Severity::Medium);
}

}  // namespace

std::string_view to_string(AlertOrigin o) { return kOriginNames[static_cast<std::size_t>(o)]; }
std::string_view to_string(AlertStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

std::optional<AlertOrigin> parse_alert_origin(std::string_view s) {
    for (std::size_t i = 0; i < kOriginNames.size(); ++i) {
        if (kOriginNames[i] == s) return static_cast<AlertOrigin>(i);
    }
    return std::nullopt;
}

std::optional<AlertStatus> parse_alert_status(std::string_view s) {
    for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == s) return static_cast<AlertStatus>(i);
    }
    return std::nullopt;
}

bool legal_transition(AlertStatus from, AlertStatus to) {
    switch (from) {
        case AlertStatus::Open:
            return to == AlertStatus::Acknowledged || to == AlertStatus::Resolved || to == AlertStatus::Rejected;
        case AlertStatus::Acknowledged: return to == AlertStatus::Resolved || to == AlertStatus::Rejected;
        default: return false;
    }
}

std::string encode_event(const ActivityEvent& e) {
    std::string out;
    out.reserve(96 + e.event_id.size() + e.user_id.size());
    out.push_back(static_cast<char>(kCodecVersion));
    put_str(out, e.event_id);
    put_i64(out, to_epoch(e.timestamp));
    put_str(out, e.user_id);
    put_str(out, e.device_id);
    out.push_back(static_cast<char>(e.source));
    out.push_back(static_cast<char>(e.activity));
    out.push_back(static_cast<char>(e.app_context));
    out.push_back(static_cast<char>(e.device_trust));
    const std::uint8_t flags = (e.ip_address ? 1 : 0) | (e.geo_region ? 2 : 0) | (e.file_id ? 4 : 0);
    out.push_back(static_cast<char>(flags));
    if (e.ip_address) put_str(out, *e.ip_address);
    if (e.geo_region) put_str(out, *e.geo_region);
    if (e.file_id) put_str(out, *e.file_id);
    put_u32(out, static_cast<std::uint32_t>(e.raw_extra.size()));
    for (const auto& [k, v] : e.raw_extra) {
        put_str(out, k);
        put_str(out, v);
    }
    return out;
}

ActivityEvent decode_event(std::string_view payload) {
    Reader r{payload};
    if (r.u8() != kCodecVersion) throw Error(ErrorCode::CorruptSegment, "unknown event codec version");
    ActivityEvent e;
    e.event_id = r.str();
    e.timestamp = from_epoch(r.i64());
    e.user_id = r.str();
    e.device_id = r.str();
    const auto source = r.u8();
    const auto activity = r.u8();
    const auto app = r.u8();
    const auto trust = r.u8();
    if (source > 2 || activity >= kActivityCount || app >= kAppContextCount || trust > 3) {
        throw Error(ErrorCode::CorruptSegment, "event enum out of range");
    }
    e.source = static_cast<EventSource>(source);
    e.activity = static_cast<Activity>(activity);
    e.app_context = static_cast<AppContext>(app);
    e.device_trust = static_cast<DeviceTrust>(trust);
    const auto flags = r.u8();
    if (flags & 1) e.ip_address = r.str();
    if (flags & 2) e.geo_region = r.str();
    if (flags & 4) e.file_id = r.str();
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.str();
        e.raw_extra.emplace(std::move(k), r.str());
    }
    return e;
}

void LatencyHistogram::record(double ms) {
    std::lock_guard lock(mu_);
    if (ring_.size() < kRing) {
        ring_.push_back(ms);
    } else {
        ring_[next_] = ms;
    }
    next_ = (next_ + 1) % kRing;
    ++total_;
}

double LatencyHistogram::percentile(double q) const {
    std::vector<double> copy;
    {
        std::lock_guard lock(mu_);
        copy = ring_;
    }
    if (copy.empty()) return 0.0;
    return irm::percentile(std::move(copy), q);
}

std::uint64_t LatencyHistogram::count() const {
    std::lock_guard lock(mu_);
    return total_;
}

Json to_json(const Alert& a) {
    Json j;
    j["alert_id"] = a.alert_id;
    j["created_at"] = format_iso(a.created_at);
    j["subject"] = a.subject;
    j["origin"] = to_string(a.origin);
    j["origin_ref"] = a.origin_ref;
    j["severity"] = to_string(a.severity);
    j["score"] = a.score;
    j["status"] = to_string(a.status);
    if (a.risk_score) j["risk_score"] = to_json(*a.risk_score);
    if (a.s_ai) j["S_AI"] = *a.s_ai;
    if (a.features) j["features"] = to_json(*a.features);
    if (a.recommendation) j["recommendation"] = *a.recommendation;
    if (a.feedback_ref) j["feedback_ref"] = *a.feedback_ref;
    if (!a.tag.empty()) j["tag"] = a.tag;
    return j;
}

Alert alert_from_json(const nlohmann::json& j) {
    Alert a;
    a.alert_id = j.at("alert_id").get<std::string>();
    a.created_at = parse_iso(j.at("created_at").get<std::string>()).value_or(Timestamp{});
    a.subject = j.at("subject").get<std::string>();
    a.origin = parse_alert_origin(j.at("origin").get<std::string>()).value_or(AlertOrigin::ScoreThreshold);
    a.origin_ref = j.value("origin_ref", std::string{});
    a.severity = severity_or(j, "severity");
    a.score = j.value("score", 0.0);
    a.status = parse_alert_status(j.at("status").get<std::string>()).value_or(AlertStatus::Open);
    if (j.contains("risk_score")) a.risk_score = risk_score_from_json(j.at("risk_score"));
    if (j.contains("S_AI")) a.s_ai = j.at("S_AI").get<double>();
    if (j.contains("features")) a.features = feature_vector_from_json(j.at("features"));
    if (j.contains("recommendation")) a.recommendation = j.at("recommendation").get<std::string>();
    if (j.contains("feedback_ref")) a.feedback_ref = j.at("feedback_ref").get<std::string>();
    a.tag = j.value("tag", std::string{});
    return a;
}

Json to_json(const AuditRow& r) {
    Json j;
    j["seq"] = r.seq;
    j["alert_id"] = r.alert_id;
    j["from"] = to_string(r.from);
    j["to"] = to_string(r.to);
    j["note"] = r.note;
    j["at"] = format_iso(r.at);
    return j;
}

Json to_json(const SessionScoreRow& r) {
    Json j;
    j["session_id"] = r.session_id;
    j["user_id"] = r.user_id;
    j["start"] = format_iso(r.start);
    j["end"] = format_iso(r.end);
    j["event_count"] = r.event_count;
    j["prism"] = to_json(r.prism);
    if (r.s_ai) j["S_AI"] = *r.s_ai;
    j["features"] = to_json(r.features);
    return j;
}

SessionScoreRow session_score_from_json(const nlohmann::json& j) {
    SessionScoreRow r;
    r.session_id = j.at("session_id").get<std::string>();
    r.user_id = j.at("user_id").get<std::string>();
    r.start = parse_iso(j.at("start").get<std::string>()).value_or(Timestamp{});
    r.end = parse_iso(j.at("end").get<std::string>()).value_or(Timestamp{});
    r.event_count = j.at("event_count").get<std::size_t>();
    r.prism = risk_score_from_json(j.at("prism"));
    if (j.contains("S_AI")) r.s_ai = j.at("S_AI").get<double>();
    r.features = feature_vector_from_json(j.at("features"));
    return r;
}

Json to_json(const StoreStats& s) {
    Json j;
    j["events"] = s.events;
    j["sessions"] = s.sessions;
    j["violations"] = s.violations;
    j["feedback"] = s.feedback;
    j["alerts_by_status"] = s.alerts_by_status;
    j["alerts_by_severity"] = s.alerts_by_severity;
    j["ingest_rate_eps"] = s.ingest_rate_eps;
    j["query_latency_ms"] = {{"count", s.queries}, {"p50", s.p50_ms}, {"p95", s.p95_ms}, {"p99", s.p99_ms}};
    return j;
}

RiskStore::RiskStore(std::filesystem::path dir, StoreOptions opts) : dir_(std::move(dir)), opts_(std::move(opts)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_ / "segments", ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create data dir " + dir_.string() + ": " + ec.message());
    load_segments();
    load_tables();
}

RiskStore::~RiskStore() {
    for (auto& s : segments_) {
        if (s.fd >= 0) ::close(s.fd);
    }
    for (auto& [name, f] : files_) std::fclose(f);
}

void RiskStore::load_segments() {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir_ / "segments")) {
        if (entry.path().extension() == ".seg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        const auto name = path.stem().string();
        const auto data = read_file(path);
        const auto seg = static_cast<std::uint32_t>(segments_.size());
        segments_.push_back({name, -1, 0});
        segment_by_day_[name] = seg;
        const auto result = scan_segment(name, data, [&](std::string_view payload, std::size_t pos, std::uint32_t len) {
            index_event(decode_event(opts_.codec.decode(std::string(payload))), seg, pos, len);
        });
        if (result.torn) std::filesystem::resize_file(path, result.good_bytes);
        const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
        if (fd < 0) throw Error(ErrorCode::IoError, "cannot open segment " + path.string());
        segments_[seg].fd = fd;
        segments_[seg].size = result.good_bytes;
    }
}

void RiskStore::load_tables() {
    auto each_line = [&](const char* file, auto&& fn) {
        std::ifstream in(dir_ / file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                continue;  // torn final line from a crash
            }
            fn(j);
        }
    };
    each_line("alerts.jsonl", [&](const nlohmann::json& j) {
        auto a = alert_from_json(j);
        alerts_by_user_[a.subject].insert(a.alert_id);
        alerts_[a.alert_id] = a;
    });
    for (const auto& [id, a] : alerts_) {
        std::uint64_t n = 0;
        if (id.size() > 2 && std::from_chars(id.data() + 2, id.data() + id.size(), n).ptr == id.data() + id.size()) {
            next_alert_ = std::max(next_alert_, n + 1);
        }
    }
    each_line("audit.jsonl", [&](const nlohmann::json& j) {
        AuditRow r;
        r.seq = j.at("seq").get<std::uint64_t>();
        r.alert_id = j.at("alert_id").get<std::string>();
        r.from = parse_alert_status(j.at("from").get<std::string>()).value_or(AlertStatus::Open);
        r.to = parse_alert_status(j.at("to").get<std::string>()).value_or(AlertStatus::Open);
        r.note = j.value("note", std::string{});
        r.at = parse_iso(j.at("at").get<std::string>()).value_or(Timestamp{});
        audit_.push_back(r);
    });
    each_line("feedback.jsonl", [&](const nlohmann::json& j) {
        if (j.contains("consumed")) {
            auto n = j.at("consumed").get<std::size_t>();
            for (auto& f : feedback_) {
                if (n == 0) break;
                if (!f.consumed_in_retrain) {
                    f.consumed_in_retrain = true;
                    --n;
                }
            }
            return;
        }
        feedback_.push_back(feedback_from_json(j));
    });
    each_line("violations.jsonl", [&](const nlohmann::json& j) {
        violations_.push_back(violation_from_json(j));
        violation_index_[violations_.back().violation_id] = violations_.size() - 1;
    });
    each_line("sessions.jsonl", [&](const nlohmann::json& j) {
        auto s = session_score_from_json(j);
        session_index_[s.session_id] = sessions_.size();
        sessions_.push_back(std::move(s));
    });
    each_line("profiles.jsonl", [&](const nlohmann::json& j) {
        auto p = profile_from_json(j);
        profiles_[p.user_id] = std::move(p);
    });
}

std::uint32_t RiskStore::segment_for(Timestamp ts) {
    const auto name = day_name(ts);
    if (auto it = segment_by_day_.find(name); it != segment_by_day_.end()) return it->second;
    const auto path = dir_ / "segments" / (name + ".seg");
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) {
        if (errno == ENOSPC) throw Error(ErrorCode::StorageFull, "no space for new segment");
        throw Error(ErrorCode::IoError, "cannot create segment " + path.string());
    }
    std::unique_lock lock(index_mu_);
    const auto seg = static_cast<std::uint32_t>(segments_.size());
    segments_.push_back({name, fd, 0});
    segment_by_day_[name] = seg;
    return seg;
}

void RiskStore::index_event(const ActivityEvent& e, std::uint32_t seg, std::uint64_t offset, std::uint32_t length) {
    IndexEntry entry{to_epoch(e.timestamp), seg, static_cast<std::uint8_t>(e.activity), offset, length};
    auto& list = by_user_[e.user_id];
    if (list.empty() || list.back().ts <= entry.ts) {
        list.push_back(entry);
    } else {
        auto pos = std::upper_bound(list.begin(), list.end(), entry.ts,
                                    [](std::int64_t ts, const IndexEntry& x) { return ts < x.ts; });
        list.insert(pos, entry);
    }
    ids_.emplace(std::hash<std::string>{}(e.event_id), std::make_pair(seg, offset));
    ++event_count_;
}

ActivityEvent RiskStore::read_event(const IndexEntry& entry) const {
    const auto path = dir_ / "segments" / (segments_[entry.segment].name + ".seg");
    std::string buf(entry.length, '\0');
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw Error(ErrorCode::IoError, "cannot open segment " + path.string());
    const auto n = ::pread(fd, buf.data(), entry.length, static_cast<off_t>(entry.offset + kHeader));
    ::close(fd);
    if (n != static_cast<ssize_t>(entry.length)) throw Error(ErrorCode::CorruptSegment, "short read");
    return decode_event(opts_.codec.decode(std::move(buf)));
}

bool RiskStore::has_event(const std::string& event_id) const {
    std::shared_lock lock(index_mu_);
    auto [lo, hi] = ids_.equal_range(std::hash<std::string>{}(event_id));
    for (auto it = lo; it != hi; ++it) {
        // Hash hit: confirm against the stored record.
        const auto [seg, offset] = it->second;
        const auto path = dir_ / "segments" / (segments_[seg].name + ".seg");
        const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd < 0) continue;
        char header[kHeader];
        std::string payload;
        if (::pread(fd, header, kHeader, static_cast<off_t>(offset)) == static_cast<ssize_t>(kHeader)) {
            payload.resize(get_u32(header));
            if (::pread(fd, payload.data(), payload.size(), static_cast<off_t>(offset + kHeader)) !=
                static_cast<ssize_t>(payload.size())) {
                payload.clear();
            }
        }
        ::close(fd);
        if (!payload.empty() && decode_event(opts_.codec.decode(std::move(payload))).event_id == event_id) {
            return true;
        }
    }
    return false;
}

AppendResult RiskStore::append_events(std::span<const ActivityEvent> batch, std::vector<bool>* accepted) {
    AppendResult result;
    if (accepted) accepted->assign(batch.size(), false);
    if (batch.empty()) return result;
    std::lock_guard wlock(write_mu_);

    struct Pending {
        const ActivityEvent* event;
        std::uint32_t seg;
        std::uint64_t offset;
        std::uint32_t length;
    };
    std::vector<Pending> pending;
    std::map<std::uint32_t, std::string> buffers;
    std::map<std::uint32_t, std::uint64_t> sizes;
    std::unordered_set<std::string_view> in_batch;

    for (const auto& e : batch) {
        if (!in_batch.insert(e.event_id).second || has_event(e.event_id)) {
            ++result.duplicates;
            continue;
        }
        const auto seg = segment_for(e.timestamp);
        auto [it, fresh] = sizes.try_emplace(seg, segments_[seg].size);
        const auto payload = opts_.codec.encode(encode_event(e));
        auto& buf = buffers[seg];
        const std::uint64_t offset = it->second + buf.size();
        put_u32(buf, static_cast<std::uint32_t>(payload.size()));
        put_u32(buf, crc_of(payload));
        buf.append(payload);
        pending.push_back({&e, seg, offset, static_cast<std::uint32_t>(payload.size())});
        if (accepted) (*accepted)[static_cast<std::size_t>(&e - batch.data())] = true;
    }

    for (auto& [seg, buf] : buffers) {
        const int fd = segments_[seg].fd;
        try {
            write_all(fd, buf);
        } catch (...) {
            // Drop any partial record so the segment stays well-formed.
            if (::ftruncate(fd, static_cast<off_t>(segments_[seg].size)) != 0) {
                // Leave it; the torn tail is repaired on next open.
            }
            throw;
        }
        sync_fd(fd);
    }

    {
        std::unique_lock lock(index_mu_);
        for (auto& [seg, buf] : buffers) segments_[seg].size += buf.size();
        for (const auto& p : pending) index_event(*p.event, p.seg, p.offset, p.length);
    }
    result.accepted = pending.size();

    std::lock_guard rlock(rate_mu_);
    const auto now = steady_ms();
    ingest_marks_.emplace_back(now, result.accepted);
    while (!ingest_marks_.empty() && ingest_marks_.front().first < now - 10'000) ingest_marks_.pop_front();
    return result;
}

std::vector<ActivityEvent> RiskStore::query_events(const EventQuery& q) const {
    if (q.to < q.from) throw Error(ErrorCode::InvalidRange, "range end precedes start");
    const auto started = std::chrono::steady_clock::now();
    std::vector<IndexEntry> hits;
    std::vector<std::string> names;
    {
        std::shared_lock lock(index_mu_);
        auto it = by_user_.find(q.user_id);
        if (it != by_user_.end()) {
            const auto& list = it->second;
            const auto from = to_epoch(q.from);
            const auto to = to_epoch(q.to);
            auto pos = std::lower_bound(list.begin(), list.end(), from,
                                        [](const IndexEntry& x, std::int64_t ts) { return x.ts < ts; });
            for (; pos != list.end() && pos->ts <= to && hits.size() < q.limit; ++pos) {
                if (!q.activities.empty() &&
                    std::find(q.activities.begin(), q.activities.end(), static_cast<Activity>(pos->activity)) ==
                        q.activities.end()) {
                    continue;
                }
                hits.push_back(*pos);
            }
        }
        for (const auto& s : segments_) names.push_back(s.name);
    }

    std::vector<ActivityEvent> out;
    out.reserve(hits.size());
    std::map<std::uint32_t, int> fds;
    for (const auto& h : hits) {
        auto [fit, fresh] = fds.try_emplace(h.segment, -1);
        if (fresh) {
            const auto path = dir_ / "segments" / (names[h.segment] + ".seg");
            fit->second = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
        }
        std::string buf(h.length, '\0');
        if (fit->second < 0 || ::pread(fit->second, buf.data(), h.length, static_cast<off_t>(h.offset + kHeader)) !=
                                   static_cast<ssize_t>(h.length)) {
            for (auto& [s, fd] : fds) {
                if (fd >= 0) ::close(fd);
            }
            throw Error(ErrorCode::CorruptSegment, "short read from segment " + names[h.segment]);
        }
        out.push_back(decode_event(opts_.codec.decode(std::move(buf))));
    }
    for (auto& [s, fd] : fds) {
        if (fd >= 0) ::close(fd);
    }

    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started);
    latency_.record(elapsed.count());
    ++queries_;
    return out;
}

std::array<std::uint64_t, kActivityCount> RiskStore::activity_counts(const std::string& user, Timestamp from,
                                                                     Timestamp to) const {
    std::array<std::uint64_t, kActivityCount> counts{};
    std::shared_lock lock(index_mu_);
    auto it = by_user_.find(user);
    if (it == by_user_.end()) return counts;
    const auto lo = to_epoch(from);
    const auto hi = to_epoch(to);
    auto pos = std::lower_bound(it->second.begin(), it->second.end(), lo,
                                [](const IndexEntry& x, std::int64_t ts) { return x.ts < ts; });
    for (; pos != it->second.end() && pos->ts <= hi; ++pos) ++counts[pos->activity];
    return counts;
}

std::uint64_t RiskStore::event_count() const {
    std::shared_lock lock(index_mu_);
    return event_count_;
}

std::vector<std::string> RiskStore::users() const {
    std::shared_lock lock(index_mu_);
    std::vector<std::string> out;
    out.reserve(by_user_.size());
    for (const auto& [u, list] : by_user_) out.push_back(u);
    std::sort(out.begin(), out.end());
    return out;
}

void RiskStore::append_line(const std::string& file, const std::string& line) {
    auto it = files_.find(file);
    if (it == files_.end()) {
        std::FILE* f = std::fopen((dir_ / file).c_str(), "ab");
        if (!f) throw Error(ErrorCode::IoError, "cannot open " + (dir_ / file).string());
        it = files_.emplace(file, f).first;
    }
    if (std::fputs(line.c_str(), it->second) < 0 || std::fputc('\n', it->second) == EOF ||
        std::fflush(it->second) != 0) {
        if (errno == ENOSPC) throw Error(ErrorCode::StorageFull, "no space left for " + file);
        throw Error(ErrorCode::IoError, "write failed for " + file);
    }
    // Analyst-facing tables are synced; bulk score rows only flushed.
    if (file != "sessions.jsonl" && file != "profiles.jsonl") sync_fd(fileno(it->second));
}

void RiskStore::sync_fd(int fd) {
    if (!opts_.sync) return;
    {
        std::lock_guard lock(sync_mu_);
        if (group_depth_ > 0) {
            dirty_fds_.insert(fd);
            return;
        }
    }
    if (::fdatasync(fd) != 0) {
        throw Error(ErrorCode::IoError, std::string("fdatasync failed: ") + std::strerror(errno));
    }
}

void RiskStore::begin_group() {
    std::lock_guard lock(sync_mu_);
    ++group_depth_;
}

void RiskStore::end_group() {
    std::set<int> fds;
    {
        std::lock_guard lock(sync_mu_);
        if (group_depth_ == 0 || --group_depth_ > 0) return;
        fds.swap(dirty_fds_);
    }
    for (int fd : fds) {
        if (::fdatasync(fd) != 0) {
            throw Error(ErrorCode::IoError, std::string("fdatasync failed: ") + std::strerror(errno));
        }
    }
}

std::string RiskStore::next_alert_id() {
    std::lock_guard lock(table_mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "A-%08llu", static_cast<unsigned long long>(next_alert_++));
    return buf;
}

Alert RiskStore::upsert_alert(Alert alert) {
    if (alert.alert_id.empty()) alert.alert_id = next_alert_id();
    std::lock_guard lock(table_mu_);
    if (auto it = alerts_.find(alert.alert_id); it != alerts_.end() && it->second.status != alert.status) {
        throw Error(ErrorCode::IllegalTransition, "status changes go through transition_alert");
    }
    append_line("alerts.jsonl", to_json(alert).dump());
    alerts_by_user_[alert.subject].insert(alert.alert_id);
    alerts_[alert.alert_id] = alert;
    return alert;
}

Alert RiskStore::transition_alert(const std::string& alert_id, AlertStatus to, const std::string& note, Timestamp at,
                                  std::optional<std::string> feedback_ref) {
    std::lock_guard lock(table_mu_);
    auto it = alerts_.find(alert_id);
    if (it == alerts_.end()) throw Error(ErrorCode::AlertNotFound, "no alert " + alert_id);
    Alert next = it->second;
    if (!legal_transition(next.status, to)) {
        throw Error(ErrorCode::IllegalTransition,
                    std::string(to_string(next.status)) + " -> " + std::string(to_string(to)) + " is not allowed");
    }
    if (feedback_ref) next.feedback_ref = feedback_ref;
    if (to == AlertStatus::Rejected && !next.feedback_ref) {
        throw Error(ErrorCode::MissingFeedback, "rejecting " + alert_id + " requires analyst feedback");
    }
    AuditRow row{audit_.size() + 1, alert_id, next.status, to, note, at};
    next.status = to;
    append_line("audit.jsonl", to_json(row).dump());
    append_line("alerts.jsonl", to_json(next).dump());
    audit_.push_back(row);
    it->second = next;
    return next;
}

Alert RiskStore::attach_recommendation(const std::string& alert_id, const std::string& recommendation) {
    std::lock_guard lock(table_mu_);
    auto it = alerts_.find(alert_id);
    if (it == alerts_.end()) throw Error(ErrorCode::AlertNotFound, "no alert " + alert_id);
    it->second.recommendation = recommendation;
    append_line("alerts.jsonl", to_json(it->second).dump());
    return it->second;
}

Alert RiskStore::attach_feedback(const std::string& alert_id, const std::string& feedback_ref) {
    std::lock_guard lock(table_mu_);
    auto it = alerts_.find(alert_id);
    if (it == alerts_.end()) throw Error(ErrorCode::AlertNotFound, "no alert " + alert_id);
    it->second.feedback_ref = feedback_ref;
    append_line("alerts.jsonl", to_json(it->second).dump());
    return it->second;
}

std::optional<Alert> RiskStore::get_alert(const std::string& alert_id) const {
    std::lock_guard lock(table_mu_);
    auto it = alerts_.find(alert_id);
    if (it == alerts_.end()) return std::nullopt;
    return it->second;
}

std::vector<Alert> RiskStore::alerts() const {
    std::lock_guard lock(table_mu_);
    std::vector<Alert> out;
    out.reserve(alerts_.size());
    for (const auto& [id, a] : alerts_) out.push_back(a);
    return out;
}

std::vector<AuditRow> RiskStore::audit(const std::string& alert_id) const {
    std::lock_guard lock(table_mu_);
    if (alert_id.empty()) return audit_;
    std::vector<AuditRow> out;
    for (const auto& r : audit_) {
        if (r.alert_id == alert_id) out.push_back(r);
    }
    return out;
}

void RiskStore::append_feedback(const FeedbackRecord& r) {
    std::lock_guard lock(table_mu_);
    append_line("feedback.jsonl", to_json(r).dump());
    feedback_.push_back(r);
}

void RiskStore::mark_feedback_consumed(std::size_t count) {
    std::lock_guard lock(table_mu_);
    append_line("feedback.jsonl", Json{{"consumed", count}}.dump());
    for (auto& f : feedback_) {
        if (count == 0) break;
        if (!f.consumed_in_retrain) {
            f.consumed_in_retrain = true;
            --count;
        }
    }
}

std::vector<FeedbackRecord> RiskStore::feedback() const {
    std::lock_guard lock(table_mu_);
    return feedback_;
}

void RiskStore::append_violation(const PolicyViolation& v) {
    std::lock_guard lock(table_mu_);
    append_line("violations.jsonl", to_json(v).dump());
    violations_.push_back(v);
    violation_index_[v.violation_id] = violations_.size() - 1;
}

std::vector<PolicyViolation> RiskStore::violations() const {
    std::lock_guard lock(table_mu_);
    return violations_;
}

std::optional<PolicyViolation> RiskStore::violation(const std::string& violation_id) const {
    std::lock_guard lock(table_mu_);
    auto it = violation_index_.find(violation_id);
    if (it == violation_index_.end()) return std::nullopt;
    return violations_[it->second];
}

std::size_t RiskStore::prior_alert_count(const std::string& user, const std::string& before_id) const {
    std::lock_guard lock(table_mu_);
    auto it = alerts_by_user_.find(user);
    if (it == alerts_by_user_.end()) return 0;
    return static_cast<std::size_t>(std::distance(it->second.begin(), it->second.lower_bound(before_id)));
}

void RiskStore::append_session(const SessionScoreRow& s) {
    std::lock_guard lock(table_mu_);
    append_line("sessions.jsonl", to_json(s).dump());
    session_index_[s.session_id] = sessions_.size();
    sessions_.push_back(s);
}

std::vector<SessionScoreRow> RiskStore::sessions(const std::string& user) const {
    std::lock_guard lock(table_mu_);
    if (user.empty()) return sessions_;
    std::vector<SessionScoreRow> out;
    for (const auto& s : sessions_) {
        if (s.user_id == user) out.push_back(s);
    }
    return out;
}

std::optional<SessionScoreRow> RiskStore::session(const std::string& session_id) const {
    std::lock_guard lock(table_mu_);
    auto it = session_index_.find(session_id);
    if (it == session_index_.end()) return std::nullopt;
    return sessions_[it->second];
}

void RiskStore::put_profile(const RiskProfile& p) {
    std::lock_guard lock(table_mu_);
    append_line("profiles.jsonl", to_json(p).dump());
    profiles_[p.user_id] = p;
}

std::optional<RiskProfile> RiskStore::profile(const std::string& user) const {
    std::lock_guard lock(table_mu_);
    auto it = profiles_.find(user);
    if (it == profiles_.end()) return std::nullopt;
    return it->second;
}

StoreStats RiskStore::stats() const {
    StoreStats s;
    s.events = event_count();
    {
        std::lock_guard lock(table_mu_);
        s.sessions = sessions_.size();
        s.violations = violations_.size();
        s.feedback = feedback_.size();
        for (auto st : {AlertStatus::Open, AlertStatus::Acknowledged, AlertStatus::Resolved, AlertStatus::Rejected}) {
            s.alerts_by_status[std::string(to_string(st))] = 0;
        }
        for (auto sev : {Severity::LowSev, Severity::Medium, Severity::High, Severity::Critical}) {
            s.alerts_by_severity[std::string(to_string(sev))] = 0;
        }
        for (const auto& [id, a] : alerts_) {
            ++s.alerts_by_status[std::string(to_string(a.status))];
            ++s.alerts_by_severity[std::string(to_string(a.severity))];
        }
    }
    {
        std::lock_guard lock(rate_mu_);
        if (ingest_marks_.size() >= 2) {
            std::uint64_t total = 0;
            for (auto it = std::next(ingest_marks_.begin()); it != ingest_marks_.end(); ++it) total += it->second;
            const double span_s = static_cast<double>(ingest_marks_.back().first - ingest_marks_.front().first) / 1000.0;
            if (span_s > 0) s.ingest_rate_eps = static_cast<double>(total) / span_s;
        }
    }
    s.queries = queries_.load();
    s.p50_ms = latency_.percentile(0.50);
    s.p95_ms = latency_.percentile(0.95);
    s.p99_ms = latency_.percentile(0.99);
    return s;
}

VerifyReport RiskStore::verify(const std::filesystem::path& dir, const StoreOptions& opts) {
    VerifyReport report;
    const auto seg_dir = dir / "segments";
    if (!std::filesystem::is_directory(seg_dir)) {
        report.errors.push_back("missing segments directory under " + dir.string());
        return report;
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(seg_dir)) {
        if (entry.path().extension() == ".seg") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        ++report.segments;
        const auto data = read_file(path);
        try {
            const auto r = scan_segment(path.filename().string(), data,
                                        [&](std::string_view payload, std::size_t, std::uint32_t) {
                                            decode_event(opts.codec.decode(std::string(payload)));
                                            ++report.records;
                                        });
            if (r.torn) ++report.torn_tails;
        } catch (const Error& e) {
            report.errors.push_back(path.filename().string() + ": " + e.what());
        }
    }
    return report;
}

}  // namespace irm
