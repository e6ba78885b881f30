#include "irm/ingest.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace irm {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> parse_cidr(std::string_view text) {
    text = trim(text);
    std::uint32_t prefix = 32;
    if (auto slash = text.find('/'); slash != std::string_view::npos) {
        auto bits = text.substr(slash + 1);
        auto [ptr, ec] = std::from_chars(bits.data(), bits.data() + bits.size(), prefix);
        if (ec != std::errc{} || ptr != bits.data() + bits.size() || prefix > 32) return std::nullopt;
        text = text.substr(0, slash);
    }
    auto addr = parse_ipv4(text);
    if (!addr) return std::nullopt;
    const std::uint32_t mask = prefix == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix);
    return std::pair{*addr & mask, mask};
}

Activity activity_from_json(const nlohmann::json& j) {
    auto a = parse_activity(j.get<std::string>());
    if (!a) throw Error(ErrorCode::ConfigError, "unknown activity in mapping: " + j.get<std::string>());
    return *a;
}

void overlay(SourceMapping& target, const nlohmann::json& doc) {
    if (doc.contains("columns")) target.columns = doc.at("columns").get<std::vector<std::string>>();
    if (doc.contains("activity_map")) {
        for (auto& [verb, act] : doc.at("activity_map").items()) target.activity_map[verb] = activity_from_json(act);
    }
    if (doc.contains("default_activity")) target.default_activity = activity_from_json(doc.at("default_activity"));
}

std::unordered_map<std::string, std::size_t> header_index(const std::vector<std::string>& header) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < header.size(); ++i) idx[std::string(trim(header[i]))] = i;
    return idx;
}

}  // namespace

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string file_id_for(std::string_view filename) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : filename) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ColumnMapping ColumnMapping::cert_defaults() {
    ColumnMapping m;
    m.logon.columns = {"id", "date", "user", "pc", "activity"};
    m.logon.activity_map = {{"Logon", Activity::Login}, {"Logoff", Activity::Logout},
                            {"LogonFailed", Activity::LoginFailed}};
    m.device.columns = {"id", "date", "user", "pc", "activity"};
    m.device.activity_map = {{"Connect", Activity::DeviceConnect}, {"Disconnect", Activity::DeviceDisconnect}};
    m.file.columns = {"id", "date", "user", "pc", "filename", "content"};
    m.file.default_activity = Activity::FileWrite;
    return m;
}

ColumnMapping ColumnMapping::from_json_text(const std::string& text) {
    ColumnMapping m = cert_defaults();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("column mapping: ") + e.what());
    }
    if (doc.contains("logon")) overlay(m.logon, doc.at("logon"));
    if (doc.contains("device")) overlay(m.device, doc.at("device"));
    if (doc.contains("file")) overlay(m.file, doc.at("file"));
    return m;
}

ColumnMapping ColumnMapping::load(const std::filesystem::path& path) { return from_json_text(read_file(path)); }

const SourceMapping& ColumnMapping::for_source(EventSource s) const {
    switch (s) {
        case EventSource::Logon: return logon;
        case EventSource::Device: return device;
        case EventSource::File: return file;
    }
    return logon;
}

ActivityEvent parse_row(EventSource source, std::string_view csv_row, const ParseOptions& opts) {
    const SourceMapping& mapping = opts.mapping.for_source(source);
    auto fields = split_csv(csv_row);
    if (fields.size() != mapping.columns.size()) {
        throw Error(ErrorCode::MalformedRow, "expected " + std::to_string(mapping.columns.size()) +
                                                 " fields, got " + std::to_string(fields.size()));
    }

    ActivityEvent ev;
    ev.source = source;
    std::optional<std::string> verb;
    std::optional<std::string> date;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string& col = mapping.columns[i];
        std::string& value = fields[i];
        if (col == "id") ev.event_id = std::move(value);
        else if (col == "date") date = std::move(value);
        else if (col == "user") ev.user_id = std::move(value);
        else if (col == "pc") ev.device_id = std::move(value);
        else if (col == "activity") verb = std::move(value);
        else if (col == "ip") {
            if (!value.empty()) ev.ip_address = std::move(value);
        } else if (col == "region") {
            if (!value.empty()) ev.geo_region = std::move(value);
        } else if (col == "app") {
            auto app = parse_app_context(value);
            ev.app_context = app.value_or(AppContext::Unknown);
        } else if (col == "filename") {
            ev.raw_extra[extra_key::kFilename] = std::move(value);
        } else if (col == "content") {
            ev.raw_extra[extra_key::kContent] = std::move(value);
        } else if (!value.empty()) {
            ev.raw_extra[col] = std::move(value);
        }
    }

    if (ev.event_id.empty() || ev.user_id.empty()) throw Error(ErrorCode::MalformedRow, "missing id or user");
    if (!date) throw Error(ErrorCode::MalformedRow, "no date column");
    auto ts = parse_cert_time(trim(*date), opts.tz);
    if (!ts || *ts < opts.min_time || *ts > opts.max_time) {
        throw Error(ErrorCode::BadTimestamp, "bad timestamp: " + *date);
    }
    ev.timestamp = *ts;

    if (source == EventSource::File) {
        auto fname = ev.extra(extra_key::kFilename);
        if (fname.empty()) throw Error(ErrorCode::MalformedRow, "empty filename");
        ev.file_id = file_id_for(fname);
    }

    std::optional<Activity> act;
    if (verb) {
        if (auto it = mapping.activity_map.find(*verb); it != mapping.activity_map.end()) act = it->second;
        else act = parse_activity(*verb);
    } else {
        act = mapping.default_activity;
    }
    if (!act || source_of(*act) != source) {
        throw Error(ErrorCode::UnknownActivity, "unknown activity: " + verb.value_or("<none>"));
    }
    ev.activity = *act;
    return ev;
}

ActivityEvent parse_logon_row(std::string_view csv_row, const ParseOptions& opts) {
    return parse_row(EventSource::Logon, csv_row, opts);
}
ActivityEvent parse_device_row(std::string_view csv_row, const ParseOptions& opts) {
    return parse_row(EventSource::Device, csv_row, opts);
}
ActivityEvent parse_file_row(std::string_view csv_row, const ParseOptions& opts) {
    return parse_row(EventSource::File, csv_row, opts);
}

// ---- directory / registry ----

void UserDirectory::add(UserRecord record) {
    auto id = record.user_id;
    users_[id] = std::move(record);
}

UserRecord UserDirectory::resolve(const std::string& user_id) const {
    if (auto* r = find(user_id)) return *r;
    UserRecord synthetic;
    synthetic.user_id = user_id;
    synthetic.display_name = user_id;
    synthetic.role = "unknown";
    synthetic.privilege = Privilege::Low;
    return synthetic;
}

const UserRecord* UserDirectory::find(const std::string& user_id) const {
    auto it = users_.find(user_id);
    return it == users_.end() ? nullptr : &it->second;
}

std::vector<std::string> UserDirectory::users_in_department(const std::string& department) const {
    std::vector<std::string> out;
    for (const auto& [id, rec] : users_) {
        if (rec.department == department) out.push_back(id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

UserDirectory UserDirectory::from_csv_text(const std::string& text) {
    UserDirectory dir;
    auto lines = split_lines(text);
    if (lines.empty()) return dir;
    auto idx = header_index(split_csv(lines.front()));
    auto col = [&](const std::vector<std::string>& f, std::initializer_list<const char*> names) -> std::string {
        for (const char* n : names) {
            if (auto it = idx.find(n); it != idx.end() && it->second < f.size()) return std::string(trim(f[it->second]));
        }
        return {};
    };
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = split_csv(lines[i]);
        UserRecord r;
        r.user_id = col(f, {"user_id"});
        if (r.user_id.empty()) continue;
        r.display_name = col(f, {"employee_name", "name", "display_name"});
        r.role = col(f, {"role"});
        r.department = col(f, {"department"});
        r.privilege = parse_privilege(col(f, {"privilege"})).value_or(Privilege::Low);
        dir.add(std::move(r));
    }
    return dir;
}

UserDirectory UserDirectory::load_csv(const std::filesystem::path& path) { return from_csv_text(read_file(path)); }

void DeviceRegistry::add(DeviceEntry entry) {
    auto id = entry.device_id;
    devices_[id] = std::move(entry);
}

const DeviceEntry* DeviceRegistry::find(const std::string& device_id) const {
    auto it = devices_.find(device_id);
    return it == devices_.end() ? nullptr : &it->second;
}

DeviceRegistry DeviceRegistry::from_csv_text(const std::string& text) {
    DeviceRegistry reg;
    auto lines = split_lines(text);
    if (lines.empty()) return reg;
    auto idx = header_index(split_csv(lines.front()));
    auto col = [&](const std::vector<std::string>& f, const char* name) -> std::string {
        if (auto it = idx.find(name); it != idx.end() && it->second < f.size()) return std::string(trim(f[it->second]));
        return {};
    };
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto f = split_csv(lines[i]);
        DeviceEntry e;
        e.device_id = col(f, "device_id");
        if (e.device_id.empty()) continue;
        e.trust = parse_device_trust(col(f, "trust")).value_or(DeviceTrust::Unmanaged);
        e.owner = col(f, "owner");
        e.software_version = col(f, "software_version");
        const auto nc = col(f, "noncompliant");
        e.noncompliant_override = nc == "true" || nc == "1";
        reg.add(std::move(e));
    }
    return reg;
}

DeviceRegistry DeviceRegistry::load_csv(const std::filesystem::path& path) { return from_csv_text(read_file(path)); }

std::optional<std::uint32_t> parse_ipv4(std::string_view text) {
    std::uint32_t result = 0;
    int parts = 0;
    while (parts < 4) {
        unsigned octet = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), octet);
        if (ec != std::errc{} || octet > 255 || ptr == text.data()) return std::nullopt;
        result = (result << 8) | octet;
        ++parts;
        text.remove_prefix(static_cast<std::size_t>(ptr - text.data()));
        if (parts < 4) {
            if (text.empty() || text.front() != '.') return std::nullopt;
            text.remove_prefix(1);
        }
    }
    if (!text.empty()) return std::nullopt;
    return result;
}

bool IpList::add(std::string_view entry) {
    auto c = parse_cidr(entry);
    if (!c) return false;
    blocks_.push_back({c->first, c->second});
    return true;
}

bool IpList::contains(std::string_view ip) const {
    auto addr = parse_ipv4(trim(ip));
    if (!addr) return false;
    return std::any_of(blocks_.begin(), blocks_.end(),
                       [&](const Block& b) { return (*addr & b.mask) == b.network; });
}

IpList IpList::from_text(const std::string& text) {
    IpList list;
    for (auto& line : split_lines(text)) {
        std::string_view v = line;
        if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = trim(v);
        if (!v.empty() && !list.add(v)) throw Error(ErrorCode::ConfigError, "bad IP list entry: " + std::string(v));
    }
    return list;
}

IpList IpList::load(const std::filesystem::path& path) { return from_text(read_file(path)); }

bool IpRegionTable::add(std::string_view cidr, std::string region) {
    auto c = parse_cidr(cidr);
    if (!c) return false;
    entries_.push_back({c->first, c->second, std::move(region)});
    return true;
}

std::optional<std::string> IpRegionTable::lookup(std::string_view ip) const {
    auto addr = parse_ipv4(trim(ip));
    if (!addr) return std::nullopt;
    // Longest prefix wins.
    const Entry* best = nullptr;
    for (const auto& e : entries_) {
        if ((*addr & e.mask) == e.network && (!best || e.mask > best->mask)) best = &e;
    }
    if (!best) return std::nullopt;
    return best->region;
}

IpRegionTable IpRegionTable::from_text(const std::string& text) {
    IpRegionTable table;
    for (auto& line : split_lines(text)) {
        if (line.front() == '#') continue;
        auto f = split_csv(line);
        if (f.size() != 2 || !table.add(f[0], std::string(trim(f[1])))) {
            throw Error(ErrorCode::ConfigError, "bad region table row: " + line);
        }
    }
    return table;
}

IpRegionTable IpRegionTable::load(const std::filesystem::path& path) { return from_text(read_file(path)); }

ActivityEvent enrich(ActivityEvent event, const EnrichmentTables& tables) {
    if (const auto* dev = tables.devices.find(event.device_id)) {
        event.device_trust = dev->trust;
        if (dev->trust == DeviceTrust::Unmanaged && dev->noncompliant_override) {
            event.raw_extra[extra_key::kDeviceNonCompliant] = "true";
        }
    } else {
        event.device_trust = DeviceTrust::Unmanaged;
    }
    if (event.ip_address) {
        if (auto region = tables.regions.lookup(*event.ip_address)) event.geo_region = std::move(region);
    }
    return event;
}

// ---- sessionization ----

Sessionizer::Sessionizer(Seconds idle_gap) : idle_gap_(idle_gap) {}

Session Sessionizer::start(ActivityEvent event) {
    Session s;
    s.session_id = "S-" + event.event_id;
    s.user_id = event.user_id;
    s.device_id = event.device_id;
    s.start = event.timestamp;
    s.end = event.timestamp;
    s.events.push_back(std::move(event));
    return s;
}

std::vector<Session> Sessionizer::push(ActivityEvent event) {
    std::vector<Session> closed;
    auto it = open_.find(event.user_id);
    if (it != open_.end() && event.timestamp - it->second.end > idle_gap_) {
        closed.push_back(std::move(it->second));
        open_.erase(it);
        it = open_.end();
    }

    if (event.activity == Activity::Login) {
        if (it != open_.end()) {
            closed.push_back(std::move(it->second));
            open_.erase(it);
        }
        auto user = event.user_id;
        open_.emplace(std::move(user), start(std::move(event)));
        return closed;
    }

    if (it != open_.end()) {
        Session& s = it->second;
        s.end = event.timestamp;
        const bool ends = event.activity == Activity::Logout;
        s.events.push_back(std::move(event));
        if (ends) {
            closed.push_back(std::move(s));
            open_.erase(it);
        }
        return closed;
    }

    closed.push_back(start(std::move(event)));
    return closed;
}

std::vector<Session> Sessionizer::close_idle(Timestamp now) {
    std::vector<Session> closed;
    for (auto it = open_.begin(); it != open_.end();) {
        if (now - it->second.end > idle_gap_) {
            closed.push_back(std::move(it->second));
            it = open_.erase(it);
        } else {
            ++it;
        }
    }
    return closed;
}

std::vector<Session> Sessionizer::flush() {
    std::vector<Session> closed;
    closed.reserve(open_.size());
    for (auto& [user, s] : open_) closed.push_back(std::move(s));
    open_.clear();
    return closed;
}

std::vector<Session> sessionize(std::span<const ActivityEvent> events, Seconds idle_gap) {
    Sessionizer sz(idle_gap);
    std::vector<Session> out;
    for (const auto& e : events) {
        auto closed = sz.push(e);
        std::move(closed.begin(), closed.end(), std::back_inserter(out));
    }
    auto rest = sz.flush();
    std::move(rest.begin(), rest.end(), std::back_inserter(out));
    std::stable_sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.session_id < b.session_id;
    });
    return out;
}

// ---- streaming readers ----

CsvSourceReader::CsvSourceReader(std::unique_ptr<std::istream> in, EventSource source, const ParseOptions& opts)
    : in_(std::move(in)), source_(source), opts_(&opts) {}

std::unique_ptr<CsvSourceReader> CsvSourceReader::open(const std::filesystem::path& path, EventSource source,
                                                       const ParseOptions& opts) {
    auto in = std::make_unique<std::ifstream>(path);
    if (!*in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return std::make_unique<CsvSourceReader>(std::move(in), source, opts);
}

std::optional<RowOutcome> CsvSourceReader::next() {
    while (std::getline(*in_, line_)) {
        ++line_no_;
        auto t = trim(line_);
        if (t.empty()) continue;
        if (line_no_ == 1 && (t.rfind("id,", 0) == 0 || t == "id")) continue;
        RowOutcome out;
        out.line_no = line_no_;
        try {
            out.event = parse_row(source_, t, *opts_);
        } catch (const Error& e) {
            out.error = e;
        }
        return out;
    }
    return std::nullopt;
}

CertDirectoryReader::CertDirectoryReader(const std::filesystem::path& dir, const ParseOptions& opts) {
    const std::pair<const char*, EventSource> files[] = {
        {"logon.csv", EventSource::Logon}, {"device.csv", EventSource::Device}, {"file.csv", EventSource::File}};
    for (const auto& [name, src] : files) {
        auto p = dir / name;
        if (std::filesystem::exists(p)) readers_.push_back(CsvSourceReader::open(p, src, opts));
    }
    heads_.resize(readers_.size());
    for (std::size_t i = 0; i < readers_.size(); ++i) heads_[i] = readers_[i]->next();
}

std::optional<RowOutcome> CertDirectoryReader::next() {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < heads_.size(); ++i) {
        if (!heads_[i]) continue;
        if (heads_[i]->error) {
            pick = i;
            break;
        }
        if (!pick || heads_[i]->event->timestamp < heads_[*pick]->event->timestamp) pick = i;
    }
    if (!pick) return std::nullopt;
    auto out = std::move(heads_[*pick]);
    heads_[*pick] = readers_[*pick]->next();
    return out;
}

}  // namespace irm
