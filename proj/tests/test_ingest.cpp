#include "doctest.h"
#include "support.hpp"

#include "irm/ingest.hpp"

#include <fstream>
#include <map>
#include <random>
#include <set>

using namespace irm;
using irm::test::at;
using irm::test::make_event;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an irm::Error");
    return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("logon rows") {
    auto e = parse_logon_row("{X1},01/04/2010 07:43:14,DTAA/TNM0961,PC-8915,Logon");
    CHECK(e.event_id == "{X1}");
    CHECK(e.activity == Activity::Login);
    CHECK(e.source == EventSource::Logon);
    CHECK(e.user_id == "DTAA/TNM0961");
    CHECK(e.device_id == "PC-8915");
    CHECK(e.app_context == AppContext::Unknown);
    CHECK(format_cert_time(e.timestamp) == "01/04/2010 07:43:14");

    CHECK(parse_logon_row("{X3},01/04/2010 17:00:00,U1,PC-1,Logoff").activity == Activity::Logout);
    CHECK(code_of([] { parse_logon_row("{X1},01/04/2010 07:43:14,U1,PC-1"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { parse_logon_row("{X2},02/30/2010 09:00:00,U1,PC-1,Logon"); }) == ErrorCode::BadTimestamp);
}

TEST_CASE("device rows") {
    CHECK(parse_device_row("{D1},01/04/2010 08:01:00,U1,PC-1,Connect").activity == Activity::DeviceConnect);
    CHECK(parse_device_row("{D2},01/04/2010 08:05:00,U1,PC-1,Disconnect").activity == Activity::DeviceDisconnect);
    CHECK(code_of([] { parse_device_row("{D3},01/04/2010 08:05:00,U1,PC-1,Eject"); }) ==
          ErrorCode::UnknownActivity);
}

TEST_CASE("file rows") {
    auto e = parse_file_row("{F1},01/04/2010 08:10:00,U1,PC-1,Q3-payroll.docx,quarter numbers");
    CHECK(e.activity == Activity::FileWrite);
    CHECK(e.source == EventSource::File);
    REQUIRE(e.file_id);
    CHECK(*e.file_id == file_id_for("Q3-payroll.docx"));
    CHECK(e.extra(extra_key::kFilename) == "Q3-payroll.docx");
    CHECK(e.extra(extra_key::kContent) == "quarter numbers");
    CHECK(code_of([] { parse_file_row("{F2},01/04/2010 08:10:00,U1,PC-1,,text"); }) == ErrorCode::MalformedRow);
}

TEST_CASE("file id is FNV-1a 64") {
    // Reference values of the 64-bit FNV-1a function.
    CHECK(file_id_for("") == "cbf29ce484222325");
    CHECK(file_id_for("a") == "af63dc4c8601ec8c");
    CHECK(file_id_for("foobar") == "85944171f73967e8");
}

TEST_CASE("quoted csv fields") {
    auto f = split_csv(R"(a,"b,c","say ""hi""",)");
    REQUIRE(f.size() == 4);
    CHECK(f[1] == "b,c");
    CHECK(f[2] == "say \"hi\"");
    CHECK(f[3].empty());
}

TEST_CASE("column mapping overlay") {
    auto m = ColumnMapping::from_json_text(
        R"({"file": {"columns": ["id","date","user","pc","filename","activity"],
                      "activity_map": {"File Delete": "FileDelete"}}})");
    ParseOptions opts;
    opts.mapping = m;
    auto e = parse_file_row("{F1},01/04/2010 08:10:00,U1,PC-1,a.txt,File Delete", opts);
    CHECK(e.activity == Activity::FileDelete);
    CHECK(code_of([&] { parse_file_row("{F1},01/04/2010 08:10:00,U1,PC-1,a.txt,Shred", opts); }) ==
          ErrorCode::UnknownActivity);
}

TEST_CASE("cert timestamps") {
    CHECK_FALSE(parse_cert_time("02/29/2010 00:00:00"));
    CHECK(parse_cert_time("02/29/2012 00:00:00"));
    CHECK_FALSE(parse_cert_time("01/04/2010 24:00:00"));
    CHECK_FALSE(parse_cert_time("01/04/2010 7:43:14"));
    TimeZone est{std::chrono::minutes{-300}};
    CHECK(to_epoch(*parse_cert_time("01/04/2010 07:00:00", est)) ==
          to_epoch(*parse_cert_time("01/04/2010 12:00:00")));
}

TEST_CASE("timestamp round trip property") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::int64_t> secs(631152000, 4102444799);
    for (int i = 0; i < 2000; ++i) {
        const auto t = from_epoch(secs(rng));
        const auto text = format_cert_time(t);
        auto back = parse_cert_time(text);
        REQUIRE(back);
        CHECK(*back == t);
        CHECK(format_cert_time(*back) == text);
        CHECK(parse_iso(format_iso(t)) == t);
    }
}

TEST_CASE("durations") {
    CHECK(parse_duration("5m") == Seconds{300});
    CHECK(parse_duration("1h") == Seconds{3600});
    CHECK(parse_duration("7d") == Seconds{7 * 86400});
    CHECK(parse_duration("45") == Seconds{45});
    CHECK_FALSE(parse_duration("5y"));
    CHECK_FALSE(parse_duration(""));
}

TEST_CASE("enrichment") {
    EnrichmentTables t;
    t.devices = DeviceRegistry::from_csv_text("device_id,trust\nPC-1,ManagedCompliant\nPC-2,ManagedNonCompliant\n");
    t.regions = IpRegionTable::from_text("10.0.0.0/8,US\n203.0.113.0/24,SG\n");

    auto e = make_event("e1", at("01/04/2010 09:00:00"), "U1", Activity::Login, "PC-1");
    e.ip_address = "203.0.113.7";
    auto r = enrich(e, t);
    CHECK(r.device_trust == DeviceTrust::ManagedCompliant);
    CHECK(r.geo_region == "SG");

    auto u = enrich(make_event("e2", at("01/04/2010 09:00:00"), "U1", Activity::Login, "PC-404"), t);
    CHECK(u.device_trust == DeviceTrust::Unmanaged);
    CHECK_FALSE(u.geo_region);

    UserDirectory users;
    auto ghost = users.resolve("NOBODY");
    CHECK(ghost.privilege == Privilege::Low);
    CHECK(ghost.user_id == "NOBODY");
}

TEST_CASE("enrich is idempotent") {
    EnrichmentTables t;
    t.devices = DeviceRegistry::from_csv_text("device_id,trust\nPC-0,ManagedCompliant\nPC-1,ManagedNonCompliant\n");
    t.regions = IpRegionTable::from_text("10.0.0.0/8,US\n192.168.0.0/16,GB\n");
    std::mt19937 rng(11);
    for (int i = 0; i < 500; ++i) {
        auto e = make_event("e" + std::to_string(i), from_epoch(1262600000 + i), "U1", Activity::Login,
                            "PC-" + std::to_string(rng() % 4));
        switch (rng() % 4) {
            case 0: e.ip_address = "10.1.2." + std::to_string(rng() % 255); break;
            case 1: e.ip_address = "192.168.0." + std::to_string(rng() % 255); break;
            case 2: e.ip_address = "8.8.8.8"; break;
            default: break;
        }
        if (rng() % 3 == 0) e.device_trust = DeviceTrust::ManagedCompliant;
        auto once = enrich(e, t);
        CHECK(enrich(once, t) == once);
    }
}

TEST_CASE("ip lists") {
    auto l = IpList::from_text("# office\n10.0.0.0/8\n192.168.1.5\n");
    CHECK(l.contains("10.200.3.4"));
    CHECK(l.contains("192.168.1.5"));
    CHECK_FALSE(l.contains("192.168.1.6"));
    CHECK_FALSE(l.contains("not-an-ip"));
    CHECK_FALSE(parse_ipv4("1.2.3.256"));
    CHECK(parse_ipv4("1.2.3.4") == 0x01020304u);
}

TEST_CASE("sessionizer definitions") {
    std::vector<ActivityEvent> ev{
        make_event("a", at("01/04/2010 09:00:00"), "U1", Activity::Login),
        make_event("b", at("01/04/2010 09:05:00"), "U1", Activity::FileWrite),
        make_event("c", at("01/04/2010 09:10:00"), "U1", Activity::FileWrite),
        make_event("d", at("01/04/2010 09:15:00"), "U1", Activity::FileWrite),
        make_event("e", at("01/04/2010 09:20:00"), "U1", Activity::Logout),
    };
    auto s = sessionize(ev);
    REQUIRE(s.size() == 1);
    CHECK(s[0].events.size() == 5);
    CHECK(s[0].session_id == "S-a");

    std::vector<ActivityEvent> two{
        make_event("x", at("01/04/2010 09:00:00"), "U1", Activity::Login),
        make_event("y", at("01/04/2010 11:00:00"), "U1", Activity::Login),
    };
    CHECK(sessionize(two).size() == 2);
    CHECK(sessionize(std::span<const ActivityEvent>{}).empty());
}

TEST_CASE("streaming sessionizer closes idle sessions") {
    Sessionizer s(std::chrono::minutes{30});
    CHECK(s.push(make_event("a", at("01/04/2010 09:00:00"), "U1", Activity::Login)).empty());
    CHECK(s.close_idle(at("01/04/2010 09:29:00")).empty());
    auto closed = s.close_idle(at("01/04/2010 09:31:00"));
    REQUIRE(closed.size() == 1);
    CHECK(s.open_sessions() == 0);
}

TEST_CASE("sessionize partitions its input") {
    std::mt19937 rng(5);
    const Activity kinds[] = {Activity::Login, Activity::Logout, Activity::FileWrite, Activity::FileRead,
                              Activity::DeviceConnect};
    for (int round = 0; round < 50; ++round) {
        std::vector<ActivityEvent> ev;
        std::int64_t t = 1262600000;
        const int n = 1 + static_cast<int>(rng() % 300);
        for (int i = 0; i < n; ++i) {
            t += rng() % 2400;
            ev.push_back(make_event("E" + std::to_string(i), from_epoch(t), "U" + std::to_string(rng() % 4),
                                    kinds[rng() % 5]));
        }
        auto sessions = sessionize(ev, std::chrono::minutes{30});

        std::map<std::string, std::vector<std::string>> by_user_in;
        for (const auto& e : ev) by_user_in[e.user_id].push_back(e.event_id);
        std::map<std::string, std::vector<std::string>> by_user_out;
        std::set<std::string> seen;
        std::size_t total = 0;
        for (const auto& s : sessions) {
            REQUIRE_FALSE(s.events.empty());
            for (const auto& e : s.events) {
                CHECK(e.user_id == s.user_id);
                CHECK(seen.insert(e.event_id).second);
                by_user_out[s.user_id].push_back(e.event_id);
                ++total;
            }
            CHECK(s.start == s.events.front().timestamp);
            CHECK(s.end == s.events.back().timestamp);
        }
        CHECK(total == ev.size());
        CHECK(by_user_out == by_user_in);
    }
}

TEST_CASE("parsing is total over the fixtures") {
    for (const char* dir : {"cert-mini", "synthetic", "worked-example"}) {
        const auto root = irm::test::fixture(dir);
        ParseOptions opts;
        if (std::filesystem::exists(root / "column_mapping.json")) {
            opts.mapping = ColumnMapping::load(root / "column_mapping.json");
        }
        std::size_t rows = 0;
        for (const char* f : {"logon.csv", "device.csv", "file.csv"}) {
            std::ifstream in(root / f);
            std::string line;
            bool header = true;
            while (std::getline(in, line)) {
                if (header) {
                    header = false;
                    continue;
                }
                if (!line.empty()) ++rows;
            }
        }
        CertDirectoryReader reader(root, opts);
        std::size_t events = 0, errors = 0;
        while (auto r = reader.next()) {
            CHECK(r->event.has_value() != r->error.has_value());
            if (r->event) ++events;
            else ++errors;
        }
        INFO(dir);
        CHECK(events + errors == rows);
    }
}
