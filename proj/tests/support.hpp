#pragma once

#include "irm/error.hpp"
#include "irm/event.hpp"
#include "irm/time_util.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace irm::test {

inline Timestamp at(const char* cert) {
    auto t = parse_cert_time(cert);
    if (!t) throw std::runtime_error(std::string("bad test timestamp ") + cert);
    return *t;
}

inline ActivityEvent make_event(std::string id, Timestamp ts, std::string user, Activity a,
                                std::string device = "PC-1") {
    ActivityEvent e;
    e.event_id = std::move(id);
    e.timestamp = ts;
    e.user_id = std::move(user);
    e.device_id = std::move(device);
    e.activity = a;
    e.source = source_of(a);
    return e;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<unsigned> n{0};
        path_ = std::filesystem::temp_directory_path() /
                ("irm-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(IRM_FIXTURES) / rel; }
inline std::filesystem::path config_file(const std::string& rel) { return std::filesystem::path(IRM_CONFIG) / rel; }

}  // namespace irm::test
