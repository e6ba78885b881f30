#pragma once

#include "irm/service.hpp"

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace irm {

int http_status_for(ErrorCode code);
Json error_envelope(const std::string& code, const std::string& message, const Json& detail = Json::object());

// HTTP/JSON surface over a Service. Every route requires
// "Authorization: Bearer <token>".
class ApiServer {
public:
    ApiServer(Service& service, std::string token);
    ~ApiServer();

    // Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    // Binds to an ephemeral port and returns it; serve with listen_after_bind.
    int bind_any(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready();

private:
    void routes();

    Service& service_;
    std::string token_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace irm
