#pragma once

#include <httplib.h>

#include <chrono>
#include <functional>
#include <string>
#include <thread>

namespace gsgen::testing {

/// Local HTTP server on an ephemeral port answering POSTs with `handler`.
class StubServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit StubServer(Handler handler) {
        server_.Post(".*", [handler](const httplib::Request& req, httplib::Response& res) { handler(req, res); });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    int port() const { return port_; }
    std::string url(const std::string& path = "/guide") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

/// A port that nothing listens on.
inline int unused_port() {
    httplib::Server probe;
    return probe.bind_to_any_port("127.0.0.1");
}

} // namespace gsgen::testing
