#include "gsgen/io/http.hpp"

#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>

namespace gsgen {

const char* to_string(ServiceErrorKind kind) {
    switch (kind) {
    case ServiceErrorKind::Timeout: return "timeout";
    case ServiceErrorKind::MalformedResponse: return "malformed response";
    case ServiceErrorKind::ServiceStatus: return "service error";
    case ServiceErrorKind::NoReferences: return "no references";
    }
    return "unknown";
}

namespace {

struct ParsedUrl {
    std::string origin; // scheme://host:port
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    std::string rest = url;
    std::string scheme = "http";
    if (const auto pos = rest.find("://"); pos != std::string::npos) {
        scheme = rest.substr(0, pos);
        rest = rest.substr(pos + 3);
    }
    if (scheme != "http") throw std::invalid_argument("unsupported url scheme: " + scheme);
    const auto slash = rest.find('/');
    ParsedUrl out;
    out.origin = scheme + "://" + rest.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
    if (rest.substr(0, slash).empty()) throw std::invalid_argument("url has no host: " + url);
    return out;
}

struct Transfer {
    std::mutex mutex;
    std::condition_variable cv;
    bool done = false;
    bool connected = false;
    int status = 0;
    std::string body;
    std::string error;
};

} // namespace

std::string auth_token_from_env() {
    const char* token = std::getenv("GSGEN_AUTH_TOKEN");
    return token ? token : "";
}

std::string post_json(const HttpEndpoint& endpoint, const std::string& body) {
    if (endpoint.deadline.count() <= 0) throw std::invalid_argument("deadline must be positive");
    const ParsedUrl url = parse_url(endpoint.url);
    auto transfer = std::make_shared<Transfer>();
    const auto deadline = endpoint.deadline;
    const std::string token = endpoint.auth_token;

    std::thread([transfer, url, body, deadline, token] {
        httplib::Client client(url.origin);
        if (!token.empty()) client.set_bearer_token_auth(token);
        const auto sec = std::chrono::duration_cast<std::chrono::seconds>(deadline);
        const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(deadline - sec);
        client.set_connection_timeout(sec.count(), usec.count());
        client.set_read_timeout(sec.count(), usec.count());
        client.set_write_timeout(sec.count(), usec.count());
        auto result = client.Post(url.path, body, "application/json");
        std::lock_guard lock(transfer->mutex);
        if (result) {
            transfer->connected = true;
            transfer->status = result->status;
            transfer->body = std::move(result->body);
        } else {
            transfer->error = httplib::to_string(result.error());
        }
        transfer->done = true;
        transfer->cv.notify_all();
    }).detach();

    std::unique_lock lock(transfer->mutex);
    if (!transfer->cv.wait_for(lock, deadline, [&] { return transfer->done; })) {
        throw ServiceError(ServiceErrorKind::Timeout, "no reply from " + endpoint.url + " within deadline");
    }
    if (!transfer->connected) {
        throw ServiceError(ServiceErrorKind::Timeout, endpoint.url + ": " + transfer->error);
    }
    if (transfer->status != 200) {
        throw ServiceError(ServiceErrorKind::ServiceStatus,
                           endpoint.url + " returned status " + std::to_string(transfer->status));
    }
    return std::move(transfer->body);
}

} // namespace gsgen
