#pragma once

#include <chrono>
#include <stdexcept>
#include <string>

namespace gsgen {

enum class ServiceErrorKind {
    Timeout,           ///< deadline exceeded or endpoint unreachable
    MalformedResponse, ///< body failed to decode or validate
    ServiceStatus,     ///< non-200 reply
    NoReferences,      ///< local provider has nothing to answer with
};

const char* to_string(ServiceErrorKind kind);

class ServiceError : public std::runtime_error {
public:
    ServiceError(ServiceErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    ServiceErrorKind kind() const { return kind_; }

private:
    ServiceErrorKind kind_;
};

struct HttpEndpoint {
    /// http://host[:port][/path]
    std::string url;
    std::chrono::milliseconds deadline{10000};
    /// Sent as a bearer token when non-empty.
    std::string auth_token;
};

/// Reads the token from GSGEN_AUTH_TOKEN, empty when unset.
std::string auth_token_from_env();

/// POSTs a JSON body and returns the reply body. Never blocks much past
/// `endpoint.deadline`: the transfer runs on a detached worker and is
/// abandoned when the deadline passes.
std::string post_json(const HttpEndpoint& endpoint, const std::string& body);

} // namespace gsgen
