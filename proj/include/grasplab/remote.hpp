#pragma once

#include <optional>
#include <string>

namespace grasplab {

// Chat-completion style HTTP endpoint. The bearer credential is read from the
// process environment (variable named by credential_env) at call time and is
// never logged or echoed into error messages.
struct RemoteEndpointConfig {
    std::string base_url;             // e.g. "http://127.0.0.1:8099"
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string credential_env;       // empty means anonymous
    double temperature = 0.0;
    int timeout_ms = 30000;
    int max_retries = 3;              // retry count after the first attempt
    int retry_backoff_ms = 250;       // doubles per retry
    int max_in_flight = 4;            // process-wide cap on concurrent requests
};

// Sends system prompt + user content, returns the assistant text. Retries
// transient failures (5xx, transport errors) with exponential backoff and
// throws TransportError with a sanitized message once retries are exhausted.
std::string respond_remote(const RemoteEndpointConfig& config, const std::string& system_prompt,
                           const std::string& user_content);

}  // namespace grasplab
