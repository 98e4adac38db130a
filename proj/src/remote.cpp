#include "grasplab/remote.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "grasplab/errors.hpp"

namespace grasplab {

namespace {

// Splits "http(s)://host:port" from the path prefix, if any.
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    size_t scheme = url.find("://");
    size_t path_start = scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {url, ""};
    return {url.substr(0, path_start), url.substr(path_start)};
}

// Process-wide throttle on concurrent remote calls, including retry waits.
std::mutex g_flight_mutex;
std::condition_variable g_flight_cv;
int g_in_flight = 0;

struct FlightGuard {
    explicit FlightGuard(int limit) {
        std::unique_lock<std::mutex> lock(g_flight_mutex);
        g_flight_cv.wait(lock, [&] { return g_in_flight < limit; });
        ++g_in_flight;
    }
    ~FlightGuard() {
        {
            std::lock_guard<std::mutex> lock(g_flight_mutex);
            --g_in_flight;
        }
        g_flight_cv.notify_one();
    }
};

}  // namespace

std::string respond_remote(const RemoteEndpointConfig& config, const std::string& system_prompt,
                           const std::string& user_content) {
    if (config.base_url.empty()) throw ConfigError("remote endpoint base_url is empty");
    if (config.max_in_flight < 1)
        throw ConfigError("remote max_in_flight must be at least 1");
    FlightGuard flight(config.max_in_flight);

    auto [host, prefix] = split_base_url(config.base_url);
    std::string path = prefix + config.path;

    std::string credential;
    if (!config.credential_env.empty()) {
        const char* v = std::getenv(config.credential_env.c_str());
        if (v == nullptr || *v == '\0')
            throw ConfigError("credential environment variable is not set: " +
                              config.credential_env);
        credential = v;
    }

    nlohmann::json body = {
        {"model", config.model},
        {"temperature", config.temperature},
        {"messages",
         {{{"role", "system"}, {"content", system_prompt}},
          {{"role", "user"}, {"content", user_content}}}},
    };
    std::string payload = body.dump();

    std::string last_error = "no attempt made";
    int attempts = config.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            long long delay = static_cast<long long>(config.retry_backoff_ms) << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        httplib::Client client(host);
        client.set_connection_timeout(0, config.timeout_ms * 1000LL);
        client.set_read_timeout(0, config.timeout_ms * 1000LL);
        client.set_write_timeout(0, config.timeout_ms * 1000LL);
        httplib::Headers headers;
        if (!credential.empty()) headers.emplace("Authorization", "Bearer " + credential);

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error (status " + std::to_string(res->status) + ")";
            continue;
        }
        if (res->status != 200)
            throw TransportError("remote endpoint returned status " +
                                 std::to_string(res->status));
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception&) {
            throw TransportError("remote endpoint returned an unexpected response shape");
        }
    }
    throw TransportError("remote endpoint unreachable after " + std::to_string(attempts) +
                         " attempts: " + last_error);
}

}  // namespace grasplab
