#pragma once

// Eigen must be seen before httplib: <resolv.h> defines a `_res` macro.
#include <Eigen/Core>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "soda/llm/backend.hpp"

namespace soda::llm {

/// cpp-httplib transport for RemoteChat (http and https).
inline HttpPost httplib_post() {
  return [](const ParsedUrl& url, const std::string& api_key, const std::string& body,
            int timeout_seconds) -> std::pair<int, std::string> {
    httplib::Client client(url.scheme_host_port);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) throw std::runtime_error("HTTP error: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  };
}

inline std::unique_ptr<RemoteChat> make_remote_chat(RemoteChatConfig cfg) {
  return std::make_unique<RemoteChat>(std::move(cfg), httplib_post());
}

}  // namespace soda::llm
