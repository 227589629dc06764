// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/transport.hpp"

#include <httplib.h>

namespace sepforge {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("malformed service URL '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         std::chrono::seconds timeout) {
  const ParsedUrl target = parse_url(url);
  httplib::Client client(target.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(target.path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("POST " + url + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("POST " + url + " returned HTTP " +
                         std::to_string(res->status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("POST " + url + " returned malformed JSON: " + e.what());
  }
}

}  // namespace sepforge
