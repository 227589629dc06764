// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SEPFORGE_TRANSPORT_HPP_
#define SEPFORGE_TRANSPORT_HPP_

#include <chrono>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace sepforge {

// A failed exchange with an external service. Retryable.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised once the retry budget is spent on TransportErrors.
class TransientFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken configuration (unknown labels, empty candidate sets, bad tables).
// Never retried.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{200};  // doubled after each failure
};

// POSTs a JSON body to an http:// URL and parses the JSON reply. Any
// connection failure, non-2xx status, or unparsable body is a TransportError.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         std::chrono::seconds timeout = std::chrono::seconds(120));

}  // namespace sepforge

#endif  // SEPFORGE_TRANSPORT_HPP_
