// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Brings clips to one sample rate. Higher-rate audio is downsampled through
// the polyphase resampler; lower-rate audio goes to a bandwidth-extension
// service, or falls back to plain band-limited upsampling when none is
// configured or the service fails.
//
// Extension service wire protocol:
//   POST {"audio": <base64 WAV>, "target_rate": int} -> {"audio": <base64 WAV>}

#ifndef SEPFORGE_STANDARDIZER_HPP_
#define SEPFORGE_STANDARDIZER_HPP_

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/audio.hpp"
#include "sepforge/transport.hpp"

namespace sepforge::standardizer {

inline constexpr int kTargetRate = 44100;

enum class Decision { kPassthrough, kDownsample, kBandwidthExtend };

std::string_view to_string(Decision d);

struct StandardizationRoute {
  int input_rate = 0;
  Decision decision = Decision::kPassthrough;
  int target_rate = kTargetRate;
};

// Keyed on the declared sample rate only.
StandardizationRoute route(const AudioBuffer& buffer, int target = kTargetRate);

// Throws std::invalid_argument when target <= 0 or the buffer rate is not
// above the target.
AudioBuffer downsample_antialias(const AudioBuffer& buffer, int target);

// Plain band-limited rate change in either direction (used as the
// bandwidth-extension fallback).
AudioBuffer resample(const AudioBuffer& buffer, int target);

class BandwidthExtender {
 public:
  virtual ~BandwidthExtender() = default;
  // Throws TransportError on service failure.
  virtual AudioBuffer extend(const AudioBuffer& buffer, int target_rate) = 0;
};

class HttpBandwidthExtender : public BandwidthExtender {
 public:
  explicit HttpBandwidthExtender(std::string url,
                                 std::chrono::seconds timeout = std::chrono::seconds(300))
      : url_(std::move(url)), timeout_(timeout) {}
  AudioBuffer extend(const AudioBuffer& buffer, int target_rate) override;

  static nlohmann::json request_body(const AudioBuffer& buffer, int target_rate);

 private:
  std::string url_;
  std::chrono::seconds timeout_;
};

struct Extended {
  AudioBuffer audio;
  bool extended = false;         // true only when the service produced it
  std::optional<std::string> warning;
};

// Precondition: buffer rate < target. With no service (nullptr) or on
// service failure, upsamples and reports extended = false. A service reply
// at the wrong rate or length is treated as a failure.
Extended bandwidth_extend(const AudioBuffer& buffer, BandwidthExtender* service,
                          int target = kTargetRate);

struct Standardized {
  AudioBuffer audio;
  StandardizationRoute route;
  bool extended = false;
  std::optional<std::string> warning;
};

// Mono input; dispatches on route().
Standardized standardize(const AudioBuffer& mono, BandwidthExtender* service,
                         int target = kTargetRate);

}  // namespace sepforge::standardizer

#endif  // SEPFORGE_STANDARDIZER_HPP_
