// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/standardizer.hpp"

#include <cstdlib>
#include <stdexcept>

#include "sepforge/resampler.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::standardizer {

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::kPassthrough:
      return "passthrough";
    case Decision::kDownsample:
      return "downsample";
    case Decision::kBandwidthExtend:
      return "bandwidth_extend";
  }
  return "?";
}

StandardizationRoute route(const AudioBuffer& buffer, int target) {
  StandardizationRoute r;
  r.input_rate = buffer.sample_rate;
  r.target_rate = target;
  if (buffer.sample_rate > target) {
    r.decision = Decision::kDownsample;
  } else if (buffer.sample_rate < target) {
    r.decision = Decision::kBandwidthExtend;
  } else {
    r.decision = Decision::kPassthrough;
  }
  return r;
}

AudioBuffer resample(const AudioBuffer& buffer, int target) {
  if (target <= 0) throw std::invalid_argument("target rate must be positive");
  validate(buffer);
  if (buffer.channels != 1) throw AudioError("resampling expects mono audio");
  if (buffer.sample_rate == target) return buffer;
  const auto rs = cached_resampler(buffer.sample_rate, target);
  AudioBuffer out;
  out.sample_rate = target;
  out.channels = 1;
  out.source_id = buffer.source_id;
  out.samples = rs->process(buffer.samples);
  return out;
}

AudioBuffer downsample_antialias(const AudioBuffer& buffer, int target) {
  if (target <= 0) throw std::invalid_argument("target rate must be positive");
  if (buffer.sample_rate <= target) {
    throw std::invalid_argument("downsampling needs an input rate above " +
                                std::to_string(target));
  }
  return resample(buffer, target);
}

nlohmann::json HttpBandwidthExtender::request_body(const AudioBuffer& buffer,
                                                   int target_rate) {
  return {{"audio", util::base64_encode(wav::encode(buffer))},
          {"target_rate", target_rate}};
}

AudioBuffer HttpBandwidthExtender::extend(const AudioBuffer& buffer, int target_rate) {
  const auto reply = post_json(url_, request_body(buffer, target_rate), timeout_);
  if (!reply.is_object() || !reply.contains("audio") || !reply["audio"].is_string()) {
    throw TransportError("extension service reply lacks an 'audio' string");
  }
  try {
    AudioBuffer out = wav::decode(util::base64_decode(reply["audio"].get<std::string>()),
                                  buffer.source_id);
    out.source_id = buffer.source_id;
    return out;
  } catch (const std::exception& e) {
    throw TransportError(std::string("extension service returned bad audio: ") + e.what());
  }
}

Extended bandwidth_extend(const AudioBuffer& buffer, BandwidthExtender* service,
                          int target) {
  if (buffer.sample_rate >= target) {
    throw std::invalid_argument("bandwidth extension needs an input rate below " +
                                std::to_string(target));
  }
  Extended out;
  if (service != nullptr) {
    try {
      AudioBuffer ext = service->extend(buffer, target);
      const std::size_t expected = cached_resampler(buffer.sample_rate, target)
                                       ->output_length(buffer.frames());
      if (ext.sample_rate != target || ext.channels != 1) {
        throw TransportError("service returned " + std::to_string(ext.sample_rate) +
                             " Hz / " + std::to_string(ext.channels) + " ch audio");
      }
      // Allow a one-sample rounding difference, then pin the length.
      const auto diff = static_cast<long long>(ext.frames()) - static_cast<long long>(expected);
      if (std::llabs(diff) > 1) {
        throw TransportError("service returned " + std::to_string(ext.frames()) +
                             " samples, expected " + std::to_string(expected));
      }
      ext.samples.resize(expected, 0.0);
      out.audio = std::move(ext);
      out.extended = true;
      return out;
    } catch (const TransportError& e) {
      out.warning = std::string("bandwidth extension failed, upsampled instead: ") + e.what();
    }
  }
  out.audio = resample(buffer, target);
  out.extended = false;
  return out;
}

Standardized standardize(const AudioBuffer& mono, BandwidthExtender* service, int target) {
  Standardized out;
  out.route = route(mono, target);
  switch (out.route.decision) {
    case Decision::kPassthrough:
      out.audio = mono;
      break;
    case Decision::kDownsample:
      out.audio = downsample_antialias(mono, target);
      break;
    case Decision::kBandwidthExtend: {
      auto ext = bandwidth_extend(mono, service, target);
      out.audio = std::move(ext.audio);
      out.extended = ext.extended;
      out.warning = std::move(ext.warning);
      break;
    }
  }
  return out;
}

}  // namespace sepforge::standardizer
