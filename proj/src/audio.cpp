// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/audio.hpp"

#include <cmath>

namespace sepforge {

void validate(const AudioBuffer& buffer) {
  if (buffer.sample_rate <= 0) {
    throw AudioError("sample rate must be positive, got " +
                     std::to_string(buffer.sample_rate));
  }
  if (buffer.channels <= 0) {
    throw AudioError("channel count must be positive, got " +
                     std::to_string(buffer.channels));
  }
  if (buffer.samples.size() % static_cast<std::size_t>(buffer.channels) != 0) {
    throw AudioError("sample count is not a multiple of the channel count");
  }
}

double rms(std::span<const double> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("rms of an empty sequence");
  }
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

}  // namespace sepforge
