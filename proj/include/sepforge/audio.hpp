// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SEPFORGE_AUDIO_HPP_
#define SEPFORGE_AUDIO_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepforge {

/// Sampled audio with provenance. Samples are interleaved when channels > 1
/// and nominally lie in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;
  int channels = 1;
  std::string source_id;

  std::size_t frames() const {
    return channels > 0 ? samples.size() / static_cast<std::size_t>(channels)
                        : 0;
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(frames()) / sample_rate : 0.0;
  }
};

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws AudioError when rate/channel fields are inconsistent.
void validate(const AudioBuffer& buffer);

/// sqrt(mean(x^2)). Throws std::invalid_argument on empty input.
double rms(std::span<const double> samples);

}  // namespace sepforge

#endif  // SEPFORGE_AUDIO_HPP_
