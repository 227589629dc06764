// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SEPFORGE_SEGMENTER_HPP_
#define SEPFORGE_SEGMENTER_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/audio.hpp"

namespace sepforge::segmenter {

inline constexpr double kDefaultWindowS = 10.0;
inline constexpr double kDefaultHopS = 5.0;
inline constexpr double kDefaultRmsGate = 5e-4;

// A window of a source recording, stored by reference rather than by copy.
struct Segment {
  std::string source_id;
  double start_s = 0.0;
  double duration_s = 0.0;
  double rms = 0.0;
  int sample_rate = 0;

  // Stable key "source_id@start_s" used to address the segment downstream.
  std::string key() const;
  // Frame offsets within the mono source at sample_rate.
  std::size_t start_frame() const;
  std::size_t frame_count() const;

  bool operator==(const Segment&) const = default;
};

// Per-frame channel mean. Throws AudioError on zero channels.
AudioBuffer downmix_mono(const AudioBuffer& buffer);

// Windows of window_s every hop_s starting at 0; tails shorter than a full
// window are dropped. Window and hop are rounded to whole frames. Throws
// std::invalid_argument unless window_s > 0 and 0 < hop_s <= window_s.
std::vector<Segment> slice_windows(const AudioBuffer& mono,
                                   double window_s = kDefaultWindowS,
                                   double hop_s = kDefaultHopS);

// Number of windows slice_windows produces for a buffer of `frames` frames.
std::size_t window_count(std::size_t frames, std::size_t window_frames,
                         std::size_t hop_frames);

struct GateResult {
  std::vector<Segment> kept;
  std::vector<Segment> discarded;
};

// rms >= threshold is kept.
GateResult gate_segments(std::span<const Segment> segments,
                         double threshold = kDefaultRmsGate);

// Samples of `seg` cut from a mono buffer.
std::span<const double> segment_samples(const AudioBuffer& mono,
                                        const Segment& seg);

// Reads the source file, downmixes, and cuts the segment out.
AudioBuffer load_segment(const std::filesystem::path& corpus_root,
                         const Segment& seg);

struct CorpusOptions {
  double window_s = kDefaultWindowS;
  double hop_s = kDefaultHopS;
  double rms_gate = kDefaultRmsGate;
  unsigned workers = 1;
};

struct CorpusResult {
  std::vector<Segment> kept;  // sorted by (source_id, start_s)
  std::size_t discarded = 0;
  std::size_t files = 0;
};

// Recursively lists *.wav under the root as forward-slash relative ids,
// sorted.
std::vector<std::string> list_corpus(const std::filesystem::path& corpus_root);

CorpusResult segment_corpus(const std::filesystem::path& corpus_root,
                            const CorpusOptions& options);

nlohmann::json to_json(const Segment& seg);
Segment segment_from_json(const nlohmann::json& j);
std::string to_jsonl(std::span<const Segment> segments);
std::vector<Segment> parse_jsonl(std::string_view text);

}  // namespace sepforge::segmenter

#endif  // SEPFORGE_SEGMENTER_HPP_
