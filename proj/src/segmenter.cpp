// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::segmenter {
namespace fs = std::filesystem;

namespace {
std::size_t to_frames(double seconds, int rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

std::string format_seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}
}  // namespace

std::string Segment::key() const {
  return source_id + "@" + format_seconds(start_s);
}

std::size_t Segment::start_frame() const { return to_frames(start_s, sample_rate); }

std::size_t Segment::frame_count() const {
  return to_frames(duration_s, sample_rate);
}

AudioBuffer downmix_mono(const AudioBuffer& buffer) {
  if (buffer.channels <= 0) {
    throw AudioError("cannot downmix a buffer with zero channels");
  }
  if (buffer.channels == 1) return buffer;
  const auto ch = static_cast<std::size_t>(buffer.channels);
  AudioBuffer out;
  out.sample_rate = buffer.sample_rate;
  out.channels = 1;
  out.source_id = buffer.source_id;
  out.samples.resize(buffer.frames());
  for (std::size_t f = 0; f < out.samples.size(); ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += buffer.samples[f * ch + c];
    out.samples[f] = acc / static_cast<double>(ch);
  }
  return out;
}

std::size_t window_count(std::size_t frames, std::size_t window_frames,
                         std::size_t hop_frames) {
  if (frames < window_frames) return 0;
  return (frames - window_frames) / hop_frames + 1;
}

std::vector<Segment> slice_windows(const AudioBuffer& mono, double window_s,
                                   double hop_s) {
  if (!(window_s > 0.0)) throw std::invalid_argument("window must be positive");
  if (!(hop_s > 0.0)) throw std::invalid_argument("hop must be positive");
  if (hop_s > window_s) throw std::invalid_argument("hop must not exceed window");
  validate(mono);
  if (mono.channels != 1) throw AudioError("slice_windows expects mono audio");

  const std::size_t win = to_frames(window_s, mono.sample_rate);
  const std::size_t hop = to_frames(hop_s, mono.sample_rate);
  if (win == 0 || hop == 0) {
    throw std::invalid_argument("window or hop shorter than one frame");
  }
  const std::size_t count = window_count(mono.frames(), win, hop);
  std::vector<Segment> out;
  out.reserve(count);
  const std::span<const double> all(mono.samples);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * hop;
    Segment seg;
    seg.source_id = mono.source_id;
    seg.start_s = static_cast<double>(start) / mono.sample_rate;
    seg.duration_s = window_s;
    seg.sample_rate = mono.sample_rate;
    seg.rms = rms(all.subspan(start, win));
    out.push_back(std::move(seg));
  }
  return out;
}

GateResult gate_segments(std::span<const Segment> segments, double threshold) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("negative RMS gate");
  GateResult out;
  for (const auto& s : segments) {
    (s.rms >= threshold ? out.kept : out.discarded).push_back(s);
  }
  return out;
}

std::span<const double> segment_samples(const AudioBuffer& mono,
                                        const Segment& seg) {
  if (mono.channels != 1) throw AudioError("segment_samples expects mono audio");
  if (mono.sample_rate != seg.sample_rate) {
    throw AudioError("segment rate " + std::to_string(seg.sample_rate) +
                     " does not match source rate " +
                     std::to_string(mono.sample_rate));
  }
  const std::size_t start = seg.start_frame();
  const std::size_t n = seg.frame_count();
  if (start + n > mono.frames()) {
    throw AudioError("segment " + seg.key() + " extends past its source");
  }
  return std::span<const double>(mono.samples).subspan(start, n);
}

AudioBuffer load_segment(const fs::path& corpus_root, const Segment& seg) {
  const AudioBuffer mono =
      downmix_mono(wav::read(corpus_root / seg.source_id, seg.source_id));
  const auto view = segment_samples(mono, seg);
  AudioBuffer out;
  out.sample_rate = mono.sample_rate;
  out.channels = 1;
  out.source_id = seg.source_id;
  out.samples.assign(view.begin(), view.end());
  return out;
}

std::vector<std::string> list_corpus(const fs::path& corpus_root) {
  if (!fs::is_directory(corpus_root)) {
    throw std::runtime_error("corpus root " + corpus_root.string() +
                             " is not a directory");
  }
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(corpus_root)) {
    if (!entry.is_regular_file()) continue;
    if (util::to_lower(entry.path().extension().string()) != ".wav") continue;
    out.push_back(fs::relative(entry.path(), corpus_root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

CorpusResult segment_corpus(const fs::path& corpus_root,
                            const CorpusOptions& options) {
  const auto files = list_corpus(corpus_root);
  std::vector<GateResult> per_file(files.size());
  util::parallel_for(files.size(), options.workers, [&](std::size_t i) {
    const AudioBuffer mono =
        downmix_mono(wav::read(corpus_root / files[i], files[i]));
    const auto segments = slice_windows(mono, options.window_s, options.hop_s);
    per_file[i] = gate_segments(segments, options.rms_gate);
  });
  CorpusResult out;
  out.files = files.size();
  for (auto& r : per_file) {
    out.discarded += r.discarded.size();
    for (auto& s : r.kept) out.kept.push_back(std::move(s));
  }
  std::stable_sort(out.kept.begin(), out.kept.end(),
                   [](const Segment& a, const Segment& b) {
                     if (a.source_id != b.source_id) return a.source_id < b.source_id;
                     return a.start_s < b.start_s;
                   });
  return out;
}

nlohmann::json to_json(const Segment& seg) {
  return {{"source_id", seg.source_id},
          {"start_s", seg.start_s},
          {"duration_s", seg.duration_s},
          {"rms", seg.rms},
          {"sample_rate", seg.sample_rate}};
}

Segment segment_from_json(const nlohmann::json& j) {
  Segment s;
  s.source_id = j.at("source_id").get<std::string>();
  s.start_s = j.at("start_s").get<double>();
  s.duration_s = j.at("duration_s").get<double>();
  s.rms = j.value("rms", 0.0);
  s.sample_rate = j.at("sample_rate").get<int>();
  return s;
}

std::string to_jsonl(std::span<const Segment> segments) {
  std::string out;
  for (const auto& s : segments) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<Segment> parse_jsonl(std::string_view text) {
  std::vector<Segment> out;
  std::size_t line_no = 0;
  for (const auto& line : util::lines(text)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(segment_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("segment index line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return out;
}

}  // namespace sepforge::segmenter
