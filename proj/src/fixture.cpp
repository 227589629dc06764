// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/fixture.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/random.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::fixture {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SourceFile {
  const char* name;
  int rate;
  wav::SampleFormat format;
  int channels;
  double seconds;
  std::vector<const char*> labels;  // metadata labels
  const char* coarse;
  double confidence;
  const char* leaf_index;  // relabel answer
  std::function<double(double t, Rng& rng)> signal;
};

double tone(double t, double f) { return std::sin(kTwoPi * f * t); }

std::vector<SourceFile> sources() {
  using F = wav::SampleFormat;
  return {
      {"animals/dog_bark.wav", 48000, F::kPcm16, 1, 30.0, {"dog"}, "animal", 0.92, "0",
       [](double t, Rng&) {
         // Barks every 0.7 s for the first 15 s, then silence.
         if (t >= 15.0) return 0.0;
         const double phase = std::fmod(t, 0.7);
         const double env = phase < 0.18 ? std::sin(std::numbers::pi * phase / 0.18) : 0.0;
         return 0.4 * env * (tone(t, 620) + 0.5 * tone(t, 1240) + 0.25 * tone(t, 1860));
       }},
      {"animals/cat_meow.wav", 44100, F::kPcm24, 2, 20.0, {"cat"}, "animal", 0.88, "1",
       [](double t, Rng&) {
         const double phase = std::fmod(t, 1.5);
         const double f = 450.0 + 300.0 * phase;
         return 0.3 * std::sin(kTwoPi * f * phase) * (phase < 1.0 ? 1.0 : 0.05);
       }},
      {"animals/bird_song.wav", 22050, F::kFloat32, 1, 20.0, {"bird"}, "animal", 0.81, "2",
       [](double t, Rng&) {
         const double phase = std::fmod(t, 0.25);
         return 0.25 * std::sin(kTwoPi * (3000.0 + 6000.0 * phase) * phase);
       }},
      {"vehicles/car_pass.wav", 32000, F::kPcm16, 1, 20.0, {"car"}, "vehicle", 0.9, "0",
       [](double t, Rng& rng) {
         const double level = 0.15 + 0.1 * std::sin(kTwoPi * 0.1 * t);
         return level * (tone(t, 110) + 0.5 * tone(t, 220)) + 0.02 * rng.normal();
       }},
      {"vehicles/engine_idle.wav", 48000, F::kFloat32, 2, 20.0, {"engine"}, "vehicle", 0.95, "1",
       [](double t, Rng&) {
         return 0.2 * (tone(t, 80) + 0.6 * tone(t, 160) + 0.3 * tone(t, 240)) *
                (1.0 + 0.2 * tone(t, 12));
       }},
      {"home/typing.wav", 16000, F::kPcm16, 1, 20.0, {"typing"}, "domestic", 0.86, "0",
       [](double t, Rng& rng) {
         const double phase = std::fmod(t, 0.13);
         return phase < 0.01 ? 0.5 * std::exp(-phase * 600.0) * rng.normal() : 0.001 * rng.normal();
       }},
      {"home/air_conditioner.wav", 44100, F::kFloat32, 1, 25.0, {"air_conditioning"}, "domestic", 0.9, "1",
       [](double t, Rng& rng) { return 0.05 * rng.normal() + 0.05 * tone(t, 120); }},
      {"music/piano_notes.wav", 44100, F::kPcm16, 1, 20.0, {"piano"}, "music", 0.93, "0",
       [](double t, Rng&) {
         static const double notes[] = {261.63, 329.63, 392.0, 523.25};
         const int k = static_cast<int>(t / 0.5) % 4;
         const double phase = std::fmod(t, 0.5);
         return 0.35 * std::exp(-4.0 * phase) * (tone(t, notes[k]) + 0.3 * tone(t, 2 * notes[k]));
       }},
      {"street/street_scene.wav", 44100, F::kPcm16, 1, 20.0, {"car", "dog"}, "vehicle", 0.9, "0",
       [](double t, Rng& rng) { return 0.1 * tone(t, 300) + 0.05 * rng.normal(); }},
      {"music/mains_hum.wav", 16000, F::kPcm24, 1, 20.0, {"guitar"}, "music", 0.55, "1",
       [](double t, Rng&) { return 0.2 * tone(t, 60) + 0.05 * tone(t, 180); }},
  };
}

constexpr const char* kTaxonomy =
    "# id\tname\tparent\n"
    "animal\tAnimal\t-\n"
    "dog\tDog\tanimal\n"
    "puppy\tPuppy\tanimal\n"
    "cat\tCat\tanimal\n"
    "bird\tBird\tanimal\n"
    "vehicle\tVehicle\t-\n"
    "car\tCar\tvehicle\n"
    "engine\tEngine\tvehicle\n"
    "domestic\tDomestic sounds\t-\n"
    "typing\tTyping\tdomestic\n"
    "air_conditioning\tAir conditioning\tdomestic\n"
    "music\tMusic\t-\n"
    "piano\tPiano\tmusic\n"
    "guitar\tGuitar\tmusic\n"
    "misc\tMiscellaneous\t-\n"
    "noise\tGeneric noise\tmisc\n";

constexpr const char* kPlan =
    "# kind\ttarget\tsources\n"
    "merge\tdog\tpuppy\n"
    "exclude\t-\tmisc\n";

// Leaves after refinement, in matrix order.
const std::vector<std::string> kLeaves = {"dog",    "cat",    "bird",  "car",
                                          "engine", "typing", "air_conditioning",
                                          "piano",  "guitar"};

bool forbidden(const std::string& a, const std::string& b) {
  auto is = [&](const char* x, const char* y) { return (a == x && b == y) || (a == y && b == x); };
  return is("piano", "engine") || is("bird", "typing") || is("cat", "car");
}

std::string matrix_document() {
  std::string out;
  for (std::size_t i = 0; i < kLeaves.size(); ++i) out += (i ? "\t" : "") + kLeaves[i];
  out += "\n";
  for (const auto& a : kLeaves) {
    for (const auto& b : kLeaves) out += a == b ? '1' : (forbidden(a, b) ? '0' : '1');
    out += "\n";
  }
  return out;
}

std::string trials_csv(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7a1));
  std::string out = "clip_id,target_index,candidate0,candidate1,candidate2,candidate3,rater,choice\n";
  const int raters = 6;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> cands;
    for (int k = 0; k < 4; ++k) cands.push_back(kLeaves[static_cast<std::size_t>(i + 2 * k) % kLeaves.size()]);
    const int target = static_cast<int>(rng.uniform_index(4));
    for (int r = 0; r < raters; ++r) {
      if (i == 13 && r == 5) continue;  // one missing response
      const int choice = rng.uniform01() < 0.8 ? target : static_cast<int>(rng.uniform_index(4));
      out += "clip" + std::to_string(i) + "," + std::to_string(target);
      for (const auto& c : cands) out += "," + c;
      out += ",rater" + std::to_string(r) + "," + std::to_string(choice) + "\n";
    }
  }
  return out;
}

}  // namespace

fs::path write_fixture(const fs::path& root, const FixtureOptions& options) {
  fs::create_directories(root / "corpus");
  std::string metadata;
  std::string tags = "# key\tlabel\tconfidence\n";
  json overrides = json::object();

  for (const auto& src : sources()) {
    Rng rng(mix_seed(options.seed, util::keyed_hash64("fixture", {src.name})));
    AudioBuffer buf;
    buf.sample_rate = src.rate;
    buf.channels = src.channels;
    const auto frames = static_cast<std::size_t>(std::llround(src.seconds * src.rate));
    buf.samples.reserve(frames * static_cast<std::size_t>(src.channels));
    for (std::size_t i = 0; i < frames; ++i) {
      const double t = static_cast<double>(i) / src.rate;
      const double v = src.signal(t, rng);
      for (int ch = 0; ch < src.channels; ++ch) buf.samples.push_back(ch == 0 ? v : 0.8 * v);
    }
    wav::write(root / "corpus" / src.name, buf, src.format);

    metadata += json{{"source_id", src.name}, {"labels", src.labels}}.dump() + "\n";
    tags += std::string(src.name) + "\t" + src.coarse + "\t" + std::to_string(src.confidence) + "\n";
    overrides[src.name] = {{"relabel", {src.leaf_index}}};
  }
  // One window of the piano file holds overlapping events.
  overrides["music/piano_notes.wav@5.000000"] = {{"purification", {"multi"}}};

  const json annotator = {{"key", "fixture"},
                          {"answers",
                           {{"purification", {"single"}},
                            {"relabel", {"-1"}},
                            {"cooccurrence", {"yes", "yes", "no"}}}},
                          {"overrides", overrides}};

  util::write_atomic(root / "taxonomy.tsv", std::string(kTaxonomy));
  util::write_atomic(root / "plan.tsv", std::string(kPlan));
  util::write_atomic(root / "metadata.jsonl", metadata);
  util::write_atomic(root / "coarse_tags.tsv", tags);
  util::write_atomic(root / "annotator.json", annotator.dump(2) + "\n");
  util::write_atomic(root / "matrix.tsv", matrix_document());
  util::write_atomic(root / "trials.csv", trials_csv(options.seed));

  const json config = {
      {"paths",
       {{"corpus_root", "corpus"},
        {"output_root", "out"},
        {"taxonomy", "taxonomy.tsv"},
        {"refinement_plan", "plan.tsv"},
        {"metadata", "metadata.jsonl"},
        {"coarse_tags", "coarse_tags.tsv"},
        {"annotator", "annotator.json"},
        {"matrix", "matrix.tsv"},
        {"trials", "trials.csv"}}},
      {"align", {{"retry_base_delay_ms", 1}}},
      {"mix", {{"splits", {{"train", options.train}, {"val", options.val}, {"test", options.test}}}}},
      {"eval", {{"bootstrap_resamples", 2000}}},
      {"seed", options.seed},
      {"workers", options.workers}};
  const fs::path config_path = root / "config.json";
  util::write_atomic(config_path, config.dump(2) + "\n");
  return config_path;
}

}  // namespace sepforge::fixture
