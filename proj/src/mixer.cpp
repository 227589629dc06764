// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/mixer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <numeric>

#include "sepforge/aligner.hpp"
#include "sepforge/random.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::mixer {
namespace fs = std::filesystem;

CooccurrenceMatrix::CooccurrenceMatrix(std::vector<std::string> labels,
                                       std::vector<std::vector<std::uint8_t>> bits)
    : labels_(std::move(labels)), bits_(std::move(bits)) {
  if (bits_.size() != labels_.size()) {
    throw MixError(MixError::Kind::kMalformedMatrix, "matrix row count differs from label count");
  }
  for (const auto& row : bits_) {
    if (row.size() != labels_.size()) {
      throw MixError(MixError::Kind::kMalformedMatrix, "matrix is not square");
    }
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw MixError(MixError::Kind::kMalformedMatrix,
                     "duplicate matrix label '" + labels_[i] + "'");
    }
  }
}

CooccurrenceMatrix CooccurrenceMatrix::all_ones(std::vector<std::string> labels) {
  const std::size_t n = labels.size();
  return CooccurrenceMatrix(std::move(labels),
                            std::vector<std::vector<std::uint8_t>>(n, std::vector<std::uint8_t>(n, 1)));
}

std::optional<std::size_t> CooccurrenceMatrix::index_of(std::string_view label) const {
  const auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool CooccurrenceMatrix::compatible(std::string_view a, std::string_view b) const {
  const auto i = index_of(a);
  const auto j = index_of(b);
  if (!i || !j || *i == *j) return false;
  return bits_[*i][*j] != 0;
}

MatrixLoad load_matrix(std::string_view document, const ontology::Ontology* ont) {
  std::vector<std::string> rows;
  for (auto& line : util::lines(document)) {
    if (!util::trim(line).empty()) rows.push_back(line);
  }
  if (rows.empty()) throw MixError(MixError::Kind::kMalformedMatrix, "empty matrix document");

  std::vector<std::string> labels;
  for (const auto& field : util::split(rows[0], '\t')) labels.push_back(util::trim(field));
  const std::size_t n = labels.size();
  if (rows.size() != n + 1) {
    throw MixError(MixError::Kind::kMalformedMatrix,
                   "matrix header names " + std::to_string(n) + " labels but " +
                       std::to_string(rows.size() - 1) + " rows follow");
  }
  std::vector<std::vector<std::uint8_t>> bits(n, std::vector<std::uint8_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string row = util::trim(rows[i + 1]);
    if (row.size() != n) {
      throw MixError(MixError::Kind::kMalformedMatrix,
                     "matrix row " + std::to_string(i + 1) + " has " +
                         std::to_string(row.size()) + " entries, expected " + std::to_string(n));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] != '0' && row[j] != '1') {
        throw MixError(MixError::Kind::kMalformedMatrix,
                       "matrix row " + std::to_string(i + 1) + " contains '" +
                           std::string(1, row[j]) + "'");
      }
      bits[i][j] = row[j] == '1' ? 1 : 0;
    }
  }

  MatrixLoad out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (bits[i][j] != bits[j][i]) out.asymmetric.emplace_back(labels[i], labels[j]);
      const std::uint8_t both = bits[i][j] & bits[j][i];
      bits[i][j] = bits[j][i] = both;
    }
  }
  if (ont != nullptr) {
    for (const auto& label : labels) {
      if (!ont->contains(label) || !ont->node(label).is_leaf) {
        throw MixError(MixError::Kind::kUnknownLabel,
                       "matrix label '" + label + "' is not an ontology leaf");
      }
    }
  }
  out.matrix = CooccurrenceMatrix(std::move(labels), std::move(bits));
  return out;
}

std::string serialize_matrix(const CooccurrenceMatrix& matrix) {
  std::string out;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    if (i > 0) out += '\t';
    out += matrix.labels()[i];
  }
  out += '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    for (std::size_t j = 0; j < matrix.size(); ++j) out += matrix.bit(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

CooccurrenceMatrix build_matrix(const std::vector<std::string>& labels,
                                aligner::Annotator& judge,
                                const aligner::PromptTemplates& templates,
                                const JudgeOptions& options) {
  const std::size_t n = labels.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<std::uint8_t> verdict(pairs.size(), 0);
  util::parallel_for(pairs.size(), options.workers, [&](std::size_t p) {
    const auto& a = labels[pairs[p].first];
    const auto& b = labels[pairs[p].second];
    aligner::AnnotatorRequest req;
    req.subject = a + "|" + b;
    req.template_id = options.template_id;
    req.prompt = templates.render(options.template_id, {{"label_a", a}, {"label_b", b}});
    req.temperature = options.temperature;
    aligner::VoteTally tally;
    for (int pass = 0; pass < options.passes; ++pass) {
      req.pass_index = pass;
      const auto answer = aligner::normalize_answer(complete_with_retry(judge, req, options.retry));
      if (answer == options.yes_token || answer == options.no_token) {
        tally.add(answer);
      } else {
        tally.add(aligner::kInvalidAnswer);
      }
    }
    const auto winner = aligner::majority_vote(tally);
    verdict[p] = winner && *winner == options.yes_token ? 1 : 0;
  });
  std::vector<std::vector<std::uint8_t>> bits(n, std::vector<std::uint8_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) bits[i][i] = 1;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    bits[pairs[p].first][pairs[p].second] = verdict[p];
    bits[pairs[p].second][pairs[p].first] = verdict[p];
  }
  return CooccurrenceMatrix(labels, std::move(bits));
}

nlohmann::json to_json(const Clip& clip) {
  nlohmann::json j = {{"clip_id", clip.clip_id},
                      {"label", clip.label},
                      {"path", clip.path},
                      {"duration_s", clip.duration_s}};
  if (!clip.split.empty()) j["split"] = clip.split;
  return j;
}

Clip clip_from_json(const nlohmann::json& j) {
  Clip c;
  c.clip_id = j.at("clip_id").get<std::string>();
  c.label = j.at("label").get<std::string>();
  c.path = j.at("path").get<std::string>();
  c.duration_s = j.at("duration_s").get<double>();
  if (j.contains("split")) c.split = j["split"].get<std::string>();
  return c;
}

std::vector<Clip> parse_pool_listing(std::string_view text) {
  std::vector<Clip> clips;
  std::size_t lineno = 0;
  for (const auto& line : util::lines(text)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      clips.push_back(clip_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("pool listing line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return clips;
}

std::string to_jsonl(const std::vector<Clip>& clips) {
  std::string out;
  for (const auto& c : clips) out += to_json(c).dump() + "\n";
  return out;
}

Pool::Pool(const std::vector<Clip>& clips) {
  for (const auto& c : clips) by_label_[c.label].push_back(c);
}

std::size_t Pool::clip_count() const {
  std::size_t n = 0;
  for (const auto& [label, clips] : by_label_) n += clips.size();
  return n;
}

namespace {

std::size_t to_frames(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kSampleRate));
}

}  // namespace

Pool Pool::filtered(std::string_view split, double min_duration_s,
                    const CooccurrenceMatrix& matrix) const {
  Pool out;
  const std::size_t need = to_frames(min_duration_s);
  for (const auto& [label, clips] : by_label_) {
    if (!matrix.contains(label)) continue;
    std::vector<Clip> keep;
    for (const auto& c : clips) {
      if ((c.split.empty() || c.split == split) && to_frames(c.duration_s) >= need) {
        keep.push_back(c);
      }
    }
    if (!keep.empty()) out.by_label_.emplace(label, std::move(keep));
  }
  return out;
}

void validate(const SamplingOptions& options) {
  if (options.count_weights.size() != kMaxSources - kMinSources + 1) {
    throw std::invalid_argument("count_weights needs one weight per source count 2..5");
  }
  double sum = 0.0;
  for (double w : options.count_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("count_weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("count_weights must sum to 1");
  if (!(options.snr_min_db <= options.snr_max_db)) {
    throw std::invalid_argument("snr range is inverted");
  }
  if (options.max_attempts < 1) throw std::invalid_argument("max_attempts must be positive");
}

MixRecipe sample_recipe(const Pool& pool, const CooccurrenceMatrix& matrix,
                        const SamplingOptions& options, std::string split,
                        double duration_s, std::uint64_t seed, std::string mixture_id) {
  validate(options);
  Rng rng(seed);
  const int count = kMinSources + static_cast<int>(rng.categorical(options.count_weights));

  std::vector<const std::string*> labels;
  for (const auto& [label, clips] : pool.by_label()) {
    if (!clips.empty() && matrix.contains(label)) labels.push_back(&label);
  }
  const auto c = static_cast<std::size_t>(count);
  bool found = false;
  if (labels.size() >= c) {
    for (int attempt = 0; attempt < options.max_attempts && !found; ++attempt) {
      // Partial Fisher-Yates: the first c entries become a uniform ordered draw.
      for (std::size_t k = 0; k < c; ++k) {
        const auto pick = k + rng.uniform_index(labels.size() - k);
        std::swap(labels[k], labels[pick]);
      }
      found = true;
      for (std::size_t a = 0; a < c && found; ++a) {
        for (std::size_t b = a + 1; b < c && found; ++b) {
          found = matrix.compatible(*labels[a], *labels[b]);
        }
      }
    }
  }
  if (!found) {
    throw MixError(MixError::Kind::kAttemptBudget,
                   "C=" + std::to_string(count) + ": no pairwise-compatible set of " +
                       std::to_string(count) + " labels found in " + std::to_string(options.max_attempts) +
                       " attempts (" + std::to_string(labels.size()) + " labels available)",
                   count);
  }

  MixRecipe recipe;
  recipe.mixture_id = std::move(mixture_id);
  recipe.split = std::move(split);
  recipe.duration_s = duration_s;
  recipe.seed = seed;
  const std::size_t need = to_frames(duration_s);
  for (std::size_t k = 0; k < c; ++k) {
    const auto& clips = pool.by_label().at(*labels[k]);
    Component comp;
    comp.clip = clips[rng.uniform_index(clips.size())];
    if (k > 0) comp.snr_db = rng.uniform(options.snr_min_db, options.snr_max_db);
    const std::size_t have = to_frames(comp.clip.duration_s);
    if (have < need) {
      throw MixError(MixError::Kind::kClipTooShort,
                     "clip '" + comp.clip.clip_id + "' is shorter than " +
                         std::to_string(duration_s) + " s");
    }
    comp.crop_offset_s = static_cast<double>(rng.uniform_index(have - need + 1)) / kSampleRate;
    recipe.components.push_back(std::move(comp));
  }
  return recipe;
}

double split_duration_s(std::string_view split) {
  if (split == "train" || split == "val") return 4.0;
  if (split == "test") return 10.0;
  throw std::invalid_argument("unknown split '" + std::string(split) + "'");
}

std::vector<MixRecipe> sample_split(const Pool& pool, const CooccurrenceMatrix& matrix,
                                    const SamplingOptions& options,
                                    const std::string& split, std::size_t count,
                                    std::uint64_t seed) {
  const double duration = split_duration_s(split);
  const Pool usable = pool.filtered(split, duration, matrix);
  Rng stream(mix_seed(seed, util::keyed_hash64("split", {split})));
  std::vector<MixRecipe> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%07zu", split.c_str(), i);
    out.push_back(sample_recipe(usable, matrix, options, split, duration, stream.next_u64(), id));
  }
  return out;
}

AudioBuffer normalize_rms(const AudioBuffer& buffer, double target) {
  if (buffer.samples.empty()) {
    throw MixError(MixError::Kind::kSilentBuffer, "cannot normalize an empty buffer");
  }
  const double r = rms(buffer.samples);
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw MixError(MixError::Kind::kSilentBuffer,
                   "cannot normalize silent buffer '" + buffer.source_id + "'");
  }
  AudioBuffer out = buffer;
  const double scale = target / r;
  for (double& s : out.samples) s *= scale;
  return out;
}

ClipLoader file_clip_loader(fs::path base_dir) {
  return [base = std::move(base_dir)](const Clip& clip) {
    AudioBuffer audio = wav::read(base / clip.path, clip.clip_id);
    if (audio.sample_rate != kSampleRate || audio.channels != 1) {
      throw MixError(MixError::Kind::kBadClip,
                     "clip '" + clip.clip_id + "' is not mono " + std::to_string(kSampleRate) +
                         " Hz");
    }
    return audio;
  };
}

RenderedStems render_stems(const MixRecipe& recipe, const ClipLoader& loader,
                           const SynthesisOptions& options) {
  const std::size_t c = recipe.components.size();
  if (c < kMinSources || c > kMaxSources) {
    throw MixError(MixError::Kind::kBadRecipe,
                   "recipe '" + recipe.mixture_id + "' has " + std::to_string(c) + " components");
  }
  const std::size_t need = to_frames(recipe.duration_s);
  if (need == 0) throw MixError(MixError::Kind::kBadRecipe, "recipe duration is zero");

  RenderedStems out;
  out.recipe = recipe;
  for (std::size_t k = 0; k < c; ++k) {
    auto& comp = out.recipe.components[k];
    const AudioBuffer clip = loader(comp.clip);
    if (clip.frames() < need) {
      throw MixError(MixError::Kind::kClipTooShort,
                     "clip '" + comp.clip.clip_id + "' has " + std::to_string(clip.frames()) +
                         " frames, need " + std::to_string(need));
    }
    const std::size_t max_offset = clip.frames() - need;
    auto offset = static_cast<std::size_t>(std::llround(comp.crop_offset_s * kSampleRate));
    if (offset > max_offset) {
      throw MixError(MixError::Kind::kClipTooShort,
                     "crop offset runs past the end of clip '" + comp.clip.clip_id + "'");
    }

    AudioBuffer crop;
    crop.sample_rate = kSampleRate;
    crop.source_id = comp.clip.clip_id;
    auto take = [&](std::size_t at) {
      crop.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(at),
                          clip.samples.begin() + static_cast<std::ptrdiff_t>(at + need));
    };
    take(offset);
    int attempt = 0;
    while (rms(crop.samples) < options.silence_rms) {
      if (attempt >= options.crop_redraws) {
        throw MixError(MixError::Kind::kSilentBuffer,
                       "clip '" + comp.clip.clip_id + "' gave a silent crop after " +
                           std::to_string(options.crop_redraws) + " re-draws");
      }
      ++attempt;
      Rng redraw(mix_seed(mix_seed(recipe.seed, k + 1), static_cast<std::uint64_t>(attempt)));
      offset = redraw.uniform_index(max_offset + 1);
      take(offset);
    }
    comp.crop_offset_s = static_cast<double>(offset) / kSampleRate;

    AudioBuffer stem = normalize_rms(crop, options.rms_target);
    const double gain = k == 0 ? 1.0 : snr_gain(comp.snr_db);
    for (double& s : stem.samples) s *= gain;
    out.stems.push_back(std::move(stem));
  }
  return out;
}

Synthesis synthesize_mixture(const MixRecipe& recipe, const ClipLoader& loader,
                             const SynthesisOptions& options) {
  RenderedStems rendered = render_stems(recipe, loader, options);
  const std::size_t n = rendered.stems.front().samples.size();

  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& stem : rendered.stems) acc += stem.samples[i];
    peak = std::max(peak, std::abs(acc));
  }
  Synthesis out;
  out.peak_scale = peak > kPeakLimit ? kPeakLimit / peak : 1.0;
  out.recipe = std::move(rendered.recipe);
  for (auto& stem : rendered.stems) {
    for (double& s : stem.samples) s = static_cast<float>(s * out.peak_scale);
    out.stems.push_back(std::move(stem));
  }
  out.mixture.sample_rate = kSampleRate;
  out.mixture.source_id = recipe.mixture_id;
  out.mixture.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& stem : out.stems) acc += stem.samples[i];
    out.mixture.samples[i] = static_cast<float>(acc);
  }
  return out;
}

namespace {

nlohmann::json recipe_json(const MixRecipe& r) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t k = 0; k < r.components.size(); ++k) {
    const auto& c = r.components[k];
    nlohmann::json jc = to_json(c.clip);
    jc["snr_db"] = c.snr_db;
    jc["gain"] = k == 0 ? 1.0 : snr_gain(c.snr_db);
    jc["crop_offset_s"] = c.crop_offset_s;
    comps.push_back(std::move(jc));
  }
  return {{"mixture_id", r.mixture_id},
          {"split", r.split},
          {"duration_s", r.duration_s},
          {"seed", r.seed},
          {"sample_rate", kSampleRate},
          {"components", std::move(comps)}};
}

MixRecipe recipe_from_json(const nlohmann::json& j) {
  MixRecipe r;
  r.mixture_id = j.at("mixture_id").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.duration_s = j.at("duration_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jc : j.at("components")) {
    Component c;
    c.clip = clip_from_json(jc);
    c.snr_db = jc.at("snr_db").get<double>();
    c.crop_offset_s = jc.at("crop_offset_s").get<double>();
    r.components.push_back(std::move(c));
  }
  return r;
}

}  // namespace

nlohmann::json to_json(const ManifestEntry& entry) {
  nlohmann::json j = recipe_json(entry.recipe);
  j["peak_scale"] = entry.peak_scale;
  j["mixture_path"] = entry.mixture_path;
  j["stem_paths"] = entry.stem_paths;
  return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.recipe = recipe_from_json(j);
  e.peak_scale = j.at("peak_scale").get<double>();
  e.mixture_path = j.at("mixture_path").get<std::string>();
  e.stem_paths = j.at("stem_paths").get<std::vector<std::string>>();
  if (e.stem_paths.size() != e.recipe.components.size()) {
    throw MixError(MixError::Kind::kBadRecipe,
                   "entry '" + e.recipe.mixture_id + "' lists the wrong number of stems");
  }
  return e;
}

std::string manifest_line(const ManifestEntry& entry) { return to_json(entry).dump(); }

Synthesis replay(const ManifestEntry& entry, const ClipLoader& loader,
                 const SynthesisOptions& options) {
  SynthesisOptions exact = options;
  exact.crop_redraws = 0;
  return synthesize_mixture(entry.recipe, loader, exact);
}

EmitReport emit_dataset(const std::vector<MixRecipe>& recipes, const ClipLoader& loader,
                        const fs::path& output_root, const EmitOptions& options) {
  const std::size_t todo =
      options.stop_after ? std::min(*options.stop_after, recipes.size()) : recipes.size();
  std::vector<std::optional<ManifestEntry>> entries(todo);
  std::vector<std::optional<std::string>> errors(todo);
  std::atomic<std::size_t> reused{0};

  util::parallel_for(todo, options.workers, [&](std::size_t i) {
    const MixRecipe& recipe = recipes[i];
    const std::string rel_dir = recipe.split + "/" + recipe.mixture_id;
    const fs::path dir = output_root / rel_dir;
    const fs::path checkpoint = dir / "entry.json";
    const std::string request = util::sha256_hex(recipe_json(recipe).dump());

    if (fs::exists(checkpoint)) {
      try {
        const auto j = nlohmann::json::parse(util::read_text(checkpoint));
        if (j.at("request").get<std::string>() == request) {
          ManifestEntry e = entry_from_json(j.at("entry"));
          bool files = fs::exists(output_root / e.mixture_path);
          for (const auto& p : e.stem_paths) files = files && fs::exists(output_root / p);
          if (files) {
            entries[i] = std::move(e);
            ++reused;
            return;
          }
        }
      } catch (const std::exception&) {
        // Unreadable checkpoint: fall through and rebuild the mixture.
      }
    }

    Synthesis synth;
    try {
      synth = synthesize_mixture(recipe, loader, options.synthesis);
    } catch (const MixError& e) {
      errors[i] = e.what();
      return;
    }
    ManifestEntry entry;
    entry.recipe = synth.recipe;
    entry.peak_scale = synth.peak_scale;
    entry.mixture_path = rel_dir + "/mix.wav";
    for (std::size_t k = 0; k < synth.stems.size(); ++k) {
      entry.stem_paths.push_back(rel_dir + "/s" + std::to_string(k + 1) + ".wav");
      wav::write(output_root / entry.stem_paths.back(), synth.stems[k]);
    }
    wav::write(output_root / entry.mixture_path, synth.mixture);
    const nlohmann::json cp = {{"request", request}, {"entry", to_json(entry)}};
    util::write_atomic(checkpoint, cp.dump() + "\n");
    entries[i] = std::move(entry);
  });

  EmitReport report;
  report.reused = reused.load();
  for (std::size_t i = 0; i < todo; ++i) {
    if (entries[i]) report.entries.push_back(std::move(*entries[i]));
    if (errors[i]) report.failures.push_back({recipes[i].mixture_id, *errors[i]});
  }
  if (todo < recipes.size()) return report;

  std::string manifest;
  for (const auto& e : report.entries) manifest += manifest_line(e) + "\n";
  util::write_atomic(output_root / "manifest.jsonl", manifest);
  report.complete = true;
  return report;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::vector<ManifestEntry> out;
  std::size_t lineno = 0;
  for (const auto& line : util::lines(util::read_text(path))) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return out;
}

}  // namespace sepforge::mixer
