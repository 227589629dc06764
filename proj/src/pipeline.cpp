// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <set>

#include "sepforge/aligner.hpp"
#include "sepforge/annotator.hpp"
#include "sepforge/evalkit/dataset_stats.hpp"
#include "sepforge/evalkit/metrics.hpp"
#include "sepforge/evalkit/stats.hpp"
#include "sepforge/mixer.hpp"
#include "sepforge/ontology.hpp"
#include "sepforge/segmenter.hpp"
#include "sepforge/standardizer.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::pipeline {
namespace {

using nlohmann::json;

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration:";
  for (const auto& p : problems) out += "\n  - " + p;
  return out;
}

// Reads one config section, recording type errors and unknown keys.
class Section {
 public:
  Section(const json& j, std::string name, const fs::path& base,
          std::vector<std::string>& problems)
      : j_(j), name_(std::move(name)), base_(base), problems_(problems) {
    if (!j_.is_object()) problems_.push_back(label("") + "must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(label(key) + "has the wrong type");
    }
  }

  void path(const char* key, fs::path& out) {
    std::string s;
    const bool had = j_.is_object() && j_.contains(key);
    get(key, s);
    if (had && !s.empty()) out = fs::path(s).is_absolute() ? fs::path(s) : base_ / s;
  }

  const json* sub(const char* key) {
    known_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.contains(key)) problems_.push_back(label(key) + "is not a known setting");
    }
  }

 private:
  std::string label(const std::string& key) const {
    std::string l = name_.empty() ? key : (key.empty() ? name_ : name_ + "." + key);
    return l.empty() ? "" : l + " ";
  }

  const json& j_;
  std::string name_;
  fs::path base_;
  std::vector<std::string>& problems_;
  std::set<std::string> known_;
};

fs::path stamp_path(const fs::path& dir) { return dir / ".stamp"; }

bool stamp_matches(const fs::path& dir, const std::string& fp,
                   const std::vector<fs::path>& outputs) {
  if (!fs::exists(stamp_path(dir))) return false;
  if (util::trim(util::read_text(stamp_path(dir))) != fp) return false;
  return std::all_of(outputs.begin(), outputs.end(),
                     [](const fs::path& p) { return fs::exists(p); });
}

void write_stamp(const fs::path& dir, const std::string& fp) {
  util::write_atomic(stamp_path(dir), fp + "\n");
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) {
    throw PrerequisiteError(what + " is not configured", path);
  }
  if (!fs::exists(path)) {
    throw PrerequisiteError(what + " not found: " + path.string(), path);
  }
}

void require_output(const fs::path& path, Stage producer) {
  if (!fs::exists(path)) {
    throw PrerequisiteError("missing " + path.string() + "; run `sepforge " +
                                std::string(to_string(producer)) + "` first",
                            path);
  }
}

unsigned workers_of(const PipelineConfig& c) {
  return c.workers == 0 ? util::default_workers() : c.workers;
}

// Counts finished units for the interrupt hook.
class Progress {
 public:
  explicit Progress(const RunOptions& options, Stage stage)
      : limit_(options.stop_after), stage_(stage) {}
  std::size_t budget(std::size_t n) const { return limit_ ? std::min(*limit_, n) : n; }
  void check_items(std::size_t done, std::size_t total) const {
    if (limit_ && done < total) interrupt();
  }
  void wrote() {
    ++written_;
    if (limit_ && written_ >= *limit_) interrupt();
  }

 private:
  [[noreturn]] void interrupt() const {
    throw Interrupted(std::string(to_string(stage_)) + " interrupted by stop_after hook");
  }
  std::optional<std::size_t> limit_;
  Stage stage_;
  std::size_t written_ = 0;
};

// Per-item checkpoints live in `dir` and are only trusted when resuming with
// an unchanged fingerprint.
void prepare_partial(const fs::path& dir, const std::string& fp, bool resume,
                     const std::vector<fs::path>& also_clear = {}) {
  const fs::path marker = dir / ".fingerprint";
  const bool keep = resume && fs::exists(marker) && util::trim(util::read_text(marker)) == fp;
  if (!keep) {
    fs::remove_all(dir);
    for (const auto& p : also_clear) fs::remove_all(p);
  }
  fs::create_directories(dir);
  if (!keep) util::write_atomic(marker, fp + "\n");
}

std::string clip_name(const std::string& key) {
  return util::sanitize_for_path(key) + "-" + util::sha256_hex(key).substr(0, 8);
}

void warn(const RunOptions& options, StageOutcome& outcome, const std::string& message) {
  outcome.warnings.push_back(message);
  if (options.log) *options.log << "warning: " << message << "\n";
}

std::string getenv_string(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::string annotator_url(const PipelineConfig& c) {
  const auto env = getenv_string("SEPFORGE_ANNOTATOR_URL");
  return env.empty() ? c.annotator_url : env;
}

std::string extender_url(const PipelineConfig& c) {
  const auto env = getenv_string("SEPFORGE_EXTENDER_URL");
  return env.empty() ? c.extender_url : env;
}

struct AnnotatorHandle {
  std::unique_ptr<aligner::Annotator> owned;
  aligner::Annotator* client = nullptr;
  std::string identity;  // part of the stage fingerprint
};

AnnotatorHandle make_annotator(const PipelineConfig& c, const RunOptions& options) {
  AnnotatorHandle h;
  if (options.annotator != nullptr) {
    h.client = options.annotator;
    h.identity = "injected";
    return h;
  }
  const auto url = annotator_url(c);
  if (!url.empty()) {
    aligner::HttpAnnotatorOptions o;
    o.url = url;
    o.max_in_flight = c.max_in_flight;
    o.audio = c.audio_transfer == "path" ? aligner::AudioTransfer::kPath
                                         : aligner::AudioTransfer::kInline;
    h.owned = std::make_unique<aligner::HttpAnnotator>(o);
    h.identity = "http:" + url;
  } else {
    require_file(c.annotator, "annotator config (paths.annotator or SEPFORGE_ANNOTATOR_URL)");
    const auto text = util::read_text(c.annotator);
    h.owned.reset(new aligner::MockAnnotator(aligner::MockAnnotator::from_json(json::parse(text))));
    h.identity = "offline:" + util::sha256_hex(text);
  }
  h.client = h.owned.get();
  return h;
}


// Built-in templates overlaid with every *.txt in the configured directory.
aligner::PromptTemplates load_templates(const PipelineConfig& c, util::Fingerprint& fp) {
  auto templates = aligner::default_templates();
  if (c.prompts.empty()) {
    fp.add("default-templates");
    return templates;
  }
  if (!fs::is_directory(c.prompts)) {
    throw PrerequisiteError("prompt template directory not found: " + c.prompts.string(),
                            c.prompts);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(c.prompts)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto text = util::trim(util::read_text(f));
    fp.add(f.stem().string()).add(text);
    templates.set(f.stem().string(), text);
  }
  return templates;
}

RetryPolicy retry_policy(const PipelineConfig& c) {
  RetryPolicy r;
  r.attempts = c.retry_attempts;
  r.base_delay = std::chrono::milliseconds(c.retry_base_delay_ms);
  return r;
}

ontology::Ontology load_refined(const PipelineConfig& c) {
  const fs::path p = stage_dir(c, Stage::kOntology) / "ontology.tsv";
  require_output(p, Stage::kOntology);
  return ontology::load_ontology(util::read_text(p));
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

// ---------------------------------------------------------------- ontology

StageOutcome run_ontology(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  require_file(c.taxonomy, "taxonomy (paths.taxonomy)");
  if (!c.refinement_plan.empty()) require_file(c.refinement_plan, "refinement plan");
  const fs::path dir = stage_dir(c, Stage::kOntology);
  util::Fingerprint fp;
  fp.add("ontology").add_file(c.taxonomy);
  if (!c.refinement_plan.empty()) fp.add("plan").add_file(c.refinement_plan);
  const auto stamp = fp.hex();
  const std::vector<fs::path> outputs = {dir / "ontology.tsv", dir / "aliases.tsv",
                                         dir / "leaves.txt"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  const auto base = ontology::load_ontology(util::read_text(c.taxonomy));
  std::vector<ontology::RefinementRule> plan;
  if (!c.refinement_plan.empty()) plan = ontology::parse_plan(util::read_text(c.refinement_plan));
  const auto refined = ontology::apply_refinements(base, plan);
  const auto leaves = ontology::leaf_labels(refined);
  std::string leaf_text;
  for (const auto& l : leaves) leaf_text += l + "\n";

  Progress progress(options, Stage::kOntology);
  util::write_atomic(outputs[0], refined.serialize());
  progress.wrote();
  util::write_atomic(outputs[1], refined.serialize_aliases());
  progress.wrote();
  util::write_atomic(outputs[2], leaf_text);
  progress.wrote();
  write_stamp(dir, stamp);
  outcome.summary = {{"nodes", base.size()},
                     {"rules", plan.size()},
                     {"refined_nodes", refined.size()},
                     {"leaves", leaves.size()},
                     {"aliases", refined.alias_map().size()}};
  return outcome;
}

// ---------------------------------------------------------------- segment

StageOutcome run_segment(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  if (c.corpus_root.empty() || !fs::is_directory(c.corpus_root)) {
    throw PrerequisiteError("corpus root is not a directory: " + c.corpus_root.string(),
                            c.corpus_root);
  }
  const fs::path dir = stage_dir(c, Stage::kSegment);
  const auto files = segmenter::list_corpus(c.corpus_root);
  util::Fingerprint fp;
  fp.add("segment").add(json{{"window_s", c.window_s}, {"hop_s", c.hop_s}, {"rms_gate", c.rms_gate}}.dump());
  for (const auto& f : files) fp.add(f).add_file(c.corpus_root / f);
  const auto stamp = fp.hex();
  const std::vector<fs::path> outputs = {dir / "segments.jsonl", dir / "summary.json"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  segmenter::CorpusOptions opts;
  opts.window_s = c.window_s;
  opts.hop_s = c.hop_s;
  opts.rms_gate = c.rms_gate;
  opts.workers = workers_of(c);
  const auto result = segmenter::segment_corpus(c.corpus_root, opts);
  outcome.summary = {{"files", result.files},
                     {"kept", result.kept.size()},
                     {"discarded", result.discarded}};

  Progress progress(options, Stage::kSegment);
  util::write_atomic(outputs[0], segmenter::to_jsonl(result.kept));
  progress.wrote();
  util::write_atomic(outputs[1], outcome.summary.dump(2) + "\n");
  progress.wrote();
  write_stamp(dir, stamp);
  return outcome;
}

// ---------------------------------------------------------------- align

StageOutcome run_align(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  const fs::path segments_path = stage_dir(c, Stage::kSegment) / "segments.jsonl";
  require_output(segments_path, Stage::kSegment);
  const auto ont = load_refined(c);
  require_file(c.metadata, "corpus metadata (paths.metadata)");
  require_file(c.coarse_tags, "coarse tag table (paths.coarse_tags)");
  auto annotator = make_annotator(c, options);

  util::Fingerprint fp;
  fp.add("align")
      .add(json{{"passes", c.passes},
                {"temperature", c.temperature},
                {"coarse_confidence", c.coarse_confidence}}
               .dump())
      .add(annotator.identity)
      .add_file(segments_path)
      .add_file(stage_dir(c, Stage::kOntology) / "ontology.tsv")
      .add_file(c.metadata)
      .add_file(c.coarse_tags);
  const auto templates = load_templates(c, fp);
  const auto stamp = fp.hex();
  const fs::path dir = stage_dir(c, Stage::kAlign);
  const std::vector<fs::path> outputs = {dir / "alignment.jsonl", dir / "accepted.jsonl",
                                         dir / "summary.json"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  const auto segments = segmenter::parse_jsonl(util::read_text(segments_path));
  const auto metadata = aligner::parse_metadata(util::read_text(c.metadata));
  auto tagger = aligner::TableCoarseTagger::parse(util::read_text(c.coarse_tags));
  aligner::AlignerOptions aopts;
  aopts.passes = c.passes;
  aopts.temperature = c.temperature;
  aopts.coarse_threshold = c.coarse_confidence;
  aopts.retry = retry_policy(c);

  const fs::path partial = dir / "partial";
  prepare_partial(partial, stamp, options.resume);
  Progress progress(options, Stage::kAlign);
  const std::size_t todo = progress.budget(segments.size());
  std::vector<aligner::AlignmentResult> results(todo);
  const bool wants_audio = annotator.client->needs_audio();

  util::parallel_for(todo, workers_of(c), [&](std::size_t i) {
    const auto& seg = segments[i];
    const fs::path cp = partial / (clip_name(seg.key()) + ".json");
    if (fs::exists(cp)) {
      results[i] = aligner::alignment_from_json(json::parse(util::read_text(cp)));
      return;
    }
    std::optional<AudioBuffer> audio;
    aligner::AudioProvider provider;
    if (wants_audio) {
      provider = [&]() -> const AudioBuffer& {
        if (!audio) audio = segmenter::load_segment(c.corpus_root, seg);
        return *audio;
      };
    }
    const aligner::StageContext ctx{*annotator.client, templates, aopts, provider,
                                    (c.corpus_root / seg.source_id).string()};
    static const std::vector<std::string> kNoLabels;
    const auto it = metadata.find(seg.source_id);
    results[i] = aligner::align_segment(seg, it == metadata.end() ? kNoLabels : it->second,
                                        ont, tagger, ctx);
    if (results[i].status != aligner::AlignmentStatus::kTransientError) {
      util::write_atomic(cp, aligner::to_json(results[i]).dump() + "\n");
    }
  });
  progress.check_items(todo, segments.size());

  std::vector<json> all;
  std::vector<json> accepted;
  std::map<std::string, int> counts;
  for (const auto& r : results) {
    all.push_back(aligner::to_json(r));
    if (r.status == aligner::AlignmentStatus::kAccepted) accepted.push_back(all.back());
    ++counts[std::string(aligner::to_string(r.status))];
  }
  const int transient = counts.contains("transient_error") ? counts["transient_error"] : 0;
  outcome.summary = {{"segments", results.size()},
                     {"accepted", accepted.size()},
                     {"status_counts", counts},
                     {"transient_errors", transient}};
  util::write_atomic(outputs[0], jsonl(all));
  util::write_atomic(outputs[1], jsonl(accepted));
  util::write_atomic(outputs[2], outcome.summary.dump(2) + "\n");
  if (transient > 0) {
    warn(options, outcome,
         std::to_string(transient) +
             " segments hit annotator transport failures; rerun with --resume to retry them");
    return outcome;
  }
  fs::remove_all(partial);
  write_stamp(dir, stamp);
  return outcome;
}

// ---------------------------------------------------------------- standardize

StageOutcome run_standardize(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  const fs::path accepted_path = stage_dir(c, Stage::kAlign) / "accepted.jsonl";
  require_output(accepted_path, Stage::kAlign);
  const fs::path dir = stage_dir(c, Stage::kStandardize);

  std::vector<aligner::AlignmentResult> accepted;
  std::set<std::string> sources;
  for (const auto& line : util::lines(util::read_text(accepted_path))) {
    if (util::trim(line).empty()) continue;
    accepted.push_back(aligner::alignment_from_json(json::parse(line)));
    sources.insert(accepted.back().segment.source_id);
  }

  std::unique_ptr<standardizer::BandwidthExtender> owned;
  standardizer::BandwidthExtender* extender = options.extender;
  std::string identity = extender ? "injected" : "none";
  if (extender == nullptr) {
    const auto url = extender_url(c);
    if (!url.empty()) {
      owned = std::make_unique<standardizer::HttpBandwidthExtender>(url);
      extender = owned.get();
      identity = "http:" + url;
    }
  }

  util::Fingerprint fp;
  fp.add("standardize").add(std::to_string(c.target_rate)).add(identity).add_file(accepted_path);
  for (const auto& s : sources) fp.add(s).add_file(c.corpus_root / s);
  const auto stamp = fp.hex();
  const std::vector<fs::path> outputs = {dir / "pool.jsonl", dir / "provenance.jsonl"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  const fs::path partial = dir / "partial";
  const fs::path clips = dir / "clips";
  prepare_partial(partial, stamp, options.resume, {clips});
  fs::create_directories(clips);
  Progress progress(options, Stage::kStandardize);
  const std::size_t todo = progress.budget(accepted.size());
  std::vector<json> records(todo);

  util::parallel_for(todo, workers_of(c), [&](std::size_t i) {
    const auto& r = accepted[i];
    const std::string name = clip_name(r.segment.key());
    const fs::path cp = partial / (name + ".json");
    const fs::path wav_path = clips / (name + ".wav");
    if (fs::exists(cp) && fs::exists(wav_path)) {
      records[i] = json::parse(util::read_text(cp));
      return;
    }
    const auto mono = segmenter::load_segment(c.corpus_root, r.segment);
    const auto out = standardizer::standardize(mono, extender, c.target_rate);
    wav::write(wav_path, out.audio);
    json rec = {{"clip_id", r.segment.key()},
                {"label", r.leaf_label.value_or("")},
                {"path", "clips/" + name + ".wav"},
                {"duration_s", out.audio.duration_s()},
                {"input_rate", out.route.input_rate},
                {"decision", standardizer::to_string(out.route.decision)},
                {"extended", out.extended}};
    if (out.warning) rec["warning"] = *out.warning;
    util::write_atomic(cp, rec.dump() + "\n");
    records[i] = std::move(rec);
  });
  progress.check_items(todo, accepted.size());

  std::vector<json> pool;
  std::map<std::string, int> decisions;
  int fallbacks = 0;
  for (const auto& rec : records) {
    pool.push_back({{"clip_id", rec["clip_id"]},
                    {"label", rec["label"]},
                    {"path", rec["path"]},
                    {"duration_s", rec["duration_s"]}});
    ++decisions[rec["decision"].get<std::string>()];
    if (rec.contains("warning")) {
      ++fallbacks;
      warn(options, outcome, rec["clip_id"].get<std::string>() + ": " + rec["warning"].get<std::string>());
    }
  }
  util::write_atomic(outputs[0], jsonl(pool));
  util::write_atomic(outputs[1], jsonl(records));
  fs::remove_all(partial);
  write_stamp(dir, stamp);
  outcome.summary = {{"clips", records.size()},
                     {"decisions", decisions},
                     {"extension_fallbacks", fallbacks}};
  return outcome;
}

// ---------------------------------------------------------------- mix

fs::path pool_path(const PipelineConfig& c) {
  return c.pool.empty() ? stage_dir(c, Stage::kStandardize) / "pool.jsonl" : c.pool;
}

StageOutcome run_mix(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  const fs::path pool_file = pool_path(c);
  if (!fs::exists(pool_file)) {
    throw PrerequisiteError("pool listing not found: " + pool_file.string() +
                                (c.pool.empty() ? "; run `sepforge standardize` first" : ""),
                            pool_file);
  }
  if (c.matrix.empty() && !c.build_matrix) {
    throw PrerequisiteError(
        "co-occurrence matrix is not configured (paths.matrix, or mix.build_matrix)", c.matrix);
  }
  if (!c.matrix.empty()) require_file(c.matrix, "co-occurrence matrix");

  const fs::path dir = stage_dir(c, Stage::kMix);
  const fs::path pool_dir = pool_file.parent_path();
  const auto clips = mixer::parse_pool_listing(util::read_text(pool_file));
  std::optional<ontology::Ontology> ont;
  const fs::path ont_path = stage_dir(c, Stage::kOntology) / "ontology.tsv";
  if (fs::exists(ont_path)) ont = ontology::load_ontology(util::read_text(ont_path));

  mixer::SamplingOptions sopts;
  sopts.count_weights = c.count_weights;
  sopts.snr_min_db = c.snr_min_db;
  sopts.snr_max_db = c.snr_max_db;
  sopts.max_attempts = c.max_attempts;
  mixer::SynthesisOptions synth;
  synth.rms_target = c.rms_target;
  synth.crop_redraws = c.crop_redraws;
  synth.silence_rms = c.silence_rms;

  util::Fingerprint fp;
  fp.add("mix")
      .add(json{{"count_weights", c.count_weights},
                {"snr", {c.snr_min_db, c.snr_max_db}},
                {"rms_target", c.rms_target},
                {"splits", c.split_sizes},
                {"max_attempts", c.max_attempts},
                {"crop_redraws", c.crop_redraws},
                {"silence_rms", c.silence_rms},
                {"seed", c.seed}}
               .dump())
      .add_file(pool_file);
  std::set<std::string> clip_files;
  for (const auto& clip : clips) clip_files.insert(clip.path);
  for (const auto& f : clip_files) fp.add(f).add_file(pool_dir / f);
  std::optional<AnnotatorHandle> judge;
  if (!c.matrix.empty()) {
    fp.add("matrix").add_file(c.matrix);
  } else {
    judge = make_annotator(c, options);
    fp.add("judged").add(judge->identity).add(std::to_string(c.passes));
  }
  const auto stamp = fp.hex();
  const std::vector<fs::path> outputs = {dir / "manifest.jsonl", dir / "failures.jsonl",
                                         dir / "summary.json"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  mixer::CooccurrenceMatrix matrix;
  std::size_t asymmetric = 0;
  if (!c.matrix.empty()) {
    auto loaded = mixer::load_matrix(util::read_text(c.matrix), ont ? &*ont : nullptr);
    asymmetric = loaded.asymmetric.size();
    if (!loaded.asymmetric.empty()) {
      std::string pairs;
      for (const auto& [a, b] : loaded.asymmetric) pairs += " (" + a + ", " + b + ")";
      warn(options, outcome, "matrix entries disagree across the diagonal, set to 0:" + pairs);
    }
    matrix = std::move(loaded.matrix);
  } else {
    std::set<std::string> labels;
    for (const auto& clip : clips) labels.insert(clip.label);
    util::Fingerprint tfp;
    const auto templates = load_templates(c, tfp);
    mixer::JudgeOptions jopts;
    jopts.passes = c.passes;
    jopts.temperature = c.temperature;
    jopts.retry = retry_policy(c);
    jopts.workers = workers_of(c);
    matrix = mixer::build_matrix({labels.begin(), labels.end()}, *judge->client, templates, jopts);
    util::write_atomic(dir / "matrix.tsv", mixer::serialize_matrix(matrix));
  }

  const mixer::Pool pool(clips);
  std::vector<mixer::MixRecipe> recipes;
  for (const std::string split : {"train", "val", "test"}) {
    const auto it = c.split_sizes.find(split);
    if (it == c.split_sizes.end() || it->second == 0) continue;
    auto part = mixer::sample_split(pool, matrix, sopts, split, it->second, c.seed);
    recipes.insert(recipes.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }

  std::vector<fs::path> split_dirs;
  for (const auto& [split, n] : c.split_sizes) split_dirs.push_back(dir / split);
  prepare_partial(dir / "partial", stamp, options.resume, split_dirs);

  mixer::EmitOptions eopts;
  eopts.workers = workers_of(c);
  eopts.synthesis = synth;
  eopts.stop_after = options.stop_after;
  const auto report = mixer::emit_dataset(recipes, mixer::file_clip_loader(pool_dir), dir, eopts);
  if (!report.complete) {
    throw Interrupted("mix interrupted by stop_after hook");
  }

  std::vector<json> failures;
  for (const auto& f : report.failures) {
    failures.push_back({{"mixture_id", f.mixture_id}, {"error", f.error}});
    warn(options, outcome, f.mixture_id + ": " + f.error);
  }
  std::map<std::string, std::size_t> per_split;
  for (const auto& e : report.entries) ++per_split[e.recipe.split];
  outcome.summary = {{"recipes", recipes.size()},
                     {"mixtures", report.entries.size()},
                     {"per_split", per_split},
                     {"failures", report.failures.size()},
                     {"matrix_labels", matrix.size()},
                     {"asymmetric_pairs", asymmetric}};
  util::write_atomic(outputs[1], jsonl(failures));
  util::write_atomic(outputs[2], outcome.summary.dump(2) + "\n");
  fs::remove_all(dir / "partial");
  write_stamp(dir, stamp);
  return outcome;
}

// ---------------------------------------------------------------- stats

StageOutcome run_stats(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  const fs::path manifest = stage_dir(c, Stage::kMix) / "manifest.jsonl";
  require_output(manifest, Stage::kMix);
  const fs::path dir = stage_dir(c, Stage::kStats);
  util::Fingerprint fp;
  fp.add("stats").add_file(manifest);
  const auto stamp = fp.hex();
  const std::vector<fs::path> outputs = {dir / "label_counts.csv", dir / "source_counts.csv",
                                         dir / "report.json"};
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }
  const auto stats = evalkit::dataset_statistics({{"manifest.jsonl", util::read_text(manifest)}});
  for (const auto& m : stats.malformed) {
    warn(options, outcome, m.source + " line " + std::to_string(m.line) + ": " + m.error);
  }
  Progress progress(options, Stage::kStats);
  util::write_atomic(outputs[0], evalkit::label_counts_csv(stats));
  progress.wrote();
  util::write_atomic(outputs[1], evalkit::source_counts_csv(stats));
  progress.wrote();
  const auto report = evalkit::to_json(stats);
  util::write_atomic(outputs[2], report.dump(2) + "\n");
  progress.wrote();
  write_stamp(dir, stamp);
  outcome.summary = {{"mixtures", stats.mixtures},
                     {"labels", stats.label_counts.size()},
                     {"malformed_lines", stats.malformed.size()}};
  return outcome;
}

// ---------------------------------------------------------------- eval

StageOutcome run_eval(const PipelineConfig& c, const RunOptions& options) {
  StageOutcome outcome;
  const fs::path mix_dir = stage_dir(c, Stage::kMix);
  const fs::path manifest = mix_dir / "manifest.jsonl";
  require_output(manifest, Stage::kMix);
  if (!c.trials.empty()) require_file(c.trials, "listening-study responses (paths.trials)");
  const fs::path dir = stage_dir(c, Stage::kEval);

  util::Fingerprint fp;
  fp.add("eval").add_file(manifest);
  if (!c.trials.empty()) {
    fp.add("trials").add_file(c.trials).add(
        json{{"resamples", c.bootstrap_resamples}, {"seed", c.seed}}.dump());
  }
  const auto stamp = fp.hex();
  std::vector<fs::path> outputs = {dir / "metrics.jsonl", dir / "summary.json"};
  if (!c.trials.empty()) outputs.push_back(dir / "study.json");
  if (stamp_matches(dir, stamp, outputs)) {
    outcome.skipped = true;
    return outcome;
  }

  // Baseline: the unprocessed mixture scored against each of its stems.
  const auto entries = mixer::read_manifest(manifest);
  std::vector<std::vector<evalkit::MetricResult>> per_entry(entries.size());
  util::parallel_for(entries.size(), workers_of(c), [&](std::size_t i) {
    const auto& e = entries[i];
    const auto mixture = wav::read(mix_dir / e.mixture_path);
    for (std::size_t k = 0; k < e.stem_paths.size(); ++k) {
      const auto stem = wav::read(mix_dir / e.stem_paths[k]);
      per_entry[i].push_back({e.recipe.mixture_id + "/s" + std::to_string(k + 1),
                              evalkit::sdr(mixture.samples, stem.samples),
                              evalkit::si_sdr(mixture.samples, stem.samples)});
    }
  });
  std::vector<evalkit::MetricResult> results;
  for (auto& v : per_entry) results.insert(results.end(), v.begin(), v.end());

  double sdr_sum = 0.0;
  double si_sum = 0.0;
  std::size_t finite = 0;
  for (const auto& r : results) {
    if (std::isfinite(r.sdr_db) && std::isfinite(r.si_sdr_db)) {
      sdr_sum += r.sdr_db;
      si_sum += r.si_sdr_db;
      ++finite;
    }
  }
  outcome.summary = {{"pairs", results.size()},
                     {"finite_pairs", finite},
                     {"mean_sdr_db", finite ? json(sdr_sum / finite) : json(nullptr)},
                     {"mean_si_sdr_db", finite ? json(si_sum / finite) : json(nullptr)}};

  Progress progress(options, Stage::kEval);
  util::write_atomic(outputs[0], evalkit::to_jsonl(results));
  progress.wrote();
  if (!c.trials.empty()) {
    const auto table = evalkit::parse_trials_csv(util::read_text(c.trials));
    const auto report = evalkit::study_report(table, c.bootstrap_resamples, c.seed);
    if (!report.kappa.excluded.empty()) {
      warn(options, outcome,
           std::to_string(report.kappa.excluded.size()) +
               " trials lack a response from every rater and were left out of Fleiss' kappa");
    }
    if (report.kappa_error) warn(options, outcome, "Fleiss' kappa: " + *report.kappa_error);
    util::write_atomic(dir / "study.json", evalkit::to_json(report, table).dump(2) + "\n");
    progress.wrote();
    outcome.summary["study"] = {{"trials", table.trials.size()},
                                {"raters", table.raters.size()},
                                {"p_value", report.t_test.p}};
  }
  util::write_atomic(outputs[1], outcome.summary.dump(2) + "\n");
  write_stamp(dir, stamp);
  return outcome;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  std::vector<std::string> problems;
  Section root(j, "", base_dir, problems);
  if (const json* p = root.sub("paths")) {
    Section s(*p, "paths", base_dir, problems);
    s.path("corpus_root", c.corpus_root);
    s.path("output_root", c.output_root);
    s.path("taxonomy", c.taxonomy);
    s.path("refinement_plan", c.refinement_plan);
    s.path("metadata", c.metadata);
    s.path("coarse_tags", c.coarse_tags);
    s.path("annotator", c.annotator);
    s.path("matrix", c.matrix);
    s.path("prompts", c.prompts);
    s.path("pool", c.pool);
    s.path("trials", c.trials);
    s.finish();
  }
  if (c.output_root.is_relative()) c.output_root = base_dir / c.output_root;
  if (const json* p = root.sub("segment")) {
    Section s(*p, "segment", base_dir, problems);
    s.get("window_s", c.window_s);
    s.get("hop_s", c.hop_s);
    s.get("rms_gate", c.rms_gate);
    s.finish();
  }
  if (const json* p = root.sub("align")) {
    Section s(*p, "align", base_dir, problems);
    s.get("passes", c.passes);
    s.get("temperature", c.temperature);
    s.get("coarse_confidence", c.coarse_confidence);
    s.get("retry_attempts", c.retry_attempts);
    s.get("retry_base_delay_ms", c.retry_base_delay_ms);
    s.get("max_in_flight", c.max_in_flight);
    s.get("audio_transfer", c.audio_transfer);
    s.get("annotator_url", c.annotator_url);
    s.finish();
  }
  if (const json* p = root.sub("standardize")) {
    Section s(*p, "standardize", base_dir, problems);
    s.get("target_rate", c.target_rate);
    s.get("extender_url", c.extender_url);
    s.finish();
  }
  if (const json* p = root.sub("mix")) {
    Section s(*p, "mix", base_dir, problems);
    std::vector<double> snr{c.snr_min_db, c.snr_max_db};
    s.get("snr_range", snr);
    if (snr.size() == 2) {
      c.snr_min_db = snr[0];
      c.snr_max_db = snr[1];
    } else {
      problems.push_back("mix.snr_range must be [min, max]");
    }
    s.get("rms_target", c.rms_target);
    s.get("count_weights", c.count_weights);
    s.get("splits", c.split_sizes);
    s.get("max_attempts", c.max_attempts);
    s.get("crop_redraws", c.crop_redraws);
    s.get("silence_rms", c.silence_rms);
    s.get("build_matrix", c.build_matrix);
    s.finish();
  }
  if (const json* p = root.sub("eval")) {
    Section s(*p, "eval", base_dir, problems);
    s.get("bootstrap_resamples", c.bootstrap_resamples);
    s.finish();
  }
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  root.finish();

  auto more = validation_problems(c);
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError({"config file not found: " + path.string()});
  json j;
  try {
    j = json::parse(util::read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError({"config file " + path.string() + " is not valid JSON: " + e.what()});
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"paths",
           {{"corpus_root", c.corpus_root.string()},
            {"output_root", c.output_root.string()},
            {"taxonomy", c.taxonomy.string()},
            {"refinement_plan", c.refinement_plan.string()},
            {"metadata", c.metadata.string()},
            {"coarse_tags", c.coarse_tags.string()},
            {"annotator", c.annotator.string()},
            {"matrix", c.matrix.string()},
            {"prompts", c.prompts.string()},
            {"pool", c.pool.string()},
            {"trials", c.trials.string()}}},
          {"segment", {{"window_s", c.window_s}, {"hop_s", c.hop_s}, {"rms_gate", c.rms_gate}}},
          {"align",
           {{"passes", c.passes},
            {"temperature", c.temperature},
            {"coarse_confidence", c.coarse_confidence},
            {"retry_attempts", c.retry_attempts},
            {"retry_base_delay_ms", c.retry_base_delay_ms},
            {"max_in_flight", c.max_in_flight},
            {"audio_transfer", c.audio_transfer},
            {"annotator_url", c.annotator_url}}},
          {"standardize", {{"target_rate", c.target_rate}, {"extender_url", c.extender_url}}},
          {"mix",
           {{"snr_range", {c.snr_min_db, c.snr_max_db}},
            {"rms_target", c.rms_target},
            {"count_weights", c.count_weights},
            {"splits", c.split_sizes},
            {"max_attempts", c.max_attempts},
            {"crop_redraws", c.crop_redraws},
            {"silence_rms", c.silence_rms},
            {"build_matrix", c.build_matrix}}},
          {"eval", {{"bootstrap_resamples", c.bootstrap_resamples}}},
          {"seed", c.seed},
          {"workers", c.workers}};
}

std::vector<std::string> validation_problems(const PipelineConfig& c) {
  std::vector<std::string> p;
  auto need = [&](bool ok, const std::string& message) {
    if (!ok) p.push_back(message);
  };
  need(c.window_s > 0.0, "segment.window_s must be positive");
  need(c.hop_s > 0.0, "segment.hop_s must be positive");
  need(c.rms_gate >= 0.0, "segment.rms_gate must be non-negative");
  need(c.passes >= 1, "align.passes must be at least 1");
  need(c.temperature >= 0.0, "align.temperature must be non-negative");
  need(c.coarse_confidence >= 0.0 && c.coarse_confidence <= 1.0,
       "align.coarse_confidence must lie in [0, 1]");
  need(c.retry_attempts >= 1, "align.retry_attempts must be at least 1");
  need(c.retry_base_delay_ms >= 0, "align.retry_base_delay_ms must be non-negative");
  need(c.max_in_flight >= 1 && c.max_in_flight <= 1024, "align.max_in_flight must lie in [1, 1024]");
  need(c.audio_transfer == "inline" || c.audio_transfer == "path",
       "align.audio_transfer must be \"inline\" or \"path\"");
  need(c.target_rate == mixer::kSampleRate,
       "standardize.target_rate must be 44100 (mixtures are synthesized at 44.1 kHz)");
  need(c.snr_min_db <= c.snr_max_db, "mix.snr_range must have min <= max");
  need(std::isfinite(c.snr_min_db) && std::isfinite(c.snr_max_db), "mix.snr_range must be finite");
  need(c.rms_target > 0.0 && c.rms_target < 1.0, "mix.rms_target must lie in (0, 1)");
  {
    mixer::SamplingOptions s;
    s.count_weights = c.count_weights;
    s.snr_min_db = c.snr_min_db;
    s.snr_max_db = c.snr_max_db;
    s.max_attempts = c.max_attempts;
    try {
      mixer::validate(s);
    } catch (const std::invalid_argument& e) {
      p.push_back(std::string("mix: ") + e.what());
    }
  }
  for (const auto& [split, n] : c.split_sizes) {
    need(split == "train" || split == "val" || split == "test",
         "mix.splits has unknown split \"" + split + "\"");
  }
  need(c.crop_redraws >= 0, "mix.crop_redraws must be non-negative");
  need(c.silence_rms >= 0.0, "mix.silence_rms must be non-negative");
  need(c.bootstrap_resamples >= 1, "eval.bootstrap_resamples must be at least 1");
  need(!c.output_root.empty(), "paths.output_root must be set");
  return p;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kOntology:
      return "ontology";
    case Stage::kSegment:
      return "segment";
    case Stage::kAlign:
      return "align";
    case Stage::kStandardize:
      return "standardize";
    case Stage::kMix:
      return "mix";
    case Stage::kStats:
      return "stats";
    case Stage::kEval:
      return "eval";
  }
  return "?";
}

std::optional<Stage> stage_from_string(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

fs::path stage_dir(const PipelineConfig& config, Stage stage) {
  return config.output_root / std::string(stage == Stage::kSegment ? "segments" : to_string(stage));
}

StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options) {
  if (auto problems = validation_problems(config); !problems.empty()) {
    throw ValidationError(std::move(problems));
  }
  switch (stage) {
    case Stage::kOntology:
      return run_ontology(config, options);
    case Stage::kSegment:
      return run_segment(config, options);
    case Stage::kAlign:
      return run_align(config, options);
    case Stage::kStandardize:
      return run_standardize(config, options);
    case Stage::kMix:
      return run_mix(config, options);
    case Stage::kStats:
      return run_stats(config, options);
    case Stage::kEval:
      return run_eval(config, options);
  }
  throw std::logic_error("unknown stage");
}

}  // namespace sepforge::pipeline
