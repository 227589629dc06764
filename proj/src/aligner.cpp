// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/aligner.hpp"

#include <charconv>
#include <stdexcept>

#include "sepforge/util.hpp"

namespace sepforge::aligner {
namespace {

constexpr const char* kPolyphonyStage = "polyphony";
constexpr const char* kLeafStage = "leaf";
constexpr const char* kNoMatch = "-1";

struct StatusName {
  AlignmentStatus status;
  std::string_view name;
};

constexpr StatusName kStatusNames[] = {
    {AlignmentStatus::kAccepted, "accepted"},
    {AlignmentStatus::kRejectedMultilabelMetadata, "rejected_multilabel_metadata"},
    {AlignmentStatus::kRejectedPolyphonic, "rejected_polyphonic"},
    {AlignmentStatus::kRejectedLowConfidence, "rejected_low_confidence"},
    {AlignmentStatus::kRejectedNoLeafMatch, "rejected_no_leaf_match"},
    {AlignmentStatus::kRejectedVoteTie, "rejected_vote_tie"},
    {AlignmentStatus::kTransientError, "transient_error"},
};

std::vector<std::string> collect_answers(const segmenter::Segment& segment,
                                         const std::string& template_id,
                                         const std::string& prompt,
                                         const StageContext& ctx) {
  if (ctx.options.passes < 1) {
    throw ConfigurationError("voting passes must be at least 1");
  }
  AnnotatorRequest req;
  req.subject = segment.key();
  req.group = segment.source_id;
  req.template_id = template_id;
  req.prompt = prompt;
  req.temperature = ctx.options.temperature;
  req.audio_path = ctx.audio_path;
  if (ctx.annotator.needs_audio() && ctx.audio) req.audio = &ctx.audio();

  std::vector<std::string> answers;
  answers.reserve(static_cast<std::size_t>(ctx.options.passes));
  for (int pass = 0; pass < ctx.options.passes; ++pass) {
    req.pass_index = pass;
    answers.push_back(complete_with_retry(ctx.annotator, req, ctx.options.retry));
  }
  return answers;
}

}  // namespace

void VoteTally::add(const std::string& answer) {
  ++counts[answer];
  ++total;
}

std::optional<std::string> majority_vote(const VoteTally& tally) {
  if (tally.total < 1) throw std::invalid_argument("majority vote over an empty tally");
  const std::string* best = nullptr;
  int best_count = 0;
  bool shared = false;
  for (const auto& [answer, count] : tally.counts) {
    if (answer == kInvalidAnswer || count <= 0) continue;
    if (count > best_count) {
      best = &answer;
      best_count = count;
      shared = false;
    } else if (count == best_count) {
      shared = true;
    }
  }
  if (best == nullptr || shared) return std::nullopt;
  return *best;
}

std::string_view to_string(AlignmentStatus status) {
  for (const auto& s : kStatusNames) {
    if (s.status == status) return s.name;
  }
  return "?";
}

AlignmentStatus status_from_string(std::string_view s) {
  for (const auto& n : kStatusNames) {
    if (n.name == s) return n.status;
  }
  throw std::invalid_argument("unknown alignment status '" + std::string(s) + "'");
}

std::string normalize_answer(std::string_view raw) {
  std::string s = util::to_lower(util::trim(raw));
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') &&
      s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return util::trim(s);
}

TableCoarseTagger TableCoarseTagger::parse(std::string_view tsv) {
  std::map<std::string, CoarseTag> table;
  std::size_t line_no = 0;
  for (const auto& line : util::lines(tsv)) {
    ++line_no;
    const std::string t = util::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto f = util::split(line, '\t');
    if (f.size() != 3) {
      throw ConfigurationError("coarse tag table line " + std::to_string(line_no) +
                               ": expected key<TAB>label<TAB>confidence");
    }
    CoarseTag tag;
    tag.label = util::trim(f[1]);
    try {
      tag.confidence = std::stod(util::trim(f[2]));
    } catch (const std::exception&) {
      throw ConfigurationError("coarse tag table line " + std::to_string(line_no) +
                               ": bad confidence '" + f[2] + "'");
    }
    table[util::trim(f[0])] = std::move(tag);
  }
  return TableCoarseTagger(std::move(table));
}

std::optional<CoarseTag> TableCoarseTagger::tag(const segmenter::Segment& segment) {
  if (auto it = table_.find(segment.key()); it != table_.end()) return it->second;
  if (auto it = table_.find(segment.source_id); it != table_.end()) return it->second;
  return std::nullopt;
}

PolyphonyVerdict detect_polyphony(const segmenter::Segment& segment,
                                  const StageContext& ctx) {
  const std::string prompt = ctx.templates.render(ctx.options.purification_template, {});
  const auto answers =
      collect_answers(segment, ctx.options.purification_template, prompt, ctx);
  const std::string single = normalize_answer(ctx.options.single_token);
  const std::string multi = normalize_answer(ctx.options.multi_token);
  PolyphonyVerdict verdict;
  for (const auto& raw : answers) {
    const std::string a = normalize_answer(raw);
    verdict.tally.add(a == single || a == multi ? a : kInvalidAnswer);
  }
  if (auto winner = majority_vote(verdict.tally)) {
    verdict.single_event = (*winner == single);
  }
  return verdict;
}

CoarseFilterResult coarse_tag_filter(const segmenter::Segment& segment,
                                     CoarseTagger& tagger,
                                     const ontology::Ontology& ont,
                                     double threshold) {
  CoarseFilterResult out;
  out.tag = tagger.tag(segment);
  if (!out.tag) return out;
  if (!ont.contains(out.tag->label)) {
    throw ConfigurationError("coarse tagger label '" + out.tag->label +
                             "' is not in the ontology");
  }
  if (!(out.tag->confidence >= 0.0 && out.tag->confidence <= 1.0)) {
    throw ConfigurationError("coarse tagger confidence outside [0, 1] for " +
                             segment.key());
  }
  out.passed = out.tag->confidence >= threshold;
  return out;
}

std::string render_leaf_list(const ontology::Ontology& ont,
                             const std::vector<std::string>& candidates) {
  nlohmann::json names = nlohmann::json::array();
  for (const auto& id : candidates) names.push_back(ont.node(id).name);
  return names.dump();
}

LeafVerdict refine_to_leaf(const segmenter::Segment& segment,
                           const std::string& coarse_label,
                           const ontology::Ontology& ont, const StageContext& ctx) {
  const auto candidates = ontology::candidate_leaves(ont, coarse_label);
  if (candidates.empty()) {
    throw ConfigurationError("no candidate leaves under '" + coarse_label + "'");
  }
  const std::string prompt = ctx.templates.render(
      ctx.options.relabel_template,
      {{"leaf_labels", render_leaf_list(ont, candidates)},
       {"coarse_label", ont.node(coarse_label).name}});
  const auto answers = collect_answers(segment, ctx.options.relabel_template, prompt, ctx);

  LeafVerdict verdict;
  const auto n = static_cast<long long>(candidates.size());
  for (const auto& raw : answers) {
    const std::string a = normalize_answer(raw);
    long long idx = 0;
    const auto [end, ec] = std::from_chars(a.data(), a.data() + a.size(), idx);
    if (a.empty() || ec != std::errc() || end != a.data() + a.size()) {
      verdict.tally.add(kInvalidAnswer);
    } else if (idx >= 0 && idx < n) {
      verdict.tally.add(std::to_string(idx));
    } else {
      // -1 and out-of-range indices both mean "no candidate fits".
      verdict.tally.add(kNoMatch);
    }
  }
  const auto winner = majority_vote(verdict.tally);
  if (!winner) {
    verdict.status = AlignmentStatus::kRejectedVoteTie;
  } else if (*winner == kNoMatch) {
    verdict.status = AlignmentStatus::kRejectedNoLeafMatch;
  } else {
    verdict.leaf = candidates[static_cast<std::size_t>(std::stoll(*winner))];
    verdict.status = AlignmentStatus::kAccepted;
  }
  return verdict;
}

AlignmentResult align_segment(const segmenter::Segment& segment,
                              const std::vector<std::string>& metadata_labels,
                              const ontology::Ontology& ont, CoarseTagger& tagger,
                              const StageContext& ctx) {
  AlignmentResult result;
  result.segment = segment;
  if (metadata_labels.size() > 1) {
    result.status = AlignmentStatus::kRejectedMultilabelMetadata;
    return result;
  }
  try {
    auto poly = detect_polyphony(segment, ctx);
    result.tallies[kPolyphonyStage] = poly.tally;
    if (!poly.single_event) {
      result.status = AlignmentStatus::kRejectedVoteTie;
      return result;
    }
    if (!*poly.single_event) {
      result.status = AlignmentStatus::kRejectedPolyphonic;
      return result;
    }

    const auto coarse = coarse_tag_filter(segment, tagger, ont, ctx.options.coarse_threshold);
    if (coarse.tag) {
      result.coarse_label = coarse.tag->label;
      result.coarse_confidence = coarse.tag->confidence;
    }
    if (!coarse.passed) {
      result.status = AlignmentStatus::kRejectedLowConfidence;
      return result;
    }

    auto leaf = refine_to_leaf(segment, coarse.tag->label, ont, ctx);
    result.tallies[kLeafStage] = leaf.tally;
    result.status = leaf.status;
    result.leaf_label = leaf.leaf;
  } catch (const TransientFailure& e) {
    result.status = AlignmentStatus::kTransientError;
    result.leaf_label.reset();
    result.detail = e.what();
  }
  return result;
}

nlohmann::json to_json(const AlignmentResult& r) {
  nlohmann::json tallies = nlohmann::json::object();
  for (const auto& [stage, t] : r.tallies) {
    tallies[stage] = {{"counts", t.counts}, {"total", t.total}};
  }
  nlohmann::json j = segmenter::to_json(r.segment);
  j["status"] = to_string(r.status);
  j["leaf_label"] = r.leaf_label ? nlohmann::json(*r.leaf_label) : nlohmann::json();
  j["coarse_label"] = r.coarse_label ? nlohmann::json(*r.coarse_label) : nlohmann::json();
  j["coarse_confidence"] =
      r.coarse_confidence ? nlohmann::json(*r.coarse_confidence) : nlohmann::json();
  j["tallies"] = std::move(tallies);
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

AlignmentResult alignment_from_json(const nlohmann::json& j) {
  AlignmentResult r;
  r.segment = segmenter::segment_from_json(j);
  r.status = status_from_string(j.at("status").get<std::string>());
  if (!j.value("leaf_label", nlohmann::json()).is_null()) {
    r.leaf_label = j.at("leaf_label").get<std::string>();
  }
  if (!j.value("coarse_label", nlohmann::json()).is_null()) {
    r.coarse_label = j.at("coarse_label").get<std::string>();
  }
  if (!j.value("coarse_confidence", nlohmann::json()).is_null()) {
    r.coarse_confidence = j.at("coarse_confidence").get<double>();
  }
  if (j.contains("tallies")) {
    for (const auto& [stage, t] : j.at("tallies").items()) {
      VoteTally tally;
      tally.counts = t.at("counts").get<std::map<std::string, int>>();
      tally.total = t.at("total").get<int>();
      r.tallies[stage] = std::move(tally);
    }
  }
  r.detail = j.value("detail", std::string());
  return r;
}

std::map<std::string, std::vector<std::string>> parse_metadata(std::string_view jsonl) {
  std::map<std::string, std::vector<std::string>> out;
  std::size_t line_no = 0;
  for (const auto& line : util::lines(jsonl)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("source_id").get<std::string>()] =
          j.value("labels", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigurationError("metadata line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return out;
}

}  // namespace sepforge::aligner
