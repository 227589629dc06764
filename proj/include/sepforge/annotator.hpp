// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Clients for the audio-language annotator used by the alignment cascade and
// the co-occurrence judge. One request is issued per voting pass.
//
// Wire protocol (HttpAnnotator):
//   POST {"audio": <base64 WAV | file path | null>, "prompt": str,
//         "temperature": num}  ->  {"text": str}

#ifndef SEPFORGE_ANNOTATOR_HPP_
#define SEPFORGE_ANNOTATOR_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepforge/audio.hpp"
#include "sepforge/transport.hpp"

namespace sepforge::aligner {

struct AnnotatorRequest {
  // What is being judged: a segment key, or "a|b" for a label pair.
  std::string subject;
  // Coarser grouping for the subject, e.g. its source file. May be empty.
  std::string group;
  std::string template_id;
  std::string prompt;
  double temperature = 1.0;
  int pass_index = 0;
  // Segment audio when the client asked for it; null for text-only queries.
  const AudioBuffer* audio = nullptr;
  std::string audio_path;
};

class Annotator {
 public:
  virtual ~Annotator() = default;
  // Returns the raw model text. Throws TransportError on exchange failure.
  virtual std::string complete(const AnnotatorRequest& request) = 0;
  virtual bool needs_audio() const { return false; }
};

// Deterministic offline annotator. The answer for a pass is picked from a
// configured list by a keyed hash of (subject, template id, pass index), so
// the same query always yields the same answers without any shared state.
//
// Config JSON:
//   {"key": "...",
//    "answers":   {"<template id>": ["ans", ...]},
//    "overrides": {"<subject or group>": {"<template id>": ["ans", ...]}}}
class MockAnnotator : public Annotator {
 public:
  using AnswerTable = std::map<std::string, std::vector<std::string>>;

  MockAnnotator(std::string key, AnswerTable answers,
                std::map<std::string, AnswerTable> overrides = {});
  static MockAnnotator from_json(const nlohmann::json& config);

  std::string complete(const AnnotatorRequest& request) override;

  std::size_t calls() const;

 private:
  std::string key_;
  AnswerTable answers_;
  std::map<std::string, AnswerTable> overrides_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

enum class AudioTransfer { kInline, kPath };

struct HttpAnnotatorOptions {
  std::string url;
  int max_in_flight = 4;
  AudioTransfer audio = AudioTransfer::kInline;
  std::chrono::seconds timeout{120};
};

class HttpAnnotator : public Annotator {
 public:
  explicit HttpAnnotator(HttpAnnotatorOptions options);

  std::string complete(const AnnotatorRequest& request) override;
  bool needs_audio() const override { return true; }

  // The JSON body sent for a request; exposed for protocol tests.
  nlohmann::json request_body(const AnnotatorRequest& request) const;

 private:
  HttpAnnotatorOptions options_;
  std::counting_semaphore<1024> in_flight_;
};

// Calls the client, retrying TransportErrors with exponential backoff.
// Throws TransientFailure when the budget is exhausted.
std::string complete_with_retry(Annotator& client,
                                const AnnotatorRequest& request,
                                const RetryPolicy& policy);

// Prompt texts keyed by template id, with `{name}` placeholders. `{{` and
// `}}` produce literal braces.
class PromptTemplates {
 public:
  PromptTemplates() = default;
  explicit PromptTemplates(std::map<std::string, std::string> templates)
      : templates_(std::move(templates)) {}

  // Loads every *.txt in the directory; the file stem is the template id.
  static PromptTemplates load_directory(const std::filesystem::path& dir);

  bool contains(const std::string& id) const { return templates_.contains(id); }
  void set(const std::string& id, std::string text) { templates_[id] = std::move(text); }

  // Throws ConfigurationError for unknown templates or placeholders without
  // a value.
  std::string render(const std::string& id,
                     const std::map<std::string, std::string>& variables) const;

 private:
  std::map<std::string, std::string> templates_;
};

// Minimal built-in templates so the pipeline runs without a template
// directory.
PromptTemplates default_templates();

}  // namespace sepforge::aligner

#endif  // SEPFORGE_ANNOTATOR_HPP_
