// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/annotator.hpp"

#include <algorithm>
#include <thread>

#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"

namespace sepforge::aligner {
namespace fs = std::filesystem;

MockAnnotator::MockAnnotator(std::string key, AnswerTable answers,
                             std::map<std::string, AnswerTable> overrides)
    : key_(std::move(key)),
      answers_(std::move(answers)),
      overrides_(std::move(overrides)) {}

MockAnnotator MockAnnotator::from_json(const nlohmann::json& config) {
  const auto table = [](const nlohmann::json& j) {
    AnswerTable t;
    for (const auto& [tmpl, list] : j.items()) {
      t[tmpl] = list.get<std::vector<std::string>>();
    }
    return t;
  };
  std::map<std::string, AnswerTable> overrides;
  if (config.contains("overrides")) {
    for (const auto& [subject, t] : config.at("overrides").items()) {
      overrides[subject] = table(t);
    }
  }
  return MockAnnotator(config.value("key", std::string("sepforge-mock")),
                       table(config.value("answers", nlohmann::json::object())),
                       std::move(overrides));
}

std::string MockAnnotator::complete(const AnnotatorRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  const std::vector<std::string>* list = nullptr;
  for (const auto* who : {&request.subject, &request.group}) {
    if (who->empty()) continue;
    if (auto o = overrides_.find(*who); o != overrides_.end()) {
      if (auto t = o->second.find(request.template_id); t != o->second.end()) {
        list = &t->second;
        break;
      }
    }
  }
  if (list == nullptr) {
    auto t = answers_.find(request.template_id);
    if (t == answers_.end()) {
      throw ConfigurationError("mock annotator has no answers for template '" +
                               request.template_id + "'");
    }
    list = &t->second;
  }
  if (list->empty()) {
    throw ConfigurationError("mock annotator answer list for '" +
                             request.template_id + "' is empty");
  }
  const std::uint64_t h = util::keyed_hash64(
      key_, {request.subject, request.template_id,
             std::to_string(request.pass_index)});
  return (*list)[h % list->size()];
}

std::size_t MockAnnotator::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

HttpAnnotator::HttpAnnotator(HttpAnnotatorOptions options)
    : options_(std::move(options)),
      in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {}

nlohmann::json HttpAnnotator::request_body(const AnnotatorRequest& request) const {
  nlohmann::json audio = nullptr;
  if (options_.audio == AudioTransfer::kPath && !request.audio_path.empty()) {
    audio = request.audio_path;
  } else if (request.audio != nullptr) {
    audio = util::base64_encode(wav::encode(*request.audio));
  }
  return {{"audio", audio},
          {"prompt", request.prompt},
          {"temperature", request.temperature}};
}

std::string HttpAnnotator::complete(const AnnotatorRequest& request) {
  const nlohmann::json body = request_body(request);
  in_flight_.acquire();
  nlohmann::json reply;
  try {
    reply = post_json(options_.url, body, options_.timeout);
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    throw TransportError("annotator reply lacks a string 'text' field");
  }
  return reply["text"].get<std::string>();
}

std::string complete_with_retry(Annotator& client, const AnnotatorRequest& request,
                                const RetryPolicy& policy) {
  const int attempts = std::max(1, policy.attempts);
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return client.complete(request);
    } catch (const TransportError& e) {
      if (attempt >= attempts) {
        throw TransientFailure("annotator unavailable after " +
                               std::to_string(attempts) + " attempts: " + e.what());
      }
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

PromptTemplates PromptTemplates::load_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigurationError("prompt template directory " + dir.string() +
                             " does not exist");
  }
  std::map<std::string, std::string> templates;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      templates[entry.path().stem().string()] = util::trim(util::read_text(entry.path()));
    }
  }
  return PromptTemplates(std::move(templates));
}

std::string PromptTemplates::render(
    const std::string& id, const std::map<std::string, std::string>& variables) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw ConfigurationError("unknown prompt template '" + id + "'");
  }
  const std::string& text = it->second;
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      out.push_back(c);
      ++i;
      continue;
    }
    if (c != '{') {
      out.push_back(c);
      continue;
    }
    const auto close = text.find('}', i + 1);
    if (close == std::string::npos) {
      throw ConfigurationError("template '" + id + "' has an unterminated placeholder");
    }
    const std::string name = text.substr(i + 1, close - i - 1);
    auto v = variables.find(name);
    if (v == variables.end()) {
      throw ConfigurationError("template '" + id + "' needs a value for {" + name + "}");
    }
    out += v->second;
    i = close;
  }
  return out;
}

PromptTemplates default_templates() {
  return PromptTemplates({
      {"purification",
       "Listen to the clip. Does it contain exactly one distinct sound event "
       "with no other audible source? Reply with one word: single or multi."},
      {"relabel",
       "The clip was coarsely tagged as \"{coarse_label}\". Candidate labels, "
       "indexed from 0: {leaf_labels}. Reply with the index of the label "
       "that matches the clip, or -1 if none does. Reply with the integer "
       "only."},
      {"cooccurrence",
       "Could the sound events \"{label_a}\" and \"{label_b}\" plausibly be "
       "heard together in one real recording, without contradiction in place "
       "or time? Reply with one word: yes or no."},
  });
}

}  // namespace sepforge::aligner
