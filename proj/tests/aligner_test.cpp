// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "sepforge/aligner.hpp"
#include "sepforge/annotator.hpp"
#include "sepforge/ontology.hpp"
#include "sepforge/random.hpp"
#include "sepforge/util.hpp"
#include "sepforge/wav.hpp"
#include "test_support.hpp"

namespace sepforge::aligner {
namespace {

using testing::ScriptedAnnotator;

const ontology::Ontology& animals() {
  static const auto ont = ontology::load_ontology(
      "animal\tAnimal\t-\n"
      "dog\tDog\tanimal\n"
      "cat\tCat\tanimal\n"
      "horse\tHorse\tanimal\n"
      "vehicle\tVehicle\t-\n"
      "car\tCar\tvehicle\n");
  return ont;
}

segmenter::Segment segment(const std::string& source = "s.wav", double start = 0.0) {
  return {source, start, 10.0, 0.05, 44100};
}

struct Harness {
  ScriptedAnnotator annotator;
  PromptTemplates templates = default_templates();
  AlignerOptions options;
  TableCoarseTagger tagger{{{"s.wav", {"animal", 0.92}}}};

  Harness() { options.retry.base_delay = std::chrono::milliseconds(0); }
  StageContext ctx() { return {annotator, templates, options, {}, {}}; }
  AlignmentResult run(const std::vector<std::string>& metadata = {"dog"}) {
    return align_segment(segment(), metadata, animals(), tagger, ctx());
  }
};

VoteTally tally_of(const std::vector<std::string>& answers) {
  VoteTally t;
  for (const auto& a : answers) t.add(a);
  return t;
}

TEST(Votes, MajorityWins) {
  std::vector<std::string> a(6, "a");
  a.insert(a.end(), 4, "b");
  EXPECT_EQ(majority_vote(tally_of(a)), "a");
}

TEST(Votes, EvenSplitIsATie) {
  std::vector<std::string> a(5, "a");
  a.insert(a.end(), 5, "b");
  EXPECT_EQ(majority_vote(tally_of(a)), std::nullopt);
}

TEST(Votes, InvalidBucketNeverWins) {
  std::vector<std::string> a(6, kInvalidAnswer);
  a.insert(a.end(), 4, "a");
  EXPECT_EQ(majority_vote(tally_of(a)), "a");
  EXPECT_EQ(majority_vote(tally_of(std::vector<std::string>(10, kInvalidAnswer))), std::nullopt);
  EXPECT_THROW(majority_vote(VoteTally{}), std::invalid_argument);
}

TEST(Votes, OrderIndependentProperty) {
  Rng rng(11);
  const std::vector<std::string> alphabet{"a", "b", "c", kInvalidAnswer};
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::string> answers(1 + rng.uniform_index(12));
    for (auto& a : answers) a = alphabet[rng.uniform_index(alphabet.size())];
    const auto reference = majority_vote(tally_of(answers));
    std::vector<std::string> shuffled = answers;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    }
    ASSERT_EQ(majority_vote(tally_of(shuffled)), reference);
    // A winner holds a strict plurality among valid answers.
    std::map<std::string, int> counts;
    for (const auto& a : answers) {
      if (a != kInvalidAnswer) ++counts[a];
    }
    int best = 0;
    int holders = 0;
    for (const auto& [k, c] : counts) {
      if (c > best) {
        best = c;
        holders = 1;
      } else if (c == best) {
        ++holders;
      }
    }
    ASSERT_EQ(reference.has_value(), best > 0 && holders == 1);
    if (reference) {
      ASSERT_EQ(counts[*reference], best);
    }
  }
}

TEST(Votes, SinglePassNeverTies) {
  for (const char* a : {"single", "multi"}) {
    Harness h;
    h.options.passes = 1;
    h.annotator.answers = {{"purification", {a}}, {"relabel", {"1"}}};
    const auto r = h.run();
    EXPECT_NE(r.status, AlignmentStatus::kRejectedVoteTie);
    EXPECT_EQ(h.annotator.calls().size(), std::string(a) == "single" ? 2u : 1u);
  }
}

TEST(Answers, Normalization) {
  EXPECT_EQ(normalize_answer("  Single.\n"), "single");
  EXPECT_EQ(normalize_answer("\"MULTI\""), "multi");
  EXPECT_EQ(normalize_answer(" 2 "), "2");
}

TEST(CoarseFilter, ThresholdIsInclusive) {
  TableCoarseTagger tagger({{"a.wav", {"animal", 0.92}},
                            {"b.wav", {"animal", 0.70}},
                            {"c.wav", {"animal", 0.42}},
                            {"d.wav", {"plant", 0.99}}});
  EXPECT_TRUE(coarse_tag_filter(segment("a.wav"), tagger, animals()).passed);
  EXPECT_TRUE(coarse_tag_filter(segment("b.wav"), tagger, animals()).passed);
  const auto low = coarse_tag_filter(segment("c.wav"), tagger, animals());
  EXPECT_FALSE(low.passed);
  ASSERT_TRUE(low.tag);
  EXPECT_EQ(low.tag->confidence, 0.42);
  EXPECT_FALSE(coarse_tag_filter(segment("none.wav"), tagger, animals()).passed);
  EXPECT_THROW(coarse_tag_filter(segment("d.wav"), tagger, animals()), ConfigurationError);
}

TEST(CoarseFilter, SegmentKeyOverridesSource) {
  auto tagger = TableCoarseTagger::parse("# key\tlabel\tconfidence\ns.wav\tanimal\t0.9\ns.wav@5.000000\tvehicle\t0.3\n");
  EXPECT_EQ(tagger.tag(segment("s.wav", 0.0))->label, "animal");
  EXPECT_EQ(tagger.tag(segment("s.wav", 5.0))->label, "vehicle");
  EXPECT_THROW(TableCoarseTagger::parse("x\tanimal\n"), ConfigurationError);
}

TEST(Refine, IndexZeroPicksFirstCandidate) {
  Harness h;
  h.annotator.answers = {{"relabel", {"0"}}};
  const auto v = refine_to_leaf(segment(), "animal", animals(), h.ctx());
  EXPECT_EQ(v.status, AlignmentStatus::kAccepted);
  // Candidates are in document order: Dog, Cat, Horse.
  EXPECT_EQ(v.leaf, "dog");
  EXPECT_EQ(v.tally.counts.at("0"), 10);
  const auto& prompt = h.annotator.calls().front().prompt;
  EXPECT_NE(prompt.find("[\"Dog\",\"Cat\",\"Horse\"]"), std::string::npos) << prompt;
  EXPECT_NE(prompt.find("\"Animal\""), std::string::npos);
}

TEST(Refine, NoMatchTieAndInvalid) {
  Harness h;
  h.annotator.answers = {{"relabel", {"-1"}}};
  EXPECT_EQ(refine_to_leaf(segment(), "animal", animals(), h.ctx()).status,
            AlignmentStatus::kRejectedNoLeafMatch);
  h.annotator.answers = {{"relabel", {"7", "3"}}};
  EXPECT_EQ(refine_to_leaf(segment(), "animal", animals(), h.ctx()).status,
            AlignmentStatus::kRejectedNoLeafMatch);
  h.annotator.answers = {{"relabel", {"0", "1"}}};
  EXPECT_EQ(refine_to_leaf(segment(), "animal", animals(), h.ctx()).status,
            AlignmentStatus::kRejectedVoteTie);
  h.annotator.answers = {{"relabel", {"dog", "dog", "dog", "2"}}};
  const auto v = refine_to_leaf(segment(), "animal", animals(), h.ctx());
  EXPECT_EQ(v.leaf, "horse");
  EXPECT_EQ(v.tally.counts.at(kInvalidAnswer), 8);
}

TEST(Cascade, MultilabelMetadataMakesNoCalls) {
  Harness h;
  h.annotator.answers = {{"purification", {"single"}}, {"relabel", {"0"}}};
  const auto r = h.run({"dog", "car"});
  EXPECT_EQ(r.status, AlignmentStatus::kRejectedMultilabelMetadata);
  EXPECT_TRUE(h.annotator.calls().empty());
}

TEST(Cascade, PolyphonicStopsBeforeRelabel) {
  Harness h;
  h.annotator.answers = {{"purification", {"multi", "multi", "single"}}, {"relabel", {"0"}}};
  const auto r = h.run();
  EXPECT_EQ(r.status, AlignmentStatus::kRejectedPolyphonic);
  EXPECT_EQ(h.annotator.count("purification"), 10u);
  EXPECT_EQ(h.annotator.count("relabel"), 0u);
  EXPECT_FALSE(r.coarse_label);
}

TEST(Cascade, PolyphonyTieRejects) {
  Harness h;
  h.annotator.answers = {{"purification", {"single", "multi"}}, {"relabel", {"0"}}};
  EXPECT_EQ(h.run().status, AlignmentStatus::kRejectedVoteTie);
  EXPECT_EQ(h.annotator.count("relabel"), 0u);
}

TEST(Cascade, LowConfidenceStopsBeforeRelabel) {
  Harness h;
  h.tagger = TableCoarseTagger({{"s.wav", {"animal", 0.42}}});
  h.annotator.answers = {{"purification", {"single"}}, {"relabel", {"0"}}};
  const auto r = h.run();
  EXPECT_EQ(r.status, AlignmentStatus::kRejectedLowConfidence);
  EXPECT_EQ(r.coarse_confidence, 0.42);
  EXPECT_EQ(h.annotator.count("relabel"), 0u);
}

TEST(Cascade, AcceptedRunsBothVotes) {
  Harness h;
  h.annotator.answers = {{"purification", {"single"}}, {"relabel", {"1"}}};
  const auto r = h.run();
  EXPECT_EQ(r.status, AlignmentStatus::kAccepted);
  EXPECT_EQ(r.leaf_label, "cat");
  EXPECT_EQ(r.coarse_label, "animal");
  const auto calls = h.annotator.calls();
  ASSERT_EQ(calls.size(), 20u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(calls[i].template_id, "purification");
    EXPECT_EQ(calls[i].pass_index, i);
    EXPECT_EQ(calls[10 + i].template_id, "relabel");
  }
  EXPECT_EQ(alignment_from_json(to_json(r)), r);
}

TEST(Cascade, AcceptedLeavesAreCandidatesProperty) {
  Rng rng(5);
  const std::vector<std::string> poly{"single", "multi", "???"};
  const std::vector<std::string> leaf{"0", "1", "2", "-1", "9", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    Harness h;
    h.options.passes = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<std::string> p(3), l(4);
    for (auto& a : p) a = poly[rng.uniform_index(poly.size())];
    for (auto& a : l) a = leaf[rng.uniform_index(leaf.size())];
    h.annotator.answers = {{"purification", p}, {"relabel", l}};
    if (rng.uniform01() < 0.5) h.tagger = TableCoarseTagger({{"s.wav", {"vehicle", 0.8}}});
    const auto r = h.run();
    if (r.status == AlignmentStatus::kAccepted) {
      const auto c = ontology::candidate_leaves(animals(), *r.coarse_label);
      ASSERT_NE(std::find(c.begin(), c.end(), *r.leaf_label), c.end());
    } else {
      ASSERT_FALSE(r.leaf_label);
    }
  }
}

TEST(Retry, TransportErrorsAreRetriedThenSurfaced) {
  Harness h;
  h.annotator.answers = {{"purification", {"single"}}, {"relabel", {"0"}}};
  h.annotator.transport_failures = 2;
  EXPECT_EQ(h.run().status, AlignmentStatus::kAccepted);
  EXPECT_EQ(h.annotator.calls().size(), 22u);

  Harness down;
  down.annotator.answers = {{"purification", {"single"}}};
  down.annotator.transport_failures = 3;
  const auto r = down.run();
  EXPECT_EQ(r.status, AlignmentStatus::kTransientError);
  EXPECT_NE(r.detail.find("3 attempts"), std::string::npos);
  EXPECT_EQ(down.annotator.calls().size(), 3u);
}

TEST(Mock, DeterministicWithOverrides) {
  const auto config = nlohmann::json::parse(R"({
    "key": "k",
    "answers": {"purification": ["single", "multi", "single"], "relabel": ["0"]},
    "overrides": {"g.wav": {"relabel": ["2"]}, "g.wav@5.000000": {"relabel": ["1"]}}
  })");
  MockAnnotator a(MockAnnotator::from_json(config));
  MockAnnotator b(MockAnnotator::from_json(config));
  AnnotatorRequest req;
  req.subject = "x.wav@0.000000";
  req.group = "x.wav";
  req.template_id = "purification";
  for (int p = 0; p < 10; ++p) {
    req.pass_index = p;
    EXPECT_EQ(a.complete(req), b.complete(req));
  }
  req.template_id = "relabel";
  EXPECT_EQ(a.complete(req), "0");
  req.group = "g.wav";
  req.subject = "g.wav@0.000000";
  EXPECT_EQ(a.complete(req), "2");
  req.subject = "g.wav@5.000000";
  EXPECT_EQ(a.complete(req), "1");
  req.template_id = "cooccurrence";
  EXPECT_THROW(a.complete(req), ConfigurationError);
  EXPECT_EQ(a.calls(), 14u);
}

TEST(Templates, RenderAndMissingValues) {
  PromptTemplates t(std::map<std::string, std::string>{{"x", "A {a} and {b}."}});
  EXPECT_EQ(t.render("x", {{"a", "1"}, {"b", "2"}}), "A 1 and 2.");
  EXPECT_THROW(t.render("x", {{"a", "1"}}), ConfigurationError);
  EXPECT_THROW(t.render("y", {}), ConfigurationError);

  testing::TempDir dir;
  util::write_atomic(dir.path() / "purification.txt", std::string("Is it {thing}?"));
  const auto loaded = PromptTemplates::load_directory(dir.path());
  EXPECT_TRUE(loaded.contains("purification"));
  EXPECT_EQ(loaded.render("purification", {{"thing", "one"}}), "Is it one?");
}

TEST(Templates, ShippedFilesMatchBuiltins) {
  const auto shipped = PromptTemplates::load_directory(SEPFORGE_PROMPTS_DIR);
  const auto builtin = default_templates();
  const std::map<std::string, std::string> vars{{"coarse_label", "Animal"},
                                                {"leaf_labels", "0: Dog, 1: Cat"},
                                                {"label_a", "Dog"},
                                                {"label_b", "Rain"}};
  for (const char* id : {"purification", "relabel", "cooccurrence"}) {
    EXPECT_EQ(shipped.render(id, vars), builtin.render(id, vars)) << id;
  }
}

TEST(Metadata, ParsesLabelLists) {
  const auto m = parse_metadata("{\"source_id\":\"a.wav\",\"labels\":[\"dog\"]}\n\n"
                                "{\"source_id\":\"b.wav\",\"labels\":[\"dog\",\"car\"]}\n");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at("b.wav").size(), 2u);
}

// The wire protocol against an in-process server.
class HttpProtocol : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/complete", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mu_);
        bodies_.push_back(body);
      }
      if (fail_) {
        res.status = 503;
        return;
      }
      res.set_content(nlohmann::json{{"text", " Single "}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/complete"; }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::vector<nlohmann::json> bodies_;
  bool fail_ = false;
};

TEST_F(HttpProtocol, InlineAudioRoundTrip) {
  HttpAnnotator client({url(), 2, AudioTransfer::kInline, std::chrono::seconds(10)});
  const auto audio = testing::mono(testing::sine(440, 16000, 1600, 0.5), 16000);
  AnnotatorRequest req;
  req.prompt = "hello";
  req.temperature = 1.0;
  req.audio = &audio;
  EXPECT_EQ(client.complete(req), " Single ");
  ASSERT_EQ(bodies_.size(), 1u);
  const auto& body = bodies_[0];
  EXPECT_EQ(body["prompt"], "hello");
  EXPECT_EQ(body["temperature"], 1.0);
  const auto decoded = wav::decode(util::base64_decode(body["audio"].get<std::string>()));
  EXPECT_EQ(decoded.sample_rate, 16000);
  ASSERT_EQ(decoded.samples.size(), audio.samples.size());
  for (std::size_t i = 0; i < audio.samples.size(); ++i) {
    ASSERT_NEAR(decoded.samples[i], audio.samples[i], 1e-7);
  }
}

TEST_F(HttpProtocol, PathTransferAndCascade) {
  HttpAnnotator client({url(), 4, AudioTransfer::kPath, std::chrono::seconds(10)});
  const auto audio = testing::mono(std::vector<double>(100, 0.1), 8000);
  auto templates = default_templates();
  AlignerOptions options;
  options.passes = 3;
  StageContext ctx{client, templates, options, [&]() -> const AudioBuffer& { return audio; },
                   "/data/s.wav"};
  const auto v = detect_polyphony(segment(), ctx);
  EXPECT_EQ(v.single_event, true);
  ASSERT_EQ(bodies_.size(), 3u);
  EXPECT_EQ(bodies_[0]["audio"], "/data/s.wav");
}

TEST_F(HttpProtocol, ServerErrorsBecomeTransientFailure) {
  fail_ = true;
  HttpAnnotator client({url(), 1, AudioTransfer::kInline, std::chrono::seconds(10)});
  AnnotatorRequest req;
  req.prompt = "p";
  EXPECT_THROW(client.complete(req), TransportError);
  RetryPolicy policy{3, std::chrono::milliseconds(1)};
  EXPECT_THROW(complete_with_retry(client, req, policy), TransientFailure);
  EXPECT_EQ(bodies_.size(), 4u);
  EXPECT_THROW(post_json("http://127.0.0.1:1/none", {}, std::chrono::seconds(2)), TransportError);
}

}  // namespace
}  // namespace sepforge::aligner
