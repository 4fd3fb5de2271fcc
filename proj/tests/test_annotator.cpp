#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pstcode/annotator.hpp"
#include "pstcode/mock_backend.hpp"

using namespace pstcode;
namespace fs = std::filesystem;

namespace {

const Codebook& cb() {
  static const Codebook c = Codebook::load(std::string(PSTCODE_DATA_DIR) + "/codebook/pst_v1.toml");
  return c;
}

std::vector<Utterance> three() {
  return parse_transcript(
      R"({"session_id":"s","speaker":"therapist","text":"Let's brainstorm some ideas for the evenings."})"
      "\n"
      R"({"session_id":"s","speaker":"therapist","text":"Thank you so much for your time today."})"
      "\n"
      R"({"session_id":"s","speaker":"therapist","text":"Right, and that was on Tuesday afternoon?"})");
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pstcode_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Counts calls and can answer from a script or fail.
class ScriptedBackend : public Backend {
public:
  std::function<std::string(const ChatRequest&, int)> answer;
  std::atomic<int> calls{0};
  std::string complete(const ChatRequest& r) override { return answer(r, ++calls); }
};

AnnotationRecord rec(const std::string& id, int run, std::optional<StrategyLabel> l) {
  AnnotationRecord r;
  r.utterance_id = id;
  r.model_id = "m";
  r.run_id = run;
  r.status = l ? RecordStatus::Ok : RecordStatus::Unparsed;
  r.label = l;
  return r;
}

}  // namespace

TEST(Annotator, MockRunsAreDeterministic) {
  auto u = three();
  MockBackend mock(cb(), 0.0);
  AnnotateOptions opt;
  opt.runs = 5;
  auto a = annotate_corpus(u, u, cb(), mock, opt);
  ASSERT_EQ(a.size(), 15u);
  auto first = serialize_records(a, cb());
  opt.parallelism = 4;
  auto b = annotate_corpus(u, u, cb(), mock, opt);
  EXPECT_EQ(serialize_records(b, cb()), first);
  // Without noise every run of an utterance answers the same.
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].status, RecordStatus::Ok);
    EXPECT_EQ(a[i].label, a[i - i % 5].label);
    EXPECT_EQ(a[i].run_id, static_cast<int>(i % 5) + 1);
  }
  EXPECT_EQ(a[0].label->ps, PsCoreStrategy::GenerateAlternatives);
  EXPECT_EQ(a[5].label->fac, FacilitativeStrategy::SocialCourtesies);
  EXPECT_TRUE(a[10].label->is_none());
}

TEST(Annotator, NoisyMockIsStillReproducible) {
  auto u = three();
  MockBackend mock(cb(), 0.5);
  AnnotateOptions opt;
  opt.runs = 5;
  opt.seed = 11;
  EXPECT_EQ(serialize_records(annotate_corpus(u, u, cb(), mock, opt), cb()),
            serialize_records(annotate_corpus(u, u, cb(), mock, opt), cb()));
}

TEST(Annotator, RecordsRoundTripThroughJsonl) {
  auto u = three();
  MockBackend mock(cb(), 0.3);
  AnnotateOptions opt;
  opt.runs = 3;
  auto recs = annotate_corpus(u, u, cb(), mock, opt);
  auto text = serialize_records(recs, cb());
  std::vector<AnnotationRecord> back;
  for (auto& p : parse_records(text, cb())) back.push_back(p.record);
  EXPECT_EQ(serialize_records(back, cb()), text);
}

TEST(Annotator, ReplayMissingResponseFailsThatRecord) {
  auto u = three();
  auto cache = std::make_shared<ResponseCache>();
  {
    CachingBackend fill(std::make_unique<MockBackend>(cb(), 0.0), cache);
    std::vector<Utterance> two(u.begin(), u.begin() + 2);
    annotate_corpus(two, u, cb(), fill, {});
  }
  ReplayBackend replay(cache);
  auto recs = annotate_corpus(u, u, cb(), replay, {});
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].status, RecordStatus::Ok);
  EXPECT_EQ(recs[1].status, RecordStatus::Ok);
  EXPECT_EQ(recs[2].status, RecordStatus::Failed);
  EXPECT_EQ(recs[2].attempts, 3);
}

TEST(Annotator, ResponseCachePersists) {
  auto dir = temp_dir("cache");
  auto u = three();
  {
    auto cache = std::make_shared<ResponseCache>(dir / "cache.jsonl");
    CachingBackend fill(std::make_unique<MockBackend>(cb(), 0.0), cache);
    annotate_corpus(u, u, cb(), fill, {});
  }
  auto cache = std::make_shared<ResponseCache>(dir / "cache.jsonl");
  EXPECT_EQ(cache->size(), 3u);
  ReplayBackend replay(cache);
  for (const auto& r : annotate_corpus(u, u, cb(), replay, {}))
    EXPECT_EQ(r.status, RecordStatus::Ok);
  fs::remove_all(dir);
}

TEST(Annotator, GarbageIsRetriedThenUnparsed) {
  auto u = three();
  ScriptedBackend b;
  b.answer = [](const ChatRequest&, int) { return std::string("I cannot decide."); };
  AnnotateOptions opt;
  opt.retry_limit = 2;
  std::vector<Utterance> one(u.begin(), u.begin() + 1);
  auto recs = annotate_corpus(one, u, cb(), b, opt);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].status, RecordStatus::Unparsed);
  EXPECT_EQ(recs[0].attempts, 3);
  EXPECT_EQ(recs[0].raw_response, "I cannot decide.");
  EXPECT_FALSE(recs[0].label);
}

TEST(Annotator, TransportErrorsAreFailed) {
  auto u = three();
  ScriptedBackend b;
  b.answer = [](const ChatRequest&, int) -> std::string { throw TransportError("down"); };
  AnnotateOptions opt;
  opt.retry_limit = 1;
  auto recs = annotate_corpus(u, u, cb(), b, opt);
  for (const auto& r : recs) {
    EXPECT_EQ(r.status, RecordStatus::Failed);
    EXPECT_EQ(r.attempts, 2);
    EXPECT_NE(r.error.find("down"), std::string::npos);
  }
}

TEST(Annotator, KillAndResumeQueriesOnlyRemainingPairs) {
  auto dir = temp_dir("resume");
  auto u = three();
  AnnotateOptions opt;
  opt.runs = 4;
  opt.journal = dir / "journal.jsonl";
  MockBackend mock(cb(), 0.2);

  ScriptedBackend dying;
  dying.answer = [&](const ChatRequest& r, int n) -> std::string {
    if (n > 5) throw std::runtime_error("killed");
    return mock.complete(r);
  };
  EXPECT_THROW(annotate_corpus(u, u, cb(), dying, opt), std::runtime_error);
  auto partial = load_records(*opt.journal, cb());
  ASSERT_EQ(partial.size(), 5u);

  ScriptedBackend rest;
  rest.answer = [&](const ChatRequest& r, int) { return mock.complete(r); };
  auto resumed = annotate_corpus(u, u, cb(), rest, opt);
  EXPECT_EQ(rest.calls.load(), 12 - 5);
  ASSERT_EQ(resumed.size(), 12u);

  AnnotateOptions clean = opt;
  clean.journal.reset();
  EXPECT_EQ(serialize_records(resumed, cb()),
            serialize_records(annotate_corpus(u, u, cb(), mock, clean), cb()));
  fs::remove_all(dir);
}

TEST(Annotator, JournalIgnoresOtherModelsAndFailures) {
  auto dir = temp_dir("journal");
  auto u = three();
  AnnotateOptions opt;
  opt.journal = dir / "j.jsonl";
  ScriptedBackend down;
  down.answer = [](const ChatRequest&, int) -> std::string { throw TransportError("x"); };
  annotate_corpus(u, u, cb(), down, opt);
  MockBackend mock(cb(), 0.0);
  ScriptedBackend count;
  count.answer = [&](const ChatRequest& r, int) { return mock.complete(r); };
  auto recs = annotate_corpus(u, u, cb(), count, opt);
  EXPECT_EQ(count.calls.load(), 3);
  opt.model_id = "other";
  count.calls = 0;
  annotate_corpus(u, u, cb(), count, opt);
  EXPECT_EQ(count.calls.load(), 3);
  fs::remove_all(dir);
}

TEST(Entropy, Examples) {
  EXPECT_EQ(label_entropy(std::vector<char>{'A', 'A', 'A', 'A', 'A'}), 0.0);
  EXPECT_NEAR(label_entropy(std::vector<char>{'A', 'A', 'A', 'A', 'B'}), 0.500402, 1e-6);
  EXPECT_NEAR(label_entropy(std::string("ABCDE")), std::log(5.0), 1e-12);
  EXPECT_THROW(label_entropy(std::vector<int>{}), EmptyInputError);
}

TEST(Entropy, MatchesOracleAndInvariances) {
  std::mt19937 rng(3);
  for (int t = 0; t < 300; ++t) {
    int k = 1 + static_cast<int>(rng() % 10);
    int n = 1 + static_cast<int>(rng() % 12);
    std::vector<int> xs(n);
    for (auto& x : xs) x = static_cast<int>(rng() % k);
    double h = label_entropy(xs);
    EXPECT_NEAR(h, oracle::entropy(xs), 1e-9);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(n)) + 1e-12);
    auto shuffled = xs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(label_entropy(shuffled), h);
    auto tripled = xs;
    for (int r = 0; r < 2; ++r) tripled.insert(tripled.end(), xs.begin(), xs.end());
    EXPECT_NEAR(label_entropy(tripled), h, 1e-12);
  }
}

TEST(Consistency, MeanOfPerUtteranceEntropies) {
  StrategyLabel a{PsCoreStrategy::PositiveMindset, std::nullopt};
  StrategyLabel b{PsCoreStrategy::DefineProblemsGoals, std::nullopt};
  std::vector<AnnotationRecord> recs;
  for (int r = 1; r <= 5; ++r) recs.push_back(rec("u1", r, a));
  for (int r = 1; r <= 5; ++r) recs.push_back(rec("u2", r, r == 5 ? b : a));
  auto rep = consistency_report(recs, LabelDimension::Composite);
  EXPECT_EQ(rep.per_utterance_entropy.at("u1"), 0.0);
  EXPECT_NEAR(rep.per_utterance_entropy.at("u2"), 0.500402, 1e-6);
  EXPECT_NEAR(rep.mean_entropy, 0.250201, 1e-6);
  EXPECT_NEAR(rep.std_entropy, 0.250201, 1e-6);
  // The facilitative dimension never varies here.
  EXPECT_EQ(consistency_report(recs, LabelDimension::FacOnly).mean_entropy, 0.0);
}

TEST(Consistency, UnparsedIsItsOwnCategoryAndFailedIsExcluded) {
  StrategyLabel a{PsCoreStrategy::PositiveMindset, std::nullopt};
  std::vector<AnnotationRecord> recs{rec("u", 1, a), rec("u", 2, std::nullopt)};
  auto f = rec("u", 3, a);
  f.status = RecordStatus::Failed;
  f.label.reset();
  recs.push_back(f);
  auto rep = consistency_report(recs, LabelDimension::Composite);
  EXPECT_NEAR(rep.per_utterance_entropy.at("u"), std::log(2.0), 1e-12);
  EXPECT_EQ(rep.failed_excluded, 1u);
  recs.push_back(rec("v", 1, a));
  rep = consistency_report(recs, LabelDimension::Composite);
  EXPECT_TRUE(rep.single_run.count("v"));
}

TEST(Consistency, RejectsMixedModels) {
  auto r1 = rec("u", 1, StrategyLabel{});
  auto r2 = rec("u", 2, StrategyLabel{});
  r2.model_id = "other";
  EXPECT_THROW(consistency_report({r1, r2}, LabelDimension::Composite), ConfigError);
}

TEST(Consistency, ProjectionNeverIncreasesEntropy) {
  auto all = all_composite_labels();
  for (const auto& x : all)
    for (const auto& y : all) {
      std::vector<AnnotationRecord> recs{rec("u", 1, x), rec("u", 2, y)};
      double c = consistency_report(recs, LabelDimension::Composite).mean_entropy;
      EXPECT_LE(consistency_report(recs, LabelDimension::PsOnly).mean_entropy, c + 1e-15);
      EXPECT_LE(consistency_report(recs, LabelDimension::FacOnly).mean_entropy, c + 1e-15);
    }
}
