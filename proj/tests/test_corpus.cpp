#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pstcode/corpus.hpp"

using namespace pstcode;

namespace {

std::string line(const std::string& session, const std::string& speaker,
                 const std::string& text, int visit = 1) {
  nlohmann::ordered_json j;
  j["session_id"] = session;
  j["visit_index"] = visit;
  j["speaker"] = speaker;
  j["text"] = text;
  return j.dump() + "\n";
}

std::vector<Utterance> demo() {
  return load_transcript(std::string(PSTCODE_DATA_DIR) + "/demo/corpus.jsonl");
}

}  // namespace

TEST(Corpus, WordCountIsWhitespaceTokens) {
  auto u = parse_transcript(line("s", "therapist", "oh good"));
  ASSERT_EQ(u.size(), 1u);
  EXPECT_EQ(u[0].word_count, 2u);
  EXPECT_EQ(text::word_count("  a\tb\n c  "), 3u);
}

TEST(Corpus, UnknownSpeakerReportsLine) {
  std::string content = line("s", "therapist", "hello there") + line("s", "robot", "beep");
  try {
    parse_transcript(content);
    FAIL() << "expected SpeakerError";
  } catch (const SpeakerError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("robot"), std::string::npos);
  }
}

TEST(Corpus, MalformedJsonReportsLine) {
  std::string content = line("s", "therapist", "fine") + "\n{not json\n";
  try {
    parse_transcript(content);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Corpus, RejectsBadFields) {
  EXPECT_THROW(parse_transcript(line("s", "therapist", "   ")), ParseError);
  EXPECT_THROW(parse_transcript(line("s", "therapist", "x", 4)), ParseError);
  EXPECT_THROW(parse_transcript(R"({"speaker":"client","text":"x"})"), ParseError);
  EXPECT_THROW(parse_transcript(R"({"session_id":"s","text":"x"})"), SpeakerError);
  EXPECT_THROW(parse_transcript(
                   R"({"session_id":"s","speaker":"client","text":"a b","word_count":3})"),
               ParseError);
  EXPECT_THROW(parse_transcript(R"({"session_id":"s","speaker":"client","text":"a","turn_index":2})"
                                "\n"
                                R"({"session_id":"s","speaker":"client","text":"b","turn_index":2})"),
               ParseError);
}

TEST(Corpus, MissingVisitDefaultsWithWarning) {
  std::vector<std::string> warnings;
  auto u = parse_transcript(R"({"session_id":"s","speaker":"client","text":"a"})"
                            "\n"
                            R"({"session_id":"s","speaker":"client","text":"b"})",
                            &warnings);
  EXPECT_EQ(u[0].visit_index, 1);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Corpus, MiniDemoHasSixTurns) {
  auto u = load_transcript(std::string(PSTCODE_DATA_DIR) + "/demo/mini.jsonl");
  ASSERT_EQ(u.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(u[i].turn_index, i);
  EXPECT_EQ(u[0].utterance_id, "mini#0000");
}

TEST(Corpus, FilterKeepsFiveWordTherapistTurns) {
  auto u = load_transcript(std::string(PSTCODE_DATA_DIR) + "/demo/mini.jsonl");
  auto kept = filter_therapist(u);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].text, "let us define the problem");
  for (const auto& k : kept) EXPECT_NE(k.text, "oh good");
}

TEST(Corpus, FilterIsIdempotent) {
  auto u = demo();
  auto once = filter_therapist(u);
  EXPECT_EQ(filter_therapist(once), once);
  EXPECT_THROW(filter_therapist(u, 0), ConfigError);
}

TEST(Corpus, SerializeRoundTrips) {
  auto u = demo();
  auto again = parse_transcript(serialize_transcript(u));
  EXPECT_EQ(again, u);
  EXPECT_EQ(serialize_transcript(again), serialize_transcript(u));
}

TEST(Corpus, ContextCases) {
  std::string content = line("s", "therapist", "t zero") + line("s", "client", "c one") +
                        line("s", "therapist", "t two");
  auto u = parse_transcript(content);
  auto w = build_context(u, "s#0002");
  ASSERT_TRUE(w.prev_therapist && w.prev_client);
  EXPECT_EQ(w.prev_therapist->turn_index, 0);
  EXPECT_EQ(w.prev_client->turn_index, 1);

  auto v = parse_transcript(line("s", "client", "c zero") + line("s", "client", "c one") +
                            line("s", "therapist", "t two"));
  auto x = build_context(v, "s#0002");
  EXPECT_FALSE(x.prev_therapist);
  ASSERT_TRUE(x.prev_client);
  EXPECT_EQ(x.prev_client->turn_index, 1);

  EXPECT_THROW(build_context(v, "s#0001"), LookupError);
  EXPECT_THROW(build_context(v, "nope"), LookupError);
}

TEST(Corpus, ContextDoesNotCrossSessions) {
  auto u = parse_transcript(line("a", "client", "hello") + line("b", "therapist", "hi"));
  auto w = build_context(u, "b#0000");
  EXPECT_FALSE(w.prev_client);
  EXPECT_FALSE(w.prev_therapist);
}

TEST(Corpus, AllContextsAgreeWithScan) {
  auto u = demo();
  auto all = build_all_contexts(u);
  std::size_t therapist = 0;
  for (const auto& t : u) {
    if (t.speaker != Speaker::Therapist) continue;
    ++therapist;
    auto [th, cl] = oracle::context_of(u, t);
    auto w = build_context(u, t.utterance_id);
    EXPECT_EQ(w.prev_therapist ? std::optional(w.prev_therapist->utterance_id) : std::nullopt, th);
    EXPECT_EQ(w.prev_client ? std::optional(w.prev_client->utterance_id) : std::nullopt, cl);
    const auto& a = all.at(t.utterance_id);
    EXPECT_EQ(a.prev_therapist ? std::optional(a.prev_therapist->utterance_id) : std::nullopt, th);
    EXPECT_EQ(a.prev_client ? std::optional(a.prev_client->utterance_id) : std::nullopt, cl);
  }
  EXPECT_EQ(all.size(), therapist);
}

TEST(Corpus, Stats) {
  auto mk = [](std::vector<std::size_t> wc) {
    std::vector<Utterance> v;
    for (auto w : wc) {
      Utterance u;
      u.word_count = w;
      v.push_back(u);
    }
    return v;
  };
  auto a = corpus_stats(mk({5, 5, 5}));
  EXPECT_DOUBLE_EQ(a.mean_words, 5.0);
  EXPECT_DOUBLE_EQ(a.std_words, 0.0);
  auto b = corpus_stats(mk({4, 8}));
  EXPECT_DOUBLE_EQ(b.mean_words, 6.0);
  EXPECT_DOUBLE_EQ(b.std_words, 2.0);
  EXPECT_THROW(corpus_stats({}), EmptyInputError);
}

TEST(Corpus, FilterPropertyOnRandomCorpora) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::string content;
    std::vector<bool> expect;
    int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      bool therapist = rng() % 2;
      int words = 1 + static_cast<int>(rng() % 9);
      std::string t;
      for (int k = 0; k < words; ++k) t += (k ? (rng() % 3 ? " " : "  \t") : "") + std::string("w");
      content += line("s" + std::to_string(rng() % 3), therapist ? "therapist" : "client", t);
      expect.push_back(therapist && words >= 5);
    }
    auto u = parse_transcript(content);
    auto kept = filter_therapist(u);
    std::size_t j = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (expect[i]) {
        ASSERT_LT(j, kept.size());
        EXPECT_EQ(kept[j++].utterance_id, u[i].utterance_id);
      }
    EXPECT_EQ(j, kept.size());
  }
}
