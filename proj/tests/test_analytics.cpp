#include <random>

#include <gtest/gtest.h>

#include "pstcode/analytics.hpp"

using namespace pstcode;

namespace {

const Codebook& cb() {
  static const Codebook c = Codebook::load(std::string(PSTCODE_DATA_DIR) + "/codebook/pst_v1.toml");
  return c;
}

std::vector<std::string> random_utterances(std::mt19937& rng, int n) {
  static const std::vector<std::string> vocab{"we",   "could", "try",  "a",    "plan", "feel",
                                              "good", "today", "let's", "think", "about", "it"};
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    std::string s;
    int len = 1 + static_cast<int>(rng() % 9);
    for (int j = 0; j < len; ++j) s += (j ? " " : "") + vocab[rng() % vocab.size()];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Bigrams, StopwordsRemovedBeforePairing) {
  auto c = count_bigrams({"Let's brainstorm some ideas, brainstorm ideas now"}, {"let's", "some", "now"});
  EXPECT_EQ((c[{"brainstorm", "ideas"}]), 2);
  EXPECT_EQ((c[{"ideas", "brainstorm"}]), 1);
  auto top = rank_bigrams(c, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(format_bigram(top[0].first), "(brainstorm, ideas)");
}

TEST(Bigrams, TwoTokensGiveOneBigram) {
  TextGroups g{{"x", {"hello there"}}};
  auto t = top_bigrams(g, {}, 1);
  ASSERT_EQ(t["x"].size(), 1u);
  EXPECT_EQ(t["x"][0].second, 1);
  EXPECT_THROW(top_bigrams(g, {}, 0), ConfigError);
}

TEST(Bigrams, NeverCrossUtterances) {
  auto c = count_bigrams({"alpha beta", "gamma delta"}, {});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.count({"beta", "gamma"}), 0u);
}

TEST(Bigrams, TiesBreakLexicographically) {
  auto c = count_bigrams({"b c", "a b", "c d"}, {});
  auto r = rank_bigrams(c, 3);
  EXPECT_EQ(r[0].first, (Bigram{"a", "b"}));
  EXPECT_EQ(r[2].first, (Bigram{"c", "d"}));
}

TEST(Bigrams, AdditiveUnderConcatenationAndOrderFree) {
  std::mt19937 rng(12);
  std::set<std::string> stop{"a", "it"};
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_utterances(rng, 1 + trial % 7);
    auto b = random_utterances(rng, 1 + trial % 5);
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto ca = count_bigrams(a, stop), cb_ = count_bigrams(b, stop), cab = count_bigrams(ab, stop);
    auto sum = ca;
    for (const auto& [k, v] : cb_) sum[k] += v;
    EXPECT_EQ(sum, cab);
    std::shuffle(ab.begin(), ab.end(), rng);
    EXPECT_EQ(count_bigrams(ab, stop), cab);
  }
}

TEST(Lexicon, Examples) {
  auto lex = Lexicon::parse("affect: good\nthink: feel*\nempty:\n");
  TextGroups g{{"a", {"good good good"}}, {"b", {"I feel that feeling helps"}}};
  auto f = lexicon_frequencies(g, lex);
  EXPECT_DOUBLE_EQ(f.shares["a"]["affect"], 1.0);
  EXPECT_DOUBLE_EQ(f.shares["b"]["think"], 0.4);
  EXPECT_DOUBLE_EQ(f.shares["b"]["empty"], 0.0);
  EXPECT_EQ(lex.categories(), (std::vector<std::string>{"affect", "think", "empty"}));
}

TEST(Lexicon, RejectsMalformedPatterns) {
  EXPECT_THROW(Lexicon::parse("a: x*y"), ParseError);
  EXPECT_THROW(Lexicon::parse("a: *"), ParseError);
  EXPECT_THROW(Lexicon::parse("a: x\na: y"), ParseError);
  EXPECT_THROW(Lexicon::parse("a: Good"), ParseError);
}

TEST(Lexicon, EmptyUtterancesSkipped) {
  auto lex = Lexicon::parse("affect: good");
  auto f = lexicon_frequencies({{"g", {"good", "...", ""}}}, lex);
  EXPECT_EQ(f.utterances_used["g"], 1);
  EXPECT_EQ(f.skipped_empty["g"], 2);
  EXPECT_DOUBLE_EQ(f.shares["g"]["affect"], 1.0);
}

TEST(Lexicon, SharesBoundedAndMonotone) {
  std::mt19937 rng(3);
  auto lex = Lexicon::parse("c: we\nd: fe*\n");
  auto bigger = lex;
  bigger.add_pattern("c", "plan");
  bigger.add_pattern("d", "t*");
  for (int trial = 0; trial < 50; ++trial) {
    TextGroups g{{"x", random_utterances(rng, 1 + trial % 6)}};
    auto f = lexicon_frequencies(g, lex);
    auto h = lexicon_frequencies(g, bigger);
    for (const auto& c : lex.categories()) {
      EXPECT_GE(f.shares["x"][c], 0.0);
      EXPECT_LE(f.shares["x"][c], 1.0);
      EXPECT_LE(h.shares["x"][c], 1.0);
      EXPECT_GE(h.shares["x"][c], f.shares["x"][c]);
    }
  }
}

TEST(Lexicon, MatchesOracle) {
  std::mt19937 rng(8);
  auto lex = Lexicon::parse("c: we plan\nd: t* fe*\n");
  for (int trial = 0; trial < 30; ++trial) {
    auto utts = random_utterances(rng, 1 + trial % 5);
    auto f = lexicon_frequencies({{"x", utts}}, lex);
    for (const auto& c : lex.categories()) {
      double sum = 0;
      for (const auto& u : utts) {
        std::istringstream in(u);
        std::string w;
        int total = 0, hit = 0;
        while (in >> w) {
          ++total;
          for (const auto& p : lex.patterns(c)) {
            bool m = p.back() == '*' ? w.rfind(p.substr(0, p.size() - 1), 0) == 0 : w == p;
            if (m) {
              ++hit;
              break;
            }
          }
        }
        sum += static_cast<double>(hit) / total;
      }
      EXPECT_NEAR(f.shares["x"][c], sum / utts.size(), 1e-12);
    }
  }
}

TEST(Progression, SingleStrategyIsHundredPercent) {
  std::vector<VisitLabel> v(4, {1, {PsCoreStrategy::GenerateAlternatives, std::nullopt}});
  auto d = strategy_progression(v, StrategyDimension::Ps, cb());
  const auto& rows = d.per_visit.at(1);
  EXPECT_DOUBLE_EQ(rows[2].percentage, 100.0);
  for (const auto& r : d.per_visit.at(2)) EXPECT_EQ(r.count, 0);
  EXPECT_EQ(d.labeled.at(3), 0);
}

TEST(Progression, RowsSumToHundred) {
  std::mt19937 rng(21);
  std::vector<VisitLabel> v;
  for (int i = 0; i < 300; ++i) {
    StrategyLabel l;
    if (rng() % 3) l.ps = static_cast<PsCoreStrategy>(rng() % 5);
    if (rng() % 2) l.fac = static_cast<FacilitativeStrategy>(rng() % 4);
    v.push_back({1 + static_cast<int>(rng() % 3), l});
  }
  for (auto dim : {StrategyDimension::Ps, StrategyDimension::Fac})
    for (bool none : {false, true}) {
      auto d = strategy_progression(v, dim, cb(), none);
      for (const auto& [visit, rows] : d.per_visit) {
        double sum = 0;
        long long count = 0;
        for (const auto& r : rows) {
          if (r.included) sum += r.percentage;
          count += r.count;
        }
        EXPECT_NEAR(sum, 100.0, 1e-9);
        EXPECT_EQ(count, d.labeled.at(visit));
      }
    }
}

TEST(Progression, LineFormat) {
  EXPECT_EQ(distribution_line("Defining Problems and Goals", 33.4811, 1743),
            "Defining Problems and Goals — 33.48% (1,743)");
  EXPECT_EQ(distribution_cell(5.0, 12), "5.00% (12)");
}

TEST(Patterns, SharesUseDimensionTotals) {
  std::vector<std::pair<std::string, StrategyLabel>> labeled{
      {"let us define the goal", {PsCoreStrategy::DefineProblemsGoals, FacilitativeStrategy::SessionManagement}},
      {"define the goal again", {PsCoreStrategy::DefineProblemsGoals, std::nullopt}},
      {"how are you feeling", {std::nullopt, FacilitativeStrategy::TherapeuticEngagement}},
      {"okay then", {}}};
  auto lex = Lexicon::parse("affect: feel*\n");
  auto rows = pattern_table(labeled, cb(), {"the", "us"}, lex, 3, 1);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[1].strategy, "Defining Problems and Goals");
  EXPECT_EQ(rows[1].count, 2);
  EXPECT_DOUBLE_EQ(rows[1].percentage, 100.0);
  EXPECT_EQ(rows[1].bigrams[0].first, (Bigram{"define", "goal"}));
  EXPECT_DOUBLE_EQ(rows[6].percentage, 50.0);
  EXPECT_EQ(rows[9].strategy, "None");
  EXPECT_DOUBLE_EQ(rows[9].percentage, 25.0);
  EXPECT_EQ(rows[0].count, 0);
  auto csv = pattern_table_csv(rows);
  EXPECT_NE(csv.find("(define, goal)"), std::string::npos);
}
