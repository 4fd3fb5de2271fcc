#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pstcode/metrics.hpp"

using namespace pstcode;

namespace {

const Codebook& cb() {
  static const Codebook c = Codebook::load(std::string(PSTCODE_DATA_DIR) + "/codebook/pst_v1.toml");
  return c;
}

GoldSet gold_of(const std::vector<StrategyLabel>& labels) {
  GoldSet g;
  for (std::size_t i = 0; i < labels.size(); ++i) g.entries["u" + std::to_string(100 + i)] = labels[i];
  return g;
}

std::map<std::string, Prediction> preds_of(const std::vector<StrategyLabel>& labels) {
  std::map<std::string, Prediction> p;
  for (std::size_t i = 0; i < labels.size(); ++i)
    p["u" + std::to_string(100 + i)] = Prediction{RecordStatus::Ok, labels[i]};
  return p;
}

StrategyLabel L(std::optional<PsCoreStrategy> p, std::optional<FacilitativeStrategy> f) {
  return {p, f};
}

}  // namespace

TEST(Kappa, Examples) {
  std::vector<char> a{'A', 'A', 'B', 'B'}, b{'A', 'B', 'A', 'B'};
  EXPECT_DOUBLE_EQ(cohen_kappa(a, a).kappa, 1.0);
  EXPECT_NEAR(cohen_kappa(a, b).kappa, 0.0, 1e-15);
  std::vector<char> c{'A', 'A', 'A'};
  auto k = cohen_kappa(c, c);
  EXPECT_EQ(k.kappa, 1.0);
  EXPECT_TRUE(k.degenerate);
  EXPECT_THROW(cohen_kappa(std::vector<char>{}, std::vector<char>{}), EmptyInputError);
  EXPECT_THROW(cohen_kappa(a, c), ConfigError);
}

TEST(Kappa, OracleSymmetryRelabeling) {
  std::mt19937 rng(17);
  for (int t = 0; t < 200; ++t) {
    int k = 1 + static_cast<int>(rng() % 10);
    int n = 1 + static_cast<int>(rng() % 50);
    std::vector<int> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng() % k);
      b[i] = rng() % 3 ? a[i] : static_cast<int>(rng() % k);
    }
    double kap = cohen_kappa(a, b).kappa;
    EXPECT_NEAR(kap, oracle::kappa(a, b, k), 1e-12);
    EXPECT_NEAR(cohen_kappa(b, a).kappa, kap, 1e-12);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> ra(n), rb(n);
    for (int i = 0; i < n; ++i) {
      ra[i] = perm[a[i]];
      rb[i] = perm[b[i]];
    }
    EXPECT_NEAR(cohen_kappa(ra, rb).kappa, kap, 1e-12);
  }
}

TEST(Scores, MatchNaiveCounting) {
  std::mt19937 rng(23);
  for (int t = 0; t < 100; ++t) {
    int k = 2 + static_cast<int>(rng() % 6);
    int n = 1 + static_cast<int>(rng() % 40);
    std::vector<int> g(n), p(n), classes(k);
    std::vector<std::string> names(k);
    for (int c = 0; c < k; ++c) {
      classes[c] = c;
      names[c] = "c" + std::to_string(c);
    }
    // Keep the last class out of predictions half the time.
    int pk = rng() % 2 ? k - 1 : k;
    for (int i = 0; i < n; ++i) {
      g[i] = static_cast<int>(rng() % k);
      p[i] = static_cast<int>(rng() % pk);
    }
    auto [cm, scores] = score_classes(g, p, classes, names);
    for (int c = 0; c < k; ++c) {
      auto o = oracle::prf(g, p, c);
      EXPECT_NEAR(scores[c].precision, o.p, 1e-12);
      EXPECT_NEAR(scores[c].recall, o.r, 1e-12);
      EXPECT_NEAR(scores[c].f1, o.f, 1e-12);
      EXPECT_EQ(scores[c].support, o.support);
      EXPECT_EQ(scores[c].no_predictions, o.predicted == 0);
      for (int d = 0; d < k; ++d) EXPECT_EQ(cm.counts[c][d], oracle::confusion_cell(g, p, c, d));
    }
    EXPECT_EQ(cm.total(), n);
  }
}

TEST(WeightedAverage, Examples) {
  EXPECT_DOUBLE_EQ(weighted_average({{1.0, 10}}), 1.0);
  EXPECT_DOUBLE_EQ(weighted_average({{0.8, 1}, {0.2, 1}}), 0.5);
  EXPECT_THROW(weighted_average({{0.5, 0}}), EmptyInputError);
  EXPECT_THROW(weighted_average({}), EmptyInputError);
}

TEST(Report, PerfectPredictionsScoreOne) {
  std::vector<StrategyLabel> labels{
      L(PsCoreStrategy::PositiveMindset, std::nullopt),
      L(std::nullopt, FacilitativeStrategy::SocialCourtesies),
      L(PsCoreStrategy::TryOutSolutionPlan, FacilitativeStrategy::SessionManagement),
      L(std::nullopt, std::nullopt)};
  auto g = gold_of(labels);
  auto p = preds_of(labels);
  for (auto d : {ScoreDimension::PsOnly, ScoreDimension::FacOnly, ScoreDimension::Overall}) {
    auto r = classification_report(p, g, d, cb());
    EXPECT_DOUBLE_EQ(r.weighted.precision, 1.0);
    EXPECT_DOUBLE_EQ(r.weighted.recall, 1.0);
    EXPECT_DOUBLE_EQ(r.weighted.f1, 1.0);
    EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
    for (const auto& s : r.per_class)
      if (s.support > 0) EXPECT_DOUBLE_EQ(s.f1, 1.0) << s.name;
  }
}

TEST(Report, ZeroPredictionClassHasPrecisionZeroAndFlag) {
  std::vector<StrategyLabel> gold{L(PsCoreStrategy::PositiveMindset, std::nullopt),
                                  L(PsCoreStrategy::GenerateAlternatives, std::nullopt)};
  std::vector<StrategyLabel> pred{L(PsCoreStrategy::PositiveMindset, std::nullopt),
                                  L(PsCoreStrategy::PositiveMindset, std::nullopt)};
  auto r = classification_report(preds_of(pred), gold_of(gold), ScoreDimension::PsOnly, cb());
  const auto& gen = r.per_class[2];
  EXPECT_EQ(gen.name, "Generating Alternative Solutions");
  EXPECT_EQ(gen.precision, 0.0);
  EXPECT_TRUE(gen.no_predictions);
  const auto& trial = r.per_class[4];
  EXPECT_TRUE(trial.no_support);
  EXPECT_EQ(trial.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.accuracy,
                   static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total()));
}

TEST(Report, UnparsedCountsAsNoneFailedIsExcluded) {
  std::vector<StrategyLabel> gold{L(std::nullopt, std::nullopt),
                                  L(PsCoreStrategy::PositiveMindset, std::nullopt),
                                  L(std::nullopt, FacilitativeStrategy::TestReview)};
  auto g = gold_of(gold);
  std::map<std::string, Prediction> p;
  p["u100"] = Prediction{RecordStatus::Unparsed, std::nullopt};
  p["u101"] = Prediction{RecordStatus::Failed, std::nullopt};
  p["zzz"] = Prediction{RecordStatus::Ok, StrategyLabel{}};
  auto r = classification_report(p, g, ScoreDimension::Overall, cb());
  EXPECT_EQ(r.scored, 1);
  EXPECT_EQ(r.unparsed_as_none, 1);
  EXPECT_EQ(r.missing_or_failed, 2);
  EXPECT_EQ(r.ignored_predictions, 1);
  EXPECT_DOUBLE_EQ(r.per_class.back().f1, 1.0);
  EXPECT_EQ(r.confusion.classes.size(), 30u);
}

TEST(Report, OverallRowsAreDimensionRowsPlusCompositeNone) {
  std::mt19937 rng(8);
  auto all = all_composite_labels();
  std::vector<StrategyLabel> g, p;
  for (int i = 0; i < 120; ++i) {
    g.push_back(all[rng() % all.size()]);
    p.push_back(rng() % 2 ? g.back() : all[rng() % all.size()]);
  }
  auto ps = classification_report(preds_of(p), gold_of(g), ScoreDimension::PsOnly, cb());
  auto fac = classification_report(preds_of(p), gold_of(g), ScoreDimension::FacOnly, cb());
  auto ov = classification_report(preds_of(p), gold_of(g), ScoreDimension::Overall, cb());
  ASSERT_EQ(ov.per_class.size(), 10u);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(ov.per_class[i].f1, ps.per_class[i].f1);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(ov.per_class[5 + i].f1, fac.per_class[i].f1);
  long long none = 0;
  for (const auto& l : g) none += l.is_none();
  EXPECT_EQ(ov.per_class[9].support, none);
  // Row sums of the composite confusion matrix are the gold label counts.
  for (std::size_t r = 0; r < all.size(); ++r) {
    long long row = 0, expect = 0;
    for (auto v : ov.confusion.counts[r]) row += v;
    for (const auto& l : g) expect += l == all[r];
    EXPECT_EQ(row, expect);
  }
  EXPECT_FALSE(ps.weighted_includes_none);
  ReportOptions with_none;
  with_none.none_in_dimension_weighted = true;
  auto ps2 = classification_report(preds_of(p), gold_of(g), ScoreDimension::PsOnly, cb(), with_none);
  EXPECT_EQ(ps2.weighted.support, 120);
}

TEST(Gold, ParsesNamesAliasesAndNone) {
  auto g = parse_gold_csv("utterance_id,ps_label,fac_label\n"
                          "a,Defining Problems and Goals,None\n"
                          "b,Step Five,Test Review\n"
                          "c,N/A,Session Management\n",
                          cb());
  ASSERT_EQ(g.entries.size(), 3u);
  EXPECT_EQ(g.entries["a"].ps, PsCoreStrategy::DefineProblemsGoals);
  EXPECT_EQ(g.entries["b"].ps, PsCoreStrategy::TryOutSolutionPlan);
  EXPECT_EQ(g.entries["c"].fac, FacilitativeStrategy::SessionManagement);
  EXPECT_EQ(parse_gold_csv(gold_csv(g, cb()), cb()).entries, g.entries);
}

TEST(Gold, ErrorsCarryLines) {
  try {
    parse_gold_csv("utterance_id,ps_label,fac_label\na,None,None\nb,Mind Reading,None\n", cb());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_gold_csv("id,ps\n", cb()), ParseError);
  EXPECT_THROW(parse_gold_csv("utterance_id,ps_label,fac_label\na,None,None\na,None,None\n", cb()),
               ParseError);
}

TEST(Agreement, IdenticalFilesGiveOne) {
  auto g = load_gold(std::string(PSTCODE_DATA_DIR) + "/demo/gold.csv", cb());
  auto r = agreement(g, g, cb());
  EXPECT_DOUBLE_EQ(r.ps.kappa, 1.0);
  EXPECT_DOUBLE_EQ(r.fac.kappa, 1.0);
  EXPECT_DOUBLE_EQ(r.composite.kappa, 1.0);
  for (const auto& [name, k] : r.per_class) EXPECT_DOUBLE_EQ(k.kappa, 1.0) << name;
  auto h = load_gold(std::string(PSTCODE_DATA_DIR) + "/demo/gold_second.csv", cb());
  auto d = agreement(g, h, cb());
  EXPECT_LT(d.composite.kappa, 1.0);
  EXPECT_GT(d.composite.kappa, 0.5);
  GoldSet small;
  small.entries["x"] = {};
  EXPECT_THROW(agreement(g, small, cb()), ConfigError);
}

TEST(PerClassTable, WeightedRowOfPublishedTable) {
  auto rows = parse_per_class_csv(io::read_file(std::string(PSTCODE_DATA_DIR) + "/fixtures/table3.csv"));
  ASSERT_EQ(rows.size(), 10u);
  auto w = weighted_scores(rows);
  EXPECT_EQ(w.support, 525);
  EXPECT_NEAR(w.precision, 0.77, 0.005);
  EXPECT_NEAR(w.recall, 0.79, 0.005);
  EXPECT_NEAR(w.f1, 0.76, 0.005);
  auto table = render_strategy_table(rows, w);
  EXPECT_NE(table.find("weighted average"), std::string::npos);
  EXPECT_NE(table.find("0.77"), std::string::npos);
}
