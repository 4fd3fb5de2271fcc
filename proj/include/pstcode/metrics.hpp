#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pstcode/annotator.hpp"
#include "pstcode/codebook.hpp"
#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

// Agreement

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // p_o
  double expected = 0.0;  // p_e
  /// Both labelings constant and equal (p_e = 1); kappa is defined as 1.
  bool degenerate = false;
};

/// Cohen's kappa between two labelings of the same items. Chance agreement
/// comes from the product of the two marginal distributions.
template <class L>
KappaResult cohen_kappa(std::span<const L> a, std::span<const L> b) {
  if (a.size() != b.size())
    throw ConfigError("cohen_kappa: labelings differ in length");
  if (a.empty()) throw EmptyInputError("cohen_kappa: no items");
  const auto n = static_cast<long long>(a.size());
  std::map<L, std::pair<long long, long long>> marginals;
  long long agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
    if (a[i] == b[i]) ++agree;
  }
  long long chance = 0;  // n^2 * p_e
  for (const auto& [label, m] : marginals) chance += m.first * m.second;

  KappaResult r;
  r.observed = static_cast<double>(agree) / static_cast<double>(n);
  r.expected = static_cast<double>(chance) / (static_cast<double>(n) * n);
  if (chance == n * n) {
    r.kappa = 1.0;
    r.degenerate = true;
    return r;
  }
  r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
  return r;
}

template <class L>
KappaResult cohen_kappa(const std::vector<L>& a, const std::vector<L>& b) {
  return cohen_kappa(std::span<const L>(a), std::span<const L>(b));
}

/// Kappa of the binary "is `cls`" labelings.
template <class L>
KappaResult one_vs_rest_kappa(const std::vector<L>& a, const std::vector<L>& b,
                              const L& cls) {
  std::vector<bool> ba, bb;
  for (const auto& x : a) ba.push_back(x == cls);
  for (const auto& x : b) bb.push_back(x == cls);
  std::vector<char> ca(ba.begin(), ba.end()), cb(bb.begin(), bb.end());
  return cohen_kappa(ca, cb);
}

// Classification scoring

struct ClassScore {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;    // gold count
  long long predicted = 0;  // predicted count
  long long true_positive = 0;
  /// precision set to 0 because nothing was predicted as this class
  bool no_predictions = false;
  /// recall set to 0 because the class never occurs in gold
  bool no_support = false;
};

inline ClassScore score_from_counts(std::string name, long long tp,
                                    long long predicted, long long support) {
  ClassScore s;
  s.name = std::move(name);
  s.true_positive = tp;
  s.predicted = predicted;
  s.support = support;
  s.no_predictions = predicted == 0;
  s.no_support = support == 0;
  s.precision = predicted ? static_cast<double>(tp) / predicted : 0.0;
  s.recall = support ? static_cast<double>(tp) / support : 0.0;
  s.f1 = s.precision + s.recall > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

/// Square count matrix, rows = gold class, columns = predicted class.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<long long>> counts;

  long long total() const {
    long long t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }
  long long trace() const {
    long long t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
  }
};

/// Confusion matrix and per-class scores over a closed class list. Every
/// label in gold/pred must be one of `classes`.
template <class L>
std::pair<ConfusionMatrix, std::vector<ClassScore>> score_classes(
    const std::vector<L>& gold, const std::vector<L>& pred,
    const std::vector<L>& classes, const std::vector<std::string>& names) {
  if (gold.size() != pred.size())
    throw ConfigError("score_classes: gold and predictions differ in length");
  std::map<L, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index.emplace(classes[i], i);
  ConfusionMatrix cm;
  cm.classes = names;
  cm.counts.assign(classes.size(), std::vector<long long>(classes.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = index.find(gold[i]);
    auto p = index.find(pred[i]);
    if (g == index.end() || p == index.end())
      throw ConfigError("score_classes: label outside the class list");
    ++cm.counts[g->second][p->second];
  }
  std::vector<ClassScore> scores;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    long long support = 0, predicted = 0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      support += cm.counts[c][k];
      predicted += cm.counts[k][c];
    }
    scores.push_back(score_from_counts(names[c], cm.counts[c][c], predicted, support));
  }
  return {std::move(cm), std::move(scores)};
}

/// sum(score * support) / sum(support).
inline double weighted_average(
    const std::vector<std::pair<double, long long>>& rows) {
  long double num = 0, den = 0;
  for (const auto& [score, support] : rows) {
    if (support < 0) throw ConfigError("weighted_average: negative support");
    num += static_cast<long double>(score) * support;
    den += support;
  }
  if (den == 0) throw EmptyInputError("weighted_average: zero total support");
  return static_cast<double>(num / den);
}

struct WeightedScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
};

inline WeightedScores weighted_scores(const std::vector<ClassScore>& rows) {
  std::vector<std::pair<double, long long>> p, r, f;
  WeightedScores w;
  for (const auto& s : rows) {
    p.emplace_back(s.precision, s.support);
    r.emplace_back(s.recall, s.support);
    f.emplace_back(s.f1, s.support);
    w.support += s.support;
  }
  w.precision = weighted_average(p);
  w.recall = weighted_average(r);
  w.f1 = weighted_average(f);
  return w;
}

// Gold files

struct GoldSet {
  std::string annotator_id;
  std::map<std::string, StrategyLabel> entries;
};

/// CSV with header columns utterance_id, ps_label, fac_label (any order,
/// extra columns ignored). Labels are names, ids or aliases; "None" allowed.
inline GoldSet parse_gold_csv(std::string_view content, const Codebook& cb,
                              std::string annotator_id = "gold") {
  auto rows = io::parse_csv(content);
  if (rows.empty()) throw EmptyInputError("gold file is empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i)
    col[std::string(text::trim(rows[0][i]))] = i;
  for (const char* need : {"utterance_id", "ps_label", "fac_label"})
    if (!col.count(need))
      throw ParseError(1, std::string("gold header lacks column ") + need);
  GoldSet g;
  g.annotator_id = std::move(annotator_id);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](const char* name) -> std::string {
      auto i = col[name];
      if (i >= row.size())
        throw ParseError(r + 1, std::string("missing ") + name);
      return std::string(text::trim(row[i]));
    };
    auto id = cell("utterance_id");
    if (id.empty()) throw ParseError(r + 1, "empty utterance_id");
    StrategyLabel l;
    auto ps = cell("ps_label");
    auto fac = cell("fac_label");
    if (!Codebook::is_absent_value(ps)) {
      l.ps = cb.find_ps(ps);
      if (!l.ps) throw ParseError(r + 1, "unknown PS label '" + ps + "'");
    }
    if (!Codebook::is_absent_value(fac)) {
      l.fac = cb.find_fac(fac);
      if (!l.fac)
        throw ParseError(r + 1, "unknown Facilitative label '" + fac + "'");
    }
    if (!g.entries.emplace(id, l).second)
      throw ParseError(r + 1, "duplicate utterance_id " + id);
  }
  return g;
}

inline GoldSet load_gold(const std::filesystem::path& path, const Codebook& cb) {
  try {
    return parse_gold_csv(io::read_file(path), cb, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(),
                     path.string() + ":" + std::to_string(e.line()));
  }
}

inline std::string gold_csv(const GoldSet& g, const Codebook& cb) {
  io::CsvWriter w;
  w.row({"utterance_id", "ps_label", "fac_label"});
  for (const auto& [id, l] : g.entries) {
    auto [ps, fac] = cb.canonical_name(l);
    w.row({id, ps, fac});
  }
  return w.str();
}

// Reports

enum class ScoreDimension { PsOnly, FacOnly, Overall };

inline std::string_view to_string(ScoreDimension d) {
  switch (d) {
    case ScoreDimension::PsOnly: return "ps";
    case ScoreDimension::FacOnly: return "fac";
    case ScoreDimension::Overall: return "overall";
  }
  return "?";
}

/// A model's answer for one utterance as seen by the scorer.
struct Prediction {
  RecordStatus status = RecordStatus::Ok;
  std::optional<StrategyLabel> label;
};

struct EvaluationReport {
  ScoreDimension dimension = ScoreDimension::Overall;
  /// PsOnly: 5 strategies + None. FacOnly: 4 strategies + None. Overall: the
  /// 9 strategies (each scored within its own dimension) + composite None.
  std::vector<ClassScore> per_class;
  WeightedScores weighted;
  /// PsOnly/FacOnly: the dimension's classes. Overall: all 30 composite
  /// labels, so trace/total is exact-match accuracy.
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  bool weighted_includes_none = false;
  long long scored = 0;
  long long unparsed_as_none = 0;
  long long missing_or_failed = 0;
  long long ignored_predictions = 0;
};

struct ReportOptions {
  /// Include the in-dimension None row in the PsOnly/FacOnly weighted
  /// average. The Overall average always includes the composite None row.
  bool none_in_dimension_weighted = false;
};

namespace detail {

inline std::string composite_name(const StrategyLabel& l, const Codebook& cb) {
  auto [ps, fac] = cb.canonical_name(l);
  return ps + " + " + fac;
}

}  // namespace detail

/// Scores predictions against gold in one dimension. Unparsed predictions
/// count as None (and are tallied); failed or missing predictions are left out
/// of scoring and tallied; predictions for ids outside gold are ignored.
inline EvaluationReport classification_report(
    const std::map<std::string, Prediction>& predictions, const GoldSet& gold,
    ScoreDimension dim, const Codebook& cb, const ReportOptions& opt = {}) {
  if (gold.entries.empty()) throw EmptyInputError("classification_report: empty gold");
  EvaluationReport rep;
  rep.dimension = dim;
  for (const auto& [id, p] : predictions)
    if (!gold.entries.count(id)) ++rep.ignored_predictions;

  std::vector<StrategyLabel> g, p;
  for (const auto& [id, gl] : gold.entries) {
    auto it = predictions.find(id);
    if (it == predictions.end() || it->second.status == RecordStatus::Failed) {
      ++rep.missing_or_failed;
      continue;
    }
    StrategyLabel pl;
    if (it->second.status == RecordStatus::Unparsed || !it->second.label) {
      ++rep.unparsed_as_none;
    } else {
      pl = *it->second.label;
    }
    g.push_back(gl);
    p.push_back(pl);
  }
  rep.scored = static_cast<long long>(g.size());
  if (g.empty())
    throw EmptyInputError("classification_report: no gold item has a prediction");

  // Per-dimension projections; -1 encodes "None in this dimension".
  auto ps_of = [](const StrategyLabel& l) { return l.ps ? static_cast<int>(*l.ps) : -1; };
  auto fac_of = [](const StrategyLabel& l) { return l.fac ? static_cast<int>(*l.fac) : -1; };
  auto project = [&](auto f, const std::vector<StrategyLabel>& v) {
    std::vector<int> out;
    for (const auto& l : v) out.push_back(f(l));
    return out;
  };

  if (dim == ScoreDimension::PsOnly || dim == ScoreDimension::FacOnly) {
    const bool ps = dim == ScoreDimension::PsOnly;
    std::vector<int> classes;
    std::vector<std::string> names;
    const std::size_t k = ps ? kPsStrategies.size() : kFacStrategies.size();
    for (std::size_t i = 0; i < k; ++i) {
      classes.push_back(static_cast<int>(i));
      names.push_back(ps ? cb.entry(kPsStrategies[i]).name
                         : cb.entry(kFacStrategies[i]).name);
    }
    classes.push_back(-1);
    names.push_back("None");
    auto gv = ps ? project(ps_of, g) : project(fac_of, g);
    auto pv = ps ? project(ps_of, p) : project(fac_of, p);
    auto [cm, scores] = score_classes(gv, pv, classes, names);
    rep.confusion = std::move(cm);
    rep.per_class = std::move(scores);
    rep.weighted_includes_none = opt.none_in_dimension_weighted;
    std::vector<ClassScore> weighted_rows(
        rep.per_class.begin(),
        rep.per_class.end() - (opt.none_in_dimension_weighted ? 0 : 1));
    long long support = 0;
    for (const auto& s : weighted_rows) support += s.support;
    if (support > 0) rep.weighted = weighted_scores(weighted_rows);
  } else {
    auto gps = project(ps_of, g), pps = project(ps_of, p);
    auto gfac = project(fac_of, g), pfac = project(fac_of, p);
    auto row = [&](const std::vector<int>& gv, const std::vector<int>& pv, int cls,
                   std::string name) {
      long long tp = 0, pred = 0, sup = 0;
      for (std::size_t i = 0; i < gv.size(); ++i) {
        tp += gv[i] == cls && pv[i] == cls;
        pred += pv[i] == cls;
        sup += gv[i] == cls;
      }
      return score_from_counts(std::move(name), tp, pred, sup);
    };
    for (std::size_t i = 0; i < kPsStrategies.size(); ++i)
      rep.per_class.push_back(row(gps, pps, static_cast<int>(i),
                                  cb.entry(kPsStrategies[i]).name));
    for (std::size_t i = 0; i < kFacStrategies.size(); ++i)
      rep.per_class.push_back(row(gfac, pfac, static_cast<int>(i),
                                  cb.entry(kFacStrategies[i]).name));
    std::vector<int> gn, pn;
    for (const auto& l : g) gn.push_back(l.is_none());
    for (const auto& l : p) pn.push_back(l.is_none());
    rep.per_class.push_back(row(gn, pn, 1, "None"));
    rep.weighted_includes_none = true;
    rep.weighted = weighted_scores(rep.per_class);

    auto all = all_composite_labels();
    std::vector<std::string> names;
    for (const auto& l : all) names.push_back(detail::composite_name(l, cb));
    rep.confusion = score_classes(g, p, all, names).first;
  }
  rep.accuracy = static_cast<double>(rep.confusion.trace()) /
                 static_cast<double>(rep.confusion.total());
  return rep;
}

inline std::string report_csv(const EvaluationReport& r) {
  io::CsvWriter w;
  w.row({"class", "precision", "recall", "f1", "support", "predicted", "flags"});
  auto f6 = [](double v) { return text::format_fixed(v, 6); };
  for (const auto& s : r.per_class) {
    std::string flags;
    if (s.no_predictions) flags += "no_predictions";
    if (s.no_support) flags += std::string(flags.empty() ? "" : ";") + "no_support";
    w.row({s.name, f6(s.precision), f6(s.recall), f6(s.f1),
           std::to_string(s.support), std::to_string(s.predicted), flags});
  }
  w.row({"weighted average", f6(r.weighted.precision), f6(r.weighted.recall),
         f6(r.weighted.f1), std::to_string(r.weighted.support), "",
         r.weighted_includes_none ? "includes_none" : "excludes_none"});
  return w.str();
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  io::CsvWriter w;
  io::CsvRow header{"gold\\pred"};
  header.insert(header.end(), cm.classes.begin(), cm.classes.end());
  w.row(header);
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    io::CsvRow row{cm.classes[i]};
    for (auto v : cm.counts[i]) row.push_back(std::to_string(v));
    w.row(row);
  }
  return w.str();
}

/// Plain-text table: PS Core rows, Facilitators rows, None, weighted average.
/// `rows` follow the Overall report order (5 PS, 4 FAC, None).
inline std::string render_strategy_table(const std::vector<ClassScore>& rows,
                                         const WeightedScores& weighted,
                                         const std::string& title = "") {
  std::ostringstream os;
  auto num = [](double v) { return text::format_fixed(v, 2); };
  auto line = [&](const std::string& cat, const std::string& name,
                  const std::string& p, const std::string& r,
                  const std::string& f, const std::string& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-13s %-34s %9s %7s %9s %9s\n", cat.c_str(),
                  name.c_str(), p.c_str(), r.c_str(), f.c_str(), s.c_str());
    os << buf;
  };
  if (!title.empty()) os << title << "\n";
  line("", "Strategies", "Precision", "Recall", "f1-score", "#Support");
  std::string rule(86, '-');
  os << rule << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == 5 || i == 9) os << rule << "\n";
    std::string cat = i == 0 ? "PS Core" : i == 5 ? "Facilitators" : "";
    const auto& s = rows[i];
    line(cat, s.name, num(s.precision), num(s.recall), num(s.f1),
         std::to_string(s.support));
  }
  os << rule << "\n";
  line("", "weighted average", num(weighted.precision), num(weighted.recall),
       num(weighted.f1), std::to_string(weighted.support));
  return os.str();
}

/// Reads a per-class table (class, precision, recall, f1, support) such as a
/// published results table; the weighted row, if present, is skipped.
inline std::vector<ClassScore> parse_per_class_csv(std::string_view content) {
  auto rows = io::parse_csv(content);
  if (rows.empty()) throw EmptyInputError("per-class table is empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i)
    col[text::to_lower(text::trim(rows[0][i]))] = i;
  for (const char* need : {"class", "precision", "recall", "f1", "support"})
    if (!col.count(need))
      throw ParseError(1, std::string("per-class header lacks column ") + need);
  std::vector<ClassScore> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](const char* n) {
      auto i = col[n];
      if (i >= row.size()) throw ParseError(r + 1, std::string("missing ") + n);
      return std::string(text::trim(row[i]));
    };
    ClassScore s;
    s.name = cell("class");
    if (text::to_lower(s.name) == "weighted average") continue;
    try {
      s.precision = std::stod(cell("precision"));
      s.recall = std::stod(cell("recall"));
      s.f1 = std::stod(cell("f1"));
      s.support = std::stoll(cell("support"));
    } catch (const std::logic_error&) {
      throw ParseError(r + 1, "non-numeric score");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Inter-annotator agreement

struct AgreementReport {
  std::size_t items = 0;
  KappaResult ps;
  KappaResult fac;
  KappaResult composite;
  /// One-vs-rest kappa: 5 PS strategies, 4 Facilitative strategies, None.
  std::vector<std::pair<std::string, KappaResult>> per_class;
};

inline AgreementReport agreement(const GoldSet& a, const GoldSet& b,
                                 const Codebook& cb) {
  if (a.entries.size() != b.entries.size())
    throw ConfigError("agreement: annotators labeled different utterance sets");
  std::vector<StrategyLabel> la, lb;
  for (const auto& [id, l] : a.entries) {
    auto it = b.entries.find(id);
    if (it == b.entries.end())
      throw ConfigError("agreement: " + id + " labeled by only one annotator");
    la.push_back(l);
    lb.push_back(it->second);
  }
  AgreementReport r;
  r.items = la.size();
  std::vector<int> pa, pb, fa, fb, na, nb;
  for (std::size_t i = 0; i < la.size(); ++i) {
    pa.push_back(la[i].ps ? static_cast<int>(*la[i].ps) : -1);
    pb.push_back(lb[i].ps ? static_cast<int>(*lb[i].ps) : -1);
    fa.push_back(la[i].fac ? static_cast<int>(*la[i].fac) : -1);
    fb.push_back(lb[i].fac ? static_cast<int>(*lb[i].fac) : -1);
    na.push_back(la[i].is_none());
    nb.push_back(lb[i].is_none());
  }
  r.ps = cohen_kappa(pa, pb);
  r.fac = cohen_kappa(fa, fb);
  r.composite = cohen_kappa(la, lb);
  for (std::size_t i = 0; i < kPsStrategies.size(); ++i)
    r.per_class.emplace_back(cb.entry(kPsStrategies[i]).name,
                             one_vs_rest_kappa(pa, pb, static_cast<int>(i)));
  for (std::size_t i = 0; i < kFacStrategies.size(); ++i)
    r.per_class.emplace_back(cb.entry(kFacStrategies[i]).name,
                             one_vs_rest_kappa(fa, fb, static_cast<int>(i)));
  r.per_class.emplace_back("None", one_vs_rest_kappa(na, nb, 1));
  return r;
}

inline std::string agreement_csv(const AgreementReport& r) {
  io::CsvWriter w;
  w.row({"scope", "kappa", "observed", "expected", "degenerate"});
  auto add = [&](const std::string& name, const KappaResult& k) {
    w.row({name, text::format_fixed(k.kappa, 6), text::format_fixed(k.observed, 6),
           text::format_fixed(k.expected, 6), k.degenerate ? "yes" : "no"});
  };
  add("ps", r.ps);
  add("fac", r.fac);
  add("composite", r.composite);
  for (const auto& [name, k] : r.per_class) add(name, k);
  return w.str();
}

}  // namespace pstcode
