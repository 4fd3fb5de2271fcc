#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pstcode/codebook.hpp"
#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

/// Utterance texts keyed by group (usually a strategy display name).
using TextGroups = std::map<std::string, std::vector<std::string>>;

// Stopwords

inline std::set<std::string> parse_stopwords(std::string_view content) {
  std::set<std::string> out;
  for (const auto& line : io::split_lines(content)) {
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    for (const auto& w : text::split_whitespace(t)) out.insert(text::to_lower(w));
  }
  return out;
}

inline std::set<std::string> load_stopwords(const std::filesystem::path& p) {
  return parse_stopwords(io::read_file(p));
}

// Bigrams

using Bigram = std::pair<std::string, std::string>;

/// Bigram counts over consecutive non-stopword tokens, never crossing an
/// utterance boundary.
inline std::map<Bigram, long long> count_bigrams(
    const std::vector<std::string>& utterances,
    const std::set<std::string>& stopwords) {
  std::map<Bigram, long long> counts;
  for (const auto& u : utterances) {
    std::vector<std::string> kept;
    for (auto& t : text::content_tokens(u))
      if (!stopwords.count(t)) kept.push_back(std::move(t));
    for (std::size_t i = 1; i < kept.size(); ++i) ++counts[{kept[i - 1], kept[i]}];
  }
  return counts;
}

/// Highest counts first; ties in lexicographic bigram order.
inline std::vector<std::pair<Bigram, long long>> rank_bigrams(
    const std::map<Bigram, long long>& counts, std::size_t k) {
  std::vector<std::pair<Bigram, long long>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (v.size() > k) v.resize(k);
  return v;
}

inline std::map<std::string, std::vector<std::pair<Bigram, long long>>> top_bigrams(
    const TextGroups& groups, const std::set<std::string>& stopwords,
    std::size_t k) {
  if (k < 1) throw ConfigError("top_bigrams: k must be at least 1");
  std::map<std::string, std::vector<std::pair<Bigram, long long>>> out;
  for (const auto& [g, utts] : groups)
    out[g] = rank_bigrams(count_bigrams(utts, stopwords), k);
  return out;
}

inline std::string format_bigram(const Bigram& b) {
  return "(" + b.first + ", " + b.second + ")";
}

// Lexicon

class Lexicon {
public:
  /// "Category: pat1 pat2 ..." per line; '#' starts a comment line. A
  /// category may be listed with no patterns.
  static Lexicon parse(std::string_view content) {
    Lexicon lex;
    std::size_t lineno = 0;
    for (const auto& raw : io::split_lines(content)) {
      ++lineno;
      auto line = text::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      auto colon = line.find(':');
      if (colon == std::string_view::npos)
        throw ParseError(lineno, "expected 'Category: patterns'");
      std::string name(text::trim(line.substr(0, colon)));
      if (name.empty()) throw ParseError(lineno, "empty category name");
      if (lex.categories_.count(name))
        throw ParseError(lineno, "duplicate category " + name);
      std::vector<std::string> pats;
      for (const auto& p : text::split_whitespace(line.substr(colon + 1))) {
        auto star = p.find('*');
        if (star != std::string::npos && star + 1 != p.size())
          throw ParseError(lineno, "'*' allowed only at the end: " + p);
        if (p == "*") throw ParseError(lineno, "empty pattern");
        if (text::to_lower(p) != p)
          throw ParseError(lineno, "patterns must be lowercase: " + p);
        pats.push_back(p);
      }
      lex.order_.push_back(name);
      lex.categories_.emplace(std::move(name), std::move(pats));
    }
    return lex;
  }

  static Lexicon load(const std::filesystem::path& p) {
    try {
      return parse(io::read_file(p));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), e.detail(),
                       p.string() + ":" + std::to_string(e.line()));
    }
  }

  void add_pattern(const std::string& category, std::string pattern) {
    if (!categories_.count(category)) order_.push_back(category);
    categories_[category].push_back(std::move(pattern));
  }

  /// Category names in file order.
  const std::vector<std::string>& categories() const { return order_; }
  const std::vector<std::string>& patterns(const std::string& c) const {
    return categories_.at(c);
  }

  static bool matches(std::string_view token, std::string_view pattern) {
    if (!pattern.empty() && pattern.back() == '*')
      return token.starts_with(pattern.substr(0, pattern.size() - 1));
    return token == pattern;
  }

  bool matches_category(std::string_view token, const std::string& c) const {
    for (const auto& p : categories_.at(c))
      if (matches(token, p)) return true;
    return false;
  }

private:
  std::vector<std::string> order_;
  std::map<std::string, std::vector<std::string>> categories_;
};

struct LexiconFrequencies {
  /// group -> category -> mean over utterances of matched/total tokens
  std::map<std::string, std::map<std::string, double>> shares;
  std::map<std::string, long long> utterances_used;
  std::map<std::string, long long> skipped_empty;
};

inline LexiconFrequencies lexicon_frequencies(const TextGroups& groups,
                                              const Lexicon& lex) {
  LexiconFrequencies out;
  for (const auto& [g, utts] : groups) {
    auto& shares = out.shares[g];
    for (const auto& c : lex.categories()) shares[c] = 0.0;
    long long used = 0, skipped = 0;
    std::map<std::string, long double> sums;
    for (const auto& u : utts) {
      auto toks = text::content_tokens(u);
      if (toks.empty()) {
        ++skipped;
        continue;
      }
      ++used;
      for (const auto& c : lex.categories()) {
        long long hit = 0;
        for (const auto& t : toks) hit += lex.matches_category(t, c);
        sums[c] += static_cast<long double>(hit) / toks.size();
      }
    }
    if (used)
      for (const auto& c : lex.categories())
        shares[c] = static_cast<double>(sums[c] / used);
    out.utterances_used[g] = used;
    out.skipped_empty[g] = skipped;
  }
  return out;
}

/// Categories of one group ordered by share (descending), ties by name.
inline std::vector<std::pair<std::string, double>> ranked_categories(
    const std::map<std::string, double>& shares) {
  std::vector<std::pair<std::string, double>> v(shares.begin(), shares.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return v;
}

inline std::string lexicon_csv(const LexiconFrequencies& f) {
  io::CsvWriter w;
  w.row({"group", "category", "mean_share", "utterances", "skipped_empty"});
  for (const auto& [g, cats] : f.shares)
    for (const auto& [c, s] : cats)
      w.row({g, c, text::format_fixed(s, 6), std::to_string(f.utterances_used.at(g)),
             std::to_string(f.skipped_empty.at(g))});
  return w.str();
}

// Visit progression

enum class StrategyDimension { Ps, Fac };

inline std::string_view to_string(StrategyDimension d) {
  return d == StrategyDimension::Ps ? "ps" : "fac";
}

struct DistributionRow {
  std::string category;
  long long count = 0;
  /// Share of the visit's normalized total; for an excluded None row, its
  /// share of all labeled utterances in the visit.
  double percentage = 0.0;
  bool included = true;
};

struct StrategyDistribution {
  StrategyDimension dimension = StrategyDimension::Ps;
  bool none_included = false;
  /// visit -> strategies in codebook order, then None
  std::map<int, std::vector<DistributionRow>> per_visit;
  std::map<int, long long> labeled;
};

struct VisitLabel {
  int visit_index = 1;
  StrategyLabel label;
};

inline StrategyDistribution strategy_progression(const std::vector<VisitLabel>& labels,
                                                 StrategyDimension dim,
                                                 const Codebook& cb,
                                                 bool include_none = false,
                                                 std::vector<int> visits = {1, 2, 3}) {
  StrategyDistribution d;
  d.dimension = dim;
  d.none_included = include_none;
  std::vector<std::string> names;
  if (dim == StrategyDimension::Ps)
    for (auto s : kPsStrategies) names.push_back(cb.entry(s).name);
  else
    for (auto s : kFacStrategies) names.push_back(cb.entry(s).name);
  names.push_back("None");
  const std::size_t none = names.size() - 1;

  for (const auto& l : labels)
    if (std::find(visits.begin(), visits.end(), l.visit_index) == visits.end())
      visits.push_back(l.visit_index);
  std::sort(visits.begin(), visits.end());

  for (int v : visits) {
    std::vector<long long> counts(names.size(), 0);
    for (const auto& l : labels) {
      if (l.visit_index != v) continue;
      std::size_t i = none;
      if (dim == StrategyDimension::Ps && l.label.ps)
        i = static_cast<std::size_t>(*l.label.ps);
      if (dim == StrategyDimension::Fac && l.label.fac)
        i = static_cast<std::size_t>(*l.label.fac);
      ++counts[i];
    }
    long long all = 0, norm = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      all += counts[i];
      if (i != none || include_none) norm += counts[i];
    }
    auto& rows = d.per_visit[v];
    for (std::size_t i = 0; i < counts.size(); ++i) {
      DistributionRow r;
      r.category = names[i];
      r.count = counts[i];
      r.included = i != none || include_none;
      long long den = r.included ? norm : all;
      r.percentage = den ? 100.0 * static_cast<double>(counts[i]) / den : 0.0;
      rows.push_back(std::move(r));
    }
    d.labeled[v] = all;
  }
  return d;
}

inline std::string progression_csv(const std::vector<StrategyDistribution>& ds) {
  io::CsvWriter w;
  w.row({"dimension", "visit", "category", "count", "percentage", "normalized"});
  for (const auto& d : ds)
    for (const auto& [v, rows] : d.per_visit)
      for (const auto& r : rows)
        w.row({std::string(to_string(d.dimension)), std::to_string(v), r.category,
               std::to_string(r.count), text::format_fixed(r.percentage, 2),
               r.included ? "yes" : "no"});
  return w.str();
}

/// "Defining Problems and Goals — 33.48% (1,743)"
inline std::string distribution_line(const std::string& name, double pct,
                                     long long count) {
  return name + " — " + text::format_fixed(pct, 2) + "% (" +
         text::format_thousands(static_cast<std::uint64_t>(count)) + ")";
}

/// "33.48% (1,743)"
inline std::string distribution_cell(double pct, long long count) {
  return text::format_fixed(pct, 2) + "% (" +
         text::format_thousands(static_cast<std::uint64_t>(count)) + ")";
}

// Summary table: one row per strategy with its top bigrams, top lexicon
// categories and corpus-wide share. A PS strategy's share is over
// PS-labeled utterances, a Facilitative one's over Facilitative-labeled
// utterances, and None's over all labeled utterances.

struct PatternRow {
  std::string strategy;
  std::vector<std::pair<Bigram, long long>> bigrams;
  std::vector<std::pair<std::string, double>> categories;
  long long count = 0;
  double percentage = 0.0;
};

/// Groups texts by strategy: each utterance joins its PS group and its
/// Facilitative group; composite None forms the "None" group.
inline TextGroups group_by_strategy(
    const std::vector<std::pair<std::string, StrategyLabel>>& labeled,
    const Codebook& cb) {
  TextGroups g;
  for (const auto& [t, l] : labeled) {
    if (l.ps) g[cb.entry(*l.ps).name].push_back(t);
    if (l.fac) g[cb.entry(*l.fac).name].push_back(t);
    if (l.is_none()) g["None"].push_back(t);
  }
  return g;
}

inline std::vector<PatternRow> pattern_table(
    const std::vector<std::pair<std::string, StrategyLabel>>& labeled,
    const Codebook& cb, const std::set<std::string>& stopwords,
    const Lexicon& lex, std::size_t k_bigrams, std::size_t k_categories) {
  auto groups = group_by_strategy(labeled, cb);
  auto bigrams = top_bigrams(groups, stopwords, k_bigrams);
  auto lexf = lexicon_frequencies(groups, lex);
  long long ps_total = 0, fac_total = 0;
  for (const auto& [t, l] : labeled) {
    ps_total += l.ps.has_value();
    fac_total += l.fac.has_value();
  }
  const auto all = static_cast<long long>(labeled.size());

  std::vector<PatternRow> rows;
  auto add = [&](const std::string& name, long long den) {
    PatternRow r;
    r.strategy = name;
    auto it = groups.find(name);
    r.count = it == groups.end() ? 0 : static_cast<long long>(it->second.size());
    r.percentage = den ? 100.0 * static_cast<double>(r.count) / den : 0.0;
    if (it != groups.end()) {
      r.bigrams = bigrams[name];
      auto cats = ranked_categories(lexf.shares[name]);
      if (cats.size() > k_categories) cats.resize(k_categories);
      r.categories = std::move(cats);
    }
    rows.push_back(std::move(r));
  };
  for (auto s : kPsStrategies) add(cb.entry(s).name, ps_total);
  for (auto s : kFacStrategies) add(cb.entry(s).name, fac_total);
  add("None", all);
  return rows;
}

inline std::string pattern_table_csv(const std::vector<PatternRow>& rows) {
  io::CsvWriter w;
  w.row({"strategy", "top_bigrams", "top_categories", "distribution"});
  for (const auto& r : rows) {
    std::string b, c;
    for (const auto& [bg, n] : r.bigrams)
      b += (b.empty() ? "" : "; ") + format_bigram(bg) + " " + std::to_string(n);
    for (const auto& [name, s] : r.categories)
      c += (c.empty() ? "" : "; ") + name + " " + text::format_fixed(s, 4);
    w.row({r.strategy, b, c, distribution_cell(r.percentage, r.count)});
  }
  return w.str();
}

inline std::string bigrams_csv(
    const std::map<std::string, std::vector<std::pair<Bigram, long long>>>& top) {
  io::CsvWriter w;
  w.row({"group", "rank", "first", "second", "count"});
  for (const auto& [g, list] : top)
    for (std::size_t i = 0; i < list.size(); ++i)
      w.row({g, std::to_string(i + 1), list[i].first.first, list[i].first.second,
             std::to_string(list[i].second)});
  return w.str();
}

}  // namespace pstcode
