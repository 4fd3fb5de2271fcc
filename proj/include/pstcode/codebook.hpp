#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pstcode/corpus.hpp"
#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/keyvalue_file.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

/// The five ADAPT steps, in order.
enum class PsCoreStrategy {
  PositiveMindset,
  DefineProblemsGoals,
  GenerateAlternatives,
  OutcomePredictionPlanning,
  TryOutSolutionPlan,
};

enum class FacilitativeStrategy {
  SocialCourtesies,
  SessionManagement,
  TherapeuticEngagement,
  TestReview,
};

inline constexpr std::array<PsCoreStrategy, 5> kPsStrategies{
    PsCoreStrategy::PositiveMindset, PsCoreStrategy::DefineProblemsGoals,
    PsCoreStrategy::GenerateAlternatives,
    PsCoreStrategy::OutcomePredictionPlanning,
    PsCoreStrategy::TryOutSolutionPlan};

inline constexpr std::array<FacilitativeStrategy, 4> kFacStrategies{
    FacilitativeStrategy::SocialCourtesies,
    FacilitativeStrategy::SessionManagement,
    FacilitativeStrategy::TherapeuticEngagement,
    FacilitativeStrategy::TestReview};

inline std::string_view id_of(PsCoreStrategy s) {
  constexpr std::array<std::string_view, 5> ids{
      "PositiveMindset", "DefineProblemsGoals", "GenerateAlternatives",
      "OutcomePredictionPlanning", "TryOutSolutionPlan"};
  return ids[static_cast<std::size_t>(s)];
}

inline std::string_view id_of(FacilitativeStrategy s) {
  constexpr std::array<std::string_view, 4> ids{
      "SocialCourtesies", "SessionManagement", "TherapeuticEngagement",
      "TestReview"};
  return ids[static_cast<std::size_t>(s)];
}

/// At most one strategy per dimension; both absent is the composite "None".
struct StrategyLabel {
  std::optional<PsCoreStrategy> ps;
  std::optional<FacilitativeStrategy> fac;

  bool is_none() const { return !ps && !fac; }
  auto operator<=>(const StrategyLabel&) const = default;
};

/// All 30 composite labels: 6 PS choices (incl. absent) x 5 FAC choices.
inline std::vector<StrategyLabel> all_composite_labels() {
  std::vector<StrategyLabel> out;
  std::vector<std::optional<PsCoreStrategy>> ps{std::nullopt};
  for (auto p : kPsStrategies) ps.emplace_back(p);
  std::vector<std::optional<FacilitativeStrategy>> fac{std::nullopt};
  for (auto f : kFacStrategies) fac.emplace_back(f);
  for (auto p : ps)
    for (auto f : fac) out.push_back({p, f});
  return out;
}

enum class ContextMode { NoContext, WithContext };

inline std::string_view to_string(ContextMode m) {
  return m == ContextMode::NoContext ? "none" : "two-prev";
}

inline ContextMode parse_context_mode(std::string_view s) {
  auto k = text::to_lower(text::trim(s));
  if (k == "none" || k == "no-context" || k == "nocontext")
    return ContextMode::NoContext;
  if (k == "two-prev" || k == "with-context" || k == "withcontext")
    return ContextMode::WithContext;
  throw ConfigError("unknown context mode '" + std::string(s) +
                    "' (expected none or two-prev)");
}

struct FewShotExample {
  std::string text;
  StrategyLabel label;
};

/// Everything sent to a model for one utterance. `context_rendering` is set
/// exactly when the prompt was rendered in WithContext mode.
struct PromptBundle {
  std::string system_instruction;
  std::string strategy_definitions;
  std::vector<FewShotExample> fewshot_examples;
  std::string fewshot_rendering;
  std::string target_rendering;
  std::optional<std::string> context_rendering;
  std::string output_format;

  std::string system_message() const { return system_instruction; }

  std::string user_message() const {
    std::string out = strategy_definitions;
    if (!fewshot_rendering.empty()) out += "\n\n" + fewshot_rendering;
    out += "\n\n";
    if (context_rendering) out += *context_rendering;
    out += target_rendering;
    out += "\n\n" + output_format;
    return out;
  }

  std::string full_text() const {
    return system_message() + "\n\n" + user_message();
  }
};

class Codebook {
public:
  struct Entry {
    std::string id;
    int number = 0;
    std::string name;
    std::string definition;
    std::vector<std::string> aliases;
    std::vector<std::string> cues;
  };

  static Codebook load(const std::filesystem::path& path) {
    try {
      return parse(io::read_file(path));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), e.detail(),
                       path.string() + ":" + std::to_string(e.line()));
    }
  }

  static Codebook parse(std::string_view content) {
    auto doc = kv::parse(content);
    Codebook cb;
    const auto& r = doc.root;
    cb.version_ = r.get<std::string>("version");
    cb.name_ = r.get_or<std::string>("name", "");
    cb.system_instruction_ = r.get<std::string>("system_instruction");
    cb.task_no_context_ = r.get<std::string>("task_no_context");
    cb.task_with_context_ = r.get<std::string>("task_with_context");
    cb.definitions_header_ = r.get<std::string>("definitions_header");
    cb.ps_header_ = r.get<std::string>("ps_header");
    cb.fac_header_ = r.get<std::string>("fac_header");
    cb.output_format_ = r.get<std::string>("output_format");

    std::array<bool, 5> have_ps{};
    std::array<bool, 4> have_fac{};
    for (const auto& t : doc.arrays["strategy"]) {
      Entry e;
      e.id = t.get<std::string>("id");
      e.number = static_cast<int>(t.get<long long>("number"));
      e.name = t.get<std::string>("name");
      e.definition = t.get<std::string>("definition");
      e.aliases = t.get_or<std::vector<std::string>>("aliases", {});
      e.cues = t.get_or<std::vector<std::string>>("cues", {});
      const auto& dim = t.get<std::string>("dimension");
      if (dim == "ps") {
        auto s = ps_from_id(e.id, t.line);
        auto i = static_cast<std::size_t>(s);
        if (have_ps[i]) throw ParseError(t.line, "duplicate strategy " + e.id);
        have_ps[i] = true;
        cb.ps_[i] = std::move(e);
      } else if (dim == "fac") {
        auto s = fac_from_id(e.id, t.line);
        auto i = static_cast<std::size_t>(s);
        if (have_fac[i]) throw ParseError(t.line, "duplicate strategy " + e.id);
        have_fac[i] = true;
        cb.fac_[i] = std::move(e);
      } else {
        throw ParseError(t.line, "dimension must be 'ps' or 'fac'");
      }
    }
    for (std::size_t i = 0; i < have_ps.size(); ++i)
      if (!have_ps[i])
        throw ParseError(0, "codebook lacks PS strategy " +
                                std::string(id_of(kPsStrategies[i])));
    for (std::size_t i = 0; i < have_fac.size(); ++i)
      if (!have_fac[i])
        throw ParseError(0, "codebook lacks Facilitative strategy " +
                                std::string(id_of(kFacStrategies[i])));

    cb.build_alias_tables();

    for (const auto& t : doc.arrays["example"]) {
      FewShotExample ex;
      ex.text = t.get<std::string>("text");
      auto ps = t.get<std::string>("ps");
      auto fac = t.get<std::string>("fac");
      if (ps != "None") ex.label.ps = ps_from_id(ps, t.line);
      if (fac != "None") ex.label.fac = fac_from_id(fac, t.line);
      cb.examples_.push_back(std::move(ex));
    }
    return cb;
  }

  const std::string& version() const { return version_; }
  const Entry& entry(PsCoreStrategy s) const {
    return ps_[static_cast<std::size_t>(s)];
  }
  const Entry& entry(FacilitativeStrategy s) const {
    return fac_[static_cast<std::size_t>(s)];
  }
  const std::vector<FewShotExample>& examples() const { return examples_; }

  std::string display_name(std::optional<PsCoreStrategy> s) const {
    return s ? entry(*s).name : "None";
  }
  std::string display_name(std::optional<FacilitativeStrategy> s) const {
    return s ? entry(*s).name : "None";
  }

  /// Display names (PS, Facilitative), "None" for an absent dimension.
  std::pair<std::string, std::string> canonical_name(
      const StrategyLabel& label) const {
    return {display_name(label.ps), display_name(label.fac)};
  }

  /// {"ps_core": ..., "facilitative": ...}, the response schema models are
  /// asked to produce.
  std::string label_json(const StrategyLabel& label) const {
    nlohmann::ordered_json j;
    auto [ps, fac] = canonical_name(label);
    j["ps_core"] = ps;
    j["facilitative"] = fac;
    return j.dump();
  }

  /// Case-insensitive lookup of a canonical name, id, or registered alias.
  /// Returns nullopt for unknown text; absent-values ("None", "N/A") are
  /// handled by the caller.
  std::optional<PsCoreStrategy> find_ps(std::string_view s) const {
    return find_in(ps_alias_, s);
  }
  std::optional<FacilitativeStrategy> find_fac(std::string_view s) const {
    return find_in(fac_alias_, s);
  }

  static bool is_absent_value(std::string_view s) {
    auto k = text::normalize_key(s);
    return k.empty() || k == "none" || k == "n a" || k == "na" ||
           k == "null" || k == "not applicable";
  }

  /// Parses a model response. Strict JSON (optionally embedded in prose or a
  /// code fence) is tried first, then labeled free text such as
  /// "PS: Defining Problems and Goals; Facilitative: None". Unknown label text
  /// is never mapped to a nearby label.
  StrategyLabel parse_label(std::string_view raw) const {
    if (auto from_json = try_parse_json(raw)) return *from_json;
    return parse_free_text(raw);
  }

  PromptBundle render_prompt(const Utterance& target,
                             const ContextWindow* ctx,
                             ContextMode mode) const {
    if (mode == ContextMode::WithContext && !ctx)
      throw ConfigError("context mode two-prev requires a context window");
    PromptBundle b;
    b.system_instruction =
        system_instruction_ + "\n\n" +
        (mode == ContextMode::WithContext ? task_with_context_
                                          : task_no_context_);
    b.strategy_definitions = render_definitions();
    b.fewshot_examples = examples_;
    if (!examples_.empty()) {
      std::string fs = "Examples:";
      for (const auto& ex : examples_) {
        fs += "\nUtterance: \"" + ex.text + "\"\nAnswer: " +
              label_json(ex.label);
      }
      b.fewshot_rendering = std::move(fs);
    }
    if (mode == ContextMode::WithContext) {
      auto quote = [](const std::optional<Utterance>& u) {
        return u ? "\"" + u->text + "\"" : std::string("(none)");
      };
      std::string c;
      // Chronological order of the two context utterances.
      bool therapist_first =
          ctx->prev_therapist &&
          (!ctx->prev_client ||
           ctx->prev_therapist->turn_index < ctx->prev_client->turn_index);
      std::string t_line =
          "Therapist's previous utterance: " + quote(ctx->prev_therapist) + "\n";
      std::string c_line =
          "Client's previous utterance: " + quote(ctx->prev_client) + "\n";
      c = therapist_first ? t_line + c_line : c_line + t_line;
      b.context_rendering = std::move(c);
      b.target_rendering =
          "Therapist's most recent utterance (annotate only this one): \"" +
          target.text + "\"";
    } else {
      b.target_rendering = "Therapist's utterance: \"" + target.text + "\"";
    }
    b.output_format = output_format_;
    return b;
  }

  std::string render_definitions() const {
    std::string out = definitions_header_ + "\n\n" + ps_header_;
    for (const auto& e : ps_)
      out += "\n" + std::to_string(e.number) + "- " + e.name + ": " +
             e.definition;
    out += "\n\n" + fac_header_;
    for (const auto& e : fac_)
      out += "\n" + std::to_string(e.number) + "- " + e.name + ": " +
             e.definition;
    return out;
  }

private:
  template <class Enum>
  using AliasTable = std::map<std::string, Enum>;

  static PsCoreStrategy ps_from_id(std::string_view id, std::size_t line) {
    for (auto s : kPsStrategies)
      if (id_of(s) == id) return s;
    throw ParseError(line, "unknown PS strategy id '" + std::string(id) + "'");
  }

  static FacilitativeStrategy fac_from_id(std::string_view id,
                                          std::size_t line) {
    for (auto s : kFacStrategies)
      if (id_of(s) == id) return s;
    throw ParseError(line,
                     "unknown Facilitative strategy id '" + std::string(id) +
                         "'");
  }

  template <class Enum, std::size_t N>
  static void fill_aliases(AliasTable<Enum>& table,
                           const std::array<Entry, N>& entries,
                           const std::array<Enum, N>& values) {
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<std::string> names = entries[i].aliases;
      names.push_back(entries[i].name);
      names.push_back(entries[i].id);
      for (const auto& n : names) {
        auto key = text::normalize_key(n);
        if (key.empty()) continue;
        auto [it, inserted] = table.emplace(key, values[i]);
        if (!inserted && it->second != values[i])
          throw ParseError(0, "alias '" + n + "' names two strategies");
      }
    }
  }

  void build_alias_tables() {
    ps_alias_.clear();
    fac_alias_.clear();
    fill_aliases(ps_alias_, ps_, kPsStrategies);
    fill_aliases(fac_alias_, fac_, kFacStrategies);
  }

  template <class Enum>
  static std::optional<Enum> find_in(const AliasTable<Enum>& table,
                                     std::string_view s) {
    auto key = text::normalize_key(s);
    if (auto it = table.find(key); it != table.end()) return it->second;
    // "3- Generating Alternative Solutions" / "Generating ... (Step Three)"
    static const std::regex leading_number(R"(^\d+ )");
    static const std::regex trailing_step(R"( step (one|two|three|four|five|\d)$)");
    auto stripped = std::regex_replace(key, leading_number, "");
    stripped = std::regex_replace(stripped, trailing_step, "");
    if (stripped != key)
      if (auto it = table.find(stripped); it != table.end()) return it->second;
    return std::nullopt;
  }

  enum class Slot { Ps, Fac, Unknown };

  static Slot classify_key(std::string_view key) {
    auto k = text::normalize_key(key);
    if (k.rfind("fac", 0) == 0) return Slot::Fac;
    if (k.rfind("ps", 0) == 0 || k.find("core") != std::string::npos ||
        k.rfind("problem solving", 0) == 0)
      return Slot::Ps;
    return Slot::Unknown;
  }

  struct Assigner {
    const Codebook& cb;
    std::string_view raw;
    StrategyLabel label;
    bool saw_ps = false;
    bool saw_fac = false;

    void assign(Slot slot, std::string_view value) {
      auto v = text::trim(value);
      if (slot == Slot::Ps) {
        if (saw_ps) throw LabelParseFailure(std::string(raw), "two PS labels");
        saw_ps = true;
        if (is_absent_value(v)) return;
        auto s = cb.find_ps(v);
        if (!s)
          throw LabelParseFailure(std::string(raw),
                                  "'" + std::string(v) + "' is not a PS strategy");
        label.ps = s;
      } else {
        if (saw_fac)
          throw LabelParseFailure(std::string(raw), "two Facilitative labels");
        saw_fac = true;
        if (is_absent_value(v)) return;
        auto s = cb.find_fac(v);
        if (!s)
          throw LabelParseFailure(
              std::string(raw),
              "'" + std::string(v) + "' is not a Facilitative strategy");
        label.fac = s;
      }
    }
  };

  std::optional<StrategyLabel> try_parse_json(std::string_view raw) const {
    auto open = raw.find('{');
    auto close = raw.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos ||
        close < open)
      return std::nullopt;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw.substr(open, close - open + 1));
    } catch (const nlohmann::json::parse_error&) {
      return std::nullopt;
    }
    if (!j.is_object()) return std::nullopt;
    Assigner a{*this, raw, {}};
    for (const auto& [key, value] : j.items()) {
      auto slot = classify_key(key);
      if (slot == Slot::Unknown) continue;
      if (value.is_null()) {
        a.assign(slot, "None");
      } else if (value.is_string()) {
        a.assign(slot, value.get<std::string>());
      } else {
        throw LabelParseFailure(std::string(raw),
                                "label for '" + key + "' is not a string");
      }
    }
    if (!a.saw_ps && !a.saw_fac)
      throw LabelParseFailure(std::string(raw),
                              "JSON object names neither dimension");
    return a.label;
  }

  StrategyLabel parse_free_text(std::string_view raw) const {
    static const std::regex marker(
        R"((ps[ _-]*core|pscore|ps|facilitative|facilitators|facilitator|fac)(\s+(strategy|strategies|category))?\s*[:=])",
        std::regex::icase);
    std::string s(raw);
    std::vector<std::pair<Slot, std::pair<std::size_t, std::size_t>>> marks;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), marker);
         it != std::sregex_iterator(); ++it) {
      auto pos = static_cast<std::size_t>(it->position(0));
      // Only accept markers at a word boundary.
      if (pos > 0 && std::isalnum(static_cast<unsigned char>(s[pos - 1])))
        continue;
      marks.push_back({classify_key(it->str(1)),
                       {pos, pos + static_cast<std::size_t>(it->length(0))}});
    }

    Assigner a{*this, raw, {}};
    if (marks.empty()) {
      auto whole = text::trim(strip_decoration(s));
      if (is_absent_value(whole) && !whole.empty()) return {};
      auto ps = find_ps(whole);
      auto fac = find_fac(whole);
      if (ps && !fac) return {ps, std::nullopt};
      if (fac && !ps) return {std::nullopt, fac};
      throw LabelParseFailure(std::string(raw), "no labeled dimension found");
    }
    auto leading = text::trim(strip_decoration(s.substr(0, marks[0].second.first)));
    if (!leading.empty())
      throw LabelParseFailure(std::string(raw),
                              "unexpected text before first label");
    for (std::size_t i = 0; i < marks.size(); ++i) {
      auto begin = marks[i].second.second;
      auto end = i + 1 < marks.size() ? marks[i + 1].second.first : s.size();
      a.assign(marks[i].first, strip_decoration(s.substr(begin, end - begin)));
    }
    return a.label;
  }

  /// Drops separators, quotes and markdown emphasis around a value.
  static std::string strip_decoration(std::string_view v) {
    auto is_deco = [](char c) {
      return text::is_space(c) || c == ',' || c == ';' || c == '.' ||
             c == '"' || c == '\'' || c == '*' || c == '`';
    };
    while (!v.empty() && is_deco(v.front())) v.remove_prefix(1);
    while (!v.empty() && is_deco(v.back())) v.remove_suffix(1);
    return std::string(v);
  }

  std::string version_;
  std::string name_;
  std::string system_instruction_;
  std::string task_no_context_;
  std::string task_with_context_;
  std::string definitions_header_;
  std::string ps_header_;
  std::string fac_header_;
  std::string output_format_;
  std::array<Entry, 5> ps_;
  std::array<Entry, 4> fac_;
  AliasTable<PsCoreStrategy> ps_alias_;
  AliasTable<FacilitativeStrategy> fac_alias_;
  std::vector<FewShotExample> examples_;
};

}  // namespace pstcode
