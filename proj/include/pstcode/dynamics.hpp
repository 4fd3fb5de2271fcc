#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pstcode/annotator.hpp"
#include "pstcode/backend.hpp"
#include "pstcode/codebook.hpp"
#include "pstcode/corpus.hpp"
#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

enum class Autonomy { Directive, NonDirective, NA };
enum class SelfDisclosure { Immediate, Nonimmediate, NA };
enum class QuestionType { OpenEnded, ClosedEnded, NA };

inline std::string_view to_string(Autonomy a) {
  constexpr std::array<std::string_view, 3> n{"Directive", "Non-Directive", "N/A"};
  return n[static_cast<std::size_t>(a)];
}
inline std::string_view to_string(SelfDisclosure s) {
  constexpr std::array<std::string_view, 3> n{"Immediate", "Nonimmediate", "N/A"};
  return n[static_cast<std::size_t>(s)];
}
inline std::string_view to_string(QuestionType q) {
  constexpr std::array<std::string_view, 3> n{"Open-Ended", "Closed-Ended", "N/A"};
  return n[static_cast<std::size_t>(q)];
}

struct Metaphor {
  bool present = false;
  std::optional<std::string> phrase;
  std::optional<std::string> source_domain;
  std::optional<std::string> target_domain;

  bool operator==(const Metaphor&) const = default;
};

struct DynamicsLabel {
  Autonomy autonomy = Autonomy::NA;
  SelfDisclosure self_disclosure = SelfDisclosure::NA;
  QuestionType question_type = QuestionType::NA;
  Metaphor metaphor;

  bool operator==(const DynamicsLabel&) const = default;
};

namespace detail {

inline bool is_na(const std::string& k) {
  return k == "n a" || k == "na" || k == "none" || k == "null" ||
         k == "not applicable";
}

inline Autonomy parse_autonomy(const nlohmann::json& v, std::string_view raw) {
  if (v.is_null()) return Autonomy::NA;
  if (!v.is_string())
    throw LabelParseFailure(std::string(raw), "autonomy must be a string");
  auto k = text::normalize_key(v.get<std::string>());
  if (k == "directive") return Autonomy::Directive;
  if (k == "non directive" || k == "nondirective") return Autonomy::NonDirective;
  if (is_na(k)) return Autonomy::NA;
  throw LabelParseFailure(std::string(raw),
                          "autonomy '" + v.get<std::string>() + "'");
}

inline SelfDisclosure parse_self_disclosure(const nlohmann::json& v,
                                            std::string_view raw) {
  if (v.is_null()) return SelfDisclosure::NA;
  // Integer codes accepted as aliases: 0 = N/A, 1 = Immediate, 2 = Nonimmediate.
  if (v.is_number_integer()) {
    switch (v.get<int>()) {
      case 0: return SelfDisclosure::NA;
      case 1: return SelfDisclosure::Immediate;
      case 2: return SelfDisclosure::Nonimmediate;
      default:
        throw LabelParseFailure(std::string(raw), "self disclosure code");
    }
  }
  if (!v.is_string())
    throw LabelParseFailure(std::string(raw), "self disclosure must be a string");
  auto k = text::normalize_key(v.get<std::string>());
  if (k == "immediate" || k == "immediate self disclosure")
    return SelfDisclosure::Immediate;
  if (k == "nonimmediate" || k == "non immediate" ||
      k == "nonimmediate self disclosure" || k == "non immediate self disclosure")
    return SelfDisclosure::Nonimmediate;
  if (is_na(k) || k == "0") return SelfDisclosure::NA;
  if (k == "1") return SelfDisclosure::Immediate;
  if (k == "2") return SelfDisclosure::Nonimmediate;
  throw LabelParseFailure(std::string(raw),
                          "self disclosure '" + v.get<std::string>() + "'");
}

inline QuestionType parse_question_type(const nlohmann::json& v,
                                        std::string_view raw) {
  if (v.is_null()) return QuestionType::NA;
  if (!v.is_string())
    throw LabelParseFailure(std::string(raw), "question type must be a string");
  auto k = text::normalize_key(v.get<std::string>());
  if (k == "open ended" || k == "openended" || k == "open")
    return QuestionType::OpenEnded;
  if (k == "closed ended" || k == "closedended" || k == "closed" ||
      k == "close ended")
    return QuestionType::ClosedEnded;
  if (is_na(k)) return QuestionType::NA;
  throw LabelParseFailure(std::string(raw),
                          "question type '" + v.get<std::string>() + "'");
}

/// First span enclosed in matching quotes. An opening quote must start a
/// word so apostrophes inside words ("it's") are not taken as delimiters.
inline std::optional<std::string> first_quoted(std::string_view s) {
  struct Pair {
    std::string_view open, close;
  };
  const std::array<Pair, 4> pairs{{{"\"", "\""},
                                   {"'", "'"},
                                   {"\xE2\x80\x9C", "\xE2\x80\x9D"},
                                   {"\xE2\x80\x98", "\xE2\x80\x99"}}};
  std::optional<std::pair<std::size_t, std::string>> best;
  for (const auto& p : pairs) {
    std::size_t from = 0;
    while (true) {
      auto o = s.find(p.open, from);
      if (o == std::string_view::npos) break;
      bool word_start = o == 0 || !text::is_word_char(s[o - 1]);
      auto start = o + p.open.size();
      if (!word_start) {
        from = start;
        continue;
      }
      std::size_t search = start;
      std::optional<std::size_t> close;
      while (true) {
        auto c = s.find(p.close, search);
        if (c == std::string_view::npos) break;
        auto after = c + p.close.size();
        if (after >= s.size() || !text::is_word_char(s[after]) ||
            p.close != "'") {
          close = c;
          break;
        }
        search = after;
      }
      if (close && *close > start) {
        if (!best || o < best->first)
          best = {o, std::string(s.substr(start, *close - start))};
      }
      break;
    }
  }
  if (!best) return std::nullopt;
  auto t = std::string(text::trim(best->second));
  if (t.empty()) return std::nullopt;
  return t;
}

inline std::string clean_domain(std::string d) {
  d = std::string(text::trim(d));
  static const std::regex prefix(R"(^(the\s+)?(domain\s+of\s+)?)",
                                 std::regex::icase);
  static const std::regex suffix(R"(\s+domain$)", std::regex::icase);
  d = std::regex_replace(d, prefix, "");
  d = std::regex_replace(d, suffix, "");
  return text::to_lower(text::trim(d));
}

inline Metaphor parse_metaphor(const nlohmann::json& v, std::string_view raw) {
  Metaphor m;
  if (v.is_null()) return m;
  if (v.is_boolean()) {
    if (v.get<bool>())
      throw LabelParseFailure(std::string(raw), "metaphor 'yes' without phrase");
    return m;
  }
  if (!v.is_string())
    throw LabelParseFailure(std::string(raw), "metaphor must be a string");
  auto s = v.get<std::string>();
  auto t = text::trim(s);
  auto k = text::normalize_key(t);
  if (k == "no" || k.rfind("no ", 0) == 0 || is_na(k)) return m;
  if (!(k == "yes" || k.rfind("yes ", 0) == 0))
    throw LabelParseFailure(std::string(raw), "metaphor '" + s + "'");

  std::size_t yes_at = 0;
  while (yes_at < t.size() &&
         !std::isalnum(static_cast<unsigned char>(t[yes_at])))
    ++yes_at;
  std::string reasoning(t.substr(yes_at + 3));
  while (!reasoning.empty() &&
         (text::is_space(reasoning.front()) || reasoning.front() == ',' ||
          reasoning.front() == ':' || reasoning.front() == ';' ||
          reasoning.front() == '-'))
    reasoning.erase(reasoning.begin());
  if (text::trim(reasoning).empty())
    throw LabelParseFailure(std::string(raw), "metaphor 'yes' without phrase");

  m.present = true;
  m.phrase = first_quoted(reasoning);
  if (!m.phrase) m.phrase = std::string(text::trim(reasoning));

  static const std::regex maps_to(
      R"(\b(?:maps?|mapping|mapped)\s+(?:from\s+)?((?:the\s+)?(?:domain\s+of\s+)?[A-Za-z-]+(?:\s+domain)?)\s+(?:on)?to\s+((?:the\s+)?(?:domain\s+of\s+)?[A-Za-z-]+))",
      std::regex::icase);
  static const std::regex source_is(
      R"(\bsource(?:\s+domain)?\s*(?:is|:|=|-)\s*((?:the\s+)?(?:domain\s+of\s+)?[A-Za-z-]+))",
      std::regex::icase);
  static const std::regex target_is(
      R"(\btarget(?:\s+domain)?\s*(?:is|:|=|-)\s*((?:the\s+)?(?:domain\s+of\s+)?[A-Za-z-]+))",
      std::regex::icase);
  std::smatch match;
  if (std::regex_search(reasoning, match, maps_to)) {
    m.source_domain = clean_domain(match[1].str());
    m.target_domain = clean_domain(match[2].str());
  }
  if (std::regex_search(reasoning, match, source_is))
    m.source_domain = clean_domain(match[1].str());
  if (std::regex_search(reasoning, match, target_is))
    m.target_domain = clean_domain(match[1].str());
  if (m.source_domain && m.source_domain->empty()) m.source_domain.reset();
  if (m.target_domain && m.target_domain->empty()) m.target_domain.reset();
  return m;
}

}  // namespace detail

/// Parses the four-field JSON object requested by the dynamics prompt. Keys
/// match case-insensitively with spaces or underscores ("self disclosure",
/// "self_disclosure"). Values outside the closed label sets are failures.
inline DynamicsLabel parse_dynamics_response(std::string_view raw) {
  auto open = raw.find('{');
  auto close = raw.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open)
    throw LabelParseFailure(std::string(raw), "no JSON object in response");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.substr(open, close - open + 1));
  } catch (const nlohmann::json::parse_error&) {
    throw LabelParseFailure(std::string(raw), "malformed JSON");
  }
  if (!j.is_object()) throw LabelParseFailure(std::string(raw), "not an object");

  std::map<std::string, nlohmann::json> fields;
  for (const auto& [key, value] : j.items())
    fields[text::normalize_key(key)] = value;
  auto need = [&](const char* key) -> const nlohmann::json& {
    auto it = fields.find(key);
    if (it == fields.end())
      throw LabelParseFailure(std::string(raw),
                              std::string("missing field '") + key + "'");
    return it->second;
  };

  DynamicsLabel d;
  d.autonomy = detail::parse_autonomy(need("autonomy"), raw);
  d.self_disclosure = detail::parse_self_disclosure(need("self disclosure"), raw);
  d.question_type = detail::parse_question_type(need("question type"), raw);
  d.metaphor = detail::parse_metaphor(need("metaphor"), raw);
  return d;
}

/// Canonical response form; parse_dynamics_response inverts it.
inline std::string dynamics_response_json(const DynamicsLabel& d) {
  nlohmann::ordered_json j;
  j["autonomy"] = to_string(d.autonomy);
  j["self disclosure"] = to_string(d.self_disclosure);
  j["question type"] = to_string(d.question_type);
  if (!d.metaphor.present) {
    j["metaphor"] = "no";
  } else {
    std::string s = "yes, '" + d.metaphor.phrase.value_or("") + "'";
    if (d.metaphor.source_domain && d.metaphor.target_domain)
      s += " maps " + *d.metaphor.source_domain + " to " +
           *d.metaphor.target_domain;
    j["metaphor"] = s;
  }
  return j.dump();
}

class DynamicsPrompt {
public:
  explicit DynamicsPrompt(std::string instruction)
      : instruction_(std::move(instruction)) {}

  static DynamicsPrompt load(const std::filesystem::path& path) {
    return DynamicsPrompt(io::read_file(path));
  }

  std::vector<ChatMessage> messages(const Utterance& target) const {
    return {{"system", instruction_},
            {"user", "Therapist's utterance: \"" + target.text + "\""}};
  }

private:
  std::string instruction_;
};

struct DynamicsRecord {
  std::string utterance_id;
  std::string model_id;
  RecordStatus status = RecordStatus::Ok;
  std::optional<DynamicsLabel> label;
  std::string raw_response;
  std::string error;
  int attempts = 1;
  long long latency_ms = 0;
};

inline nlohmann::ordered_json to_json(const DynamicsRecord& r) {
  nlohmann::ordered_json j;
  j["utterance_id"] = r.utterance_id;
  j["model_id"] = r.model_id;
  j["status"] = to_string(r.status);
  if (r.label) {
    const auto& d = *r.label;
    j["autonomy"] = to_string(d.autonomy);
    j["self_disclosure"] = to_string(d.self_disclosure);
    j["question_type"] = to_string(d.question_type);
    nlohmann::ordered_json m;
    m["present"] = d.metaphor.present;
    m["phrase"] = d.metaphor.phrase ? nlohmann::ordered_json(*d.metaphor.phrase)
                                    : nlohmann::ordered_json(nullptr);
    m["source_domain"] = d.metaphor.source_domain
                             ? nlohmann::ordered_json(*d.metaphor.source_domain)
                             : nlohmann::ordered_json(nullptr);
    m["target_domain"] = d.metaphor.target_domain
                             ? nlohmann::ordered_json(*d.metaphor.target_domain)
                             : nlohmann::ordered_json(nullptr);
    j["metaphor"] = m;
  }
  j["attempts"] = r.attempts;
  j["latency_ms"] = r.latency_ms;
  j["raw_response"] = r.raw_response;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline DynamicsRecord dynamics_record_from_json(const nlohmann::json& j) {
  DynamicsRecord r;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.model_id = j.value("model_id", std::string());
  r.status = parse_record_status(j.value("status", std::string("ok")));
  r.attempts = j.value("attempts", 1);
  r.latency_ms = j.value("latency_ms", 0LL);
  r.raw_response = j.value("raw_response", std::string());
  r.error = j.value("error", std::string());
  if (r.status == RecordStatus::Ok) {
    const std::string raw = j.dump();
    DynamicsLabel d;
    d.autonomy = detail::parse_autonomy(j.at("autonomy"), raw);
    d.self_disclosure = detail::parse_self_disclosure(j.at("self_disclosure"), raw);
    d.question_type = detail::parse_question_type(j.at("question_type"), raw);
    const auto& m = j.at("metaphor");
    if (m.at("present").get<bool>()) {
      const auto& phrase = m.at("phrase");
      if (!phrase.is_string() || phrase.get<std::string>().empty())
        throw ParseError(0, "metaphor present without phrase");
      d.metaphor.present = true;
      d.metaphor.phrase = phrase.get<std::string>();
      if (m.at("source_domain").is_string())
        d.metaphor.source_domain = m.at("source_domain").get<std::string>();
      if (m.at("target_domain").is_string())
        d.metaphor.target_domain = m.at("target_domain").get<std::string>();
    }
    r.label = d;
  }
  return r;
}

inline std::vector<DynamicsRecord> parse_dynamics_records(std::string_view content) {
  std::vector<DynamicsRecord> out;
  auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      out.push_back(dynamics_record_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(i + 1, std::string("bad dynamics record: ") + e.what());
    } catch (const LabelParseFailure& e) {
      throw ParseError(i + 1, e.what());
    } catch (const ParseError& e) {
      throw ParseError(i + 1, e.detail());
    }
  }
  return out;
}

inline std::string serialize_dynamics_records(
    const std::vector<DynamicsRecord>& recs) {
  std::string out;
  for (const auto& r : recs) out += to_json(r).dump() + "\n";
  return out;
}

/// One dynamics label per utterance, with the annotator's retry, journal and
/// bounded-parallelism contract. Output order follows `utts`.
inline std::vector<DynamicsRecord> annotate_dynamics(
    const std::vector<Utterance>& utts, const DynamicsPrompt& prompt,
    Backend& backend, const AnnotateOptions& opt) {
  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < utts.size(); ++i)
    order.emplace(utts[i].utterance_id, i);

  std::map<std::size_t, DynamicsRecord> done;
  if (opt.journal && std::filesystem::exists(*opt.journal)) {
    for (auto& r : parse_dynamics_records(io::read_file(*opt.journal))) {
      auto it = order.find(r.utterance_id);
      if (it == order.end() || r.model_id != opt.model_id ||
          r.status == RecordStatus::Failed)
        continue;
      done.insert_or_assign(it->second, std::move(r));
    }
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < utts.size(); ++i)
    if (!done.count(i)) todo.push_back(i);

  detail::Journal journal(opt.journal);
  std::mutex mu;
  detail::bounded_parallel_for(todo.size(), opt.parallelism, [&](std::size_t k) {
    const auto& u = utts[todo[k]];
    ChatRequest req;
    req.model = opt.model_id;
    req.messages = prompt.messages(u);
    req.temperature = opt.temperature;
    req.max_tokens = opt.max_tokens;
    req.task = Task::Dynamics;
    req.target_text = u.text;
    req.run_id = 1;
    req.seed = opt.seed;
    auto res = detail::query_with_retries<DynamicsLabel>(
        backend, req, opt.retry_limit,
        [](const std::string& raw) { return parse_dynamics_response(raw); },
        opt.measure_latency);
    DynamicsRecord rec;
    rec.utterance_id = u.utterance_id;
    rec.model_id = opt.model_id;
    rec.status = res.status;
    rec.label = res.value;
    rec.raw_response = res.raw;
    rec.error = res.error;
    rec.attempts = res.attempts;
    rec.latency_ms = res.latency_ms;
    journal.append(to_json(rec).dump());
    std::lock_guard lock(mu);
    done.insert_or_assign(todo[k], std::move(rec));
  });

  std::vector<DynamicsRecord> out;
  for (auto& [i, r] : done) out.push_back(std::move(r));
  return out;
}

// Analyses

enum class DynamicsField { Autonomy, SelfDisclosure, QuestionType, Metaphor };

inline DynamicsField parse_dynamics_field(std::string_view name) {
  auto k = text::normalize_key(name);
  if (k == "autonomy") return DynamicsField::Autonomy;
  if (k == "self disclosure") return DynamicsField::SelfDisclosure;
  if (k == "question type") return DynamicsField::QuestionType;
  if (k == "metaphor") return DynamicsField::Metaphor;
  throw ConfigError("unknown dynamics field '" + std::string(name) + "'");
}

inline std::string_view field_name(DynamicsField f) {
  switch (f) {
    case DynamicsField::Autonomy: return "autonomy";
    case DynamicsField::SelfDisclosure: return "self_disclosure";
    case DynamicsField::QuestionType: return "question_type";
    case DynamicsField::Metaphor: return "metaphor";
  }
  return "?";
}

/// Category names of a field, in display order; N/A (if any) is last.
inline std::vector<std::string> field_categories(DynamicsField f) {
  switch (f) {
    case DynamicsField::Autonomy: return {"Directive", "Non-Directive", "N/A"};
    case DynamicsField::SelfDisclosure: return {"Immediate", "Nonimmediate", "N/A"};
    case DynamicsField::QuestionType: return {"Open-Ended", "Closed-Ended", "N/A"};
    case DynamicsField::Metaphor: return {"yes", "no"};
  }
  return {};
}

inline std::size_t field_index(const DynamicsLabel& d, DynamicsField f) {
  switch (f) {
    case DynamicsField::Autonomy: return static_cast<std::size_t>(d.autonomy);
    case DynamicsField::SelfDisclosure:
      return static_cast<std::size_t>(d.self_disclosure);
    case DynamicsField::QuestionType:
      return static_cast<std::size_t>(d.question_type);
    case DynamicsField::Metaphor: return d.metaphor.present ? 0 : 1;
  }
  return 0;
}

inline bool is_na_category(DynamicsField f, std::size_t idx) {
  return f != DynamicsField::Metaphor && idx == 2;
}

struct CoOccurrenceMatrix {
  std::string row_dimension;
  std::string col_dimension;
  std::vector<std::string> row_categories;
  std::vector<std::string> col_categories;
  /// Columns that take part in row normalization.
  std::vector<bool> col_included;
  std::vector<std::vector<long long>> counts;
  /// Percent of the row's included-column total; 0 for excluded columns and
  /// for rows whose included total is zero.
  std::vector<std::vector<double>> row_percentages;
};

inline CoOccurrenceMatrix cooccurrence(const std::vector<DynamicsLabel>& labels,
                                       std::string_view row_field,
                                       std::string_view col_field,
                                       bool include_na_columns = false) {
  auto rf = parse_dynamics_field(row_field);
  auto cf = parse_dynamics_field(col_field);
  if (labels.empty()) throw EmptyInputError("cooccurrence: no labels");
  CoOccurrenceMatrix m;
  m.row_dimension = field_name(rf);
  m.col_dimension = field_name(cf);
  m.row_categories = field_categories(rf);
  m.col_categories = field_categories(cf);
  const auto R = m.row_categories.size();
  const auto C = m.col_categories.size();
  m.col_included.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    m.col_included[c] = include_na_columns || !is_na_category(cf, c);
  m.counts.assign(R, std::vector<long long>(C, 0));
  for (const auto& d : labels) ++m.counts[field_index(d, rf)][field_index(d, cf)];
  m.row_percentages.assign(R, std::vector<double>(C, 0.0));
  for (std::size_t r = 0; r < R; ++r) {
    long long total = 0;
    for (std::size_t c = 0; c < C; ++c)
      if (m.col_included[c]) total += m.counts[r][c];
    if (total == 0) continue;
    for (std::size_t c = 0; c < C; ++c)
      if (m.col_included[c])
        m.row_percentages[r][c] = 100.0 * static_cast<double>(m.counts[r][c]) /
                                  static_cast<double>(total);
  }
  return m;
}

inline std::string cooccurrence_csv(const CoOccurrenceMatrix& m) {
  io::CsvWriter w;
  io::CsvRow header{m.row_dimension + "\\" + m.col_dimension};
  for (const auto& c : m.col_categories) header.push_back(c);
  for (const auto& c : m.col_categories) header.push_back(c + " %");
  w.row(header);
  for (std::size_t r = 0; r < m.row_categories.size(); ++r) {
    io::CsvRow row{m.row_categories[r]};
    for (auto v : m.counts[r]) row.push_back(std::to_string(v));
    for (std::size_t c = 0; c < m.col_categories.size(); ++c)
      row.push_back(m.col_included[c]
                        ? text::format_fixed(m.row_percentages[r][c], 2)
                        : "-");
    w.row(row);
  }
  return w.str();
}

struct StrategyDynamicsRow {
  std::string strategy;   // display name, or "None"
  std::string dimension;  // "ps", "fac", or "none"
  long long utterances = 0;
  std::array<long long, 3> autonomy_counts{};  // Directive, Non-Directive, N/A
  /// Directive / Non-Directive shares in percent of non-N/A utterances.
  double directive_pct = 0.0;
  double non_directive_pct = 0.0;
  long long metaphor_count = 0;
  /// Percent of this strategy's utterances that contain a metaphor.
  double metaphor_rate_pct = 0.0;
  /// Percent of the dimension's metaphor-bearing utterances that fall in
  /// this strategy.
  double metaphor_share_pct = 0.0;
};

struct DynamicsByStrategy {
  std::vector<StrategyDynamicsRow> rows;
  std::size_t joined = 0;
  std::size_t missing_strategy = 0;
  std::size_t missing_dynamics = 0;
};

/// Joins dynamics and strategy labels on utterance_id. Each joined utterance
/// counts toward its PS row and its Facilitative row; composite-None
/// utterances form the None row. Strategies with no utterances are omitted.
inline DynamicsByStrategy dynamics_by_strategy(
    const std::map<std::string, DynamicsLabel>& dyn,
    const std::map<std::string, StrategyLabel>& strat, const Codebook& cb) {
  DynamicsByStrategy out;
  // index 0..4 PS, 5..8 FAC, 9 None
  std::array<StrategyDynamicsRow, 10> acc;
  for (std::size_t i = 0; i < 5; ++i) {
    acc[i].strategy = cb.entry(kPsStrategies[i]).name;
    acc[i].dimension = "ps";
  }
  for (std::size_t i = 0; i < 4; ++i) {
    acc[5 + i].strategy = cb.entry(kFacStrategies[i]).name;
    acc[5 + i].dimension = "fac";
  }
  acc[9].strategy = "None";
  acc[9].dimension = "none";

  for (const auto& [id, d] : dyn)
    if (!strat.count(id)) ++out.missing_strategy;
  for (const auto& [id, s] : strat) {
    auto it = dyn.find(id);
    if (it == dyn.end()) {
      ++out.missing_dynamics;
      continue;
    }
    ++out.joined;
    const auto& d = it->second;
    auto add = [&](StrategyDynamicsRow& row) {
      ++row.utterances;
      ++row.autonomy_counts[static_cast<std::size_t>(d.autonomy)];
      if (d.metaphor.present) ++row.metaphor_count;
    };
    if (s.ps) add(acc[static_cast<std::size_t>(*s.ps)]);
    if (s.fac) add(acc[5 + static_cast<std::size_t>(*s.fac)]);
    if (s.is_none()) add(acc[9]);
  }
  if (out.joined == 0)
    throw EmptyInputError("dynamics_by_strategy: no utterance has both labels");

  std::map<std::string, long long> metaphors_by_dim;
  for (const auto& r : acc) metaphors_by_dim[r.dimension] += r.metaphor_count;
  for (auto& r : acc) {
    if (r.utterances == 0) continue;
    long long rated = r.autonomy_counts[0] + r.autonomy_counts[1];
    if (rated > 0) {
      r.directive_pct = 100.0 * static_cast<double>(r.autonomy_counts[0]) / rated;
      r.non_directive_pct =
          100.0 * static_cast<double>(r.autonomy_counts[1]) / rated;
    }
    r.metaphor_rate_pct =
        100.0 * static_cast<double>(r.metaphor_count) / r.utterances;
    auto dim_total = metaphors_by_dim[r.dimension];
    if (dim_total > 0)
      r.metaphor_share_pct =
          100.0 * static_cast<double>(r.metaphor_count) / dim_total;
    out.rows.push_back(r);
  }
  return out;
}

/// "Therapeutic Engagement: 72.18%"
inline std::string metaphor_share_line(const StrategyDynamicsRow& r) {
  return r.strategy + ": " + text::format_fixed(r.metaphor_share_pct, 2) + "%";
}

inline std::string dynamics_by_strategy_csv(const DynamicsByStrategy& t) {
  io::CsvWriter w;
  w.row({"dimension", "strategy", "utterances", "directive", "non_directive",
         "autonomy_na", "directive_pct", "non_directive_pct", "metaphors",
         "metaphor_rate_pct", "metaphor_share_pct"});
  for (const auto& r : t.rows)
    w.row({r.dimension, r.strategy, std::to_string(r.utterances),
           std::to_string(r.autonomy_counts[0]),
           std::to_string(r.autonomy_counts[1]),
           std::to_string(r.autonomy_counts[2]),
           text::format_fixed(r.directive_pct, 2),
           text::format_fixed(r.non_directive_pct, 2),
           std::to_string(r.metaphor_count),
           text::format_fixed(r.metaphor_rate_pct, 2),
           text::format_fixed(r.metaphor_share_pct, 2)});
  return w.str();
}

}  // namespace pstcode
