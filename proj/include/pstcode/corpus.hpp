#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pstcode/error.hpp"
#include "pstcode/io.hpp"
#include "pstcode/text.hpp"

namespace pstcode {

enum class Speaker { Therapist, Client };

inline std::string_view to_string(Speaker s) {
  return s == Speaker::Therapist ? "therapist" : "client";
}

struct Utterance {
  std::string utterance_id;
  std::string session_id;
  int visit_index = 1;
  Speaker speaker = Speaker::Therapist;
  int turn_index = 0;
  std::string text;
  std::size_t word_count = 0;

  bool operator==(const Utterance&) const = default;
};

/// The target therapist utterance with the most recent earlier therapist and
/// client utterances of the same session.
struct ContextWindow {
  Utterance target;
  std::optional<Utterance> prev_therapist;
  std::optional<Utterance> prev_client;
};

struct CorpusStats {
  std::size_t count = 0;
  double mean_words = 0.0;
  double std_words = 0.0;
};

namespace detail {

inline std::string default_utterance_id(const std::string& session, int turn) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", turn);
  return session + "#" + buf;
}

inline int json_int(const nlohmann::json& v, std::size_t line,
                    const char* field) {
  if (!v.is_number_integer())
    throw ParseError(line, std::string(field) + " must be an integer");
  return v.get<int>();
}

}  // namespace detail

/// Parses UTF-8 JSONL, one utterance per line. Required fields: session_id,
/// speaker, text; visit_index defaults to 1 with a warning. Canonical output
/// lines (carrying utterance_id, turn_index, word_count) are accepted and
/// validated. Blank lines are skipped.
inline std::vector<Utterance> parse_transcript(
    std::string_view content, std::vector<std::string>* warnings = nullptr) {
  std::vector<Utterance> out;
  std::unordered_map<std::string, int> last_turn;
  std::set<std::string> seen_ids;
  std::set<std::string> warned_sessions;
  auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    auto trimmed = text::trim(lines[i]);
    if (trimmed.empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(trimmed);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "expected a JSON object");

    Utterance u;
    auto sit = j.find("session_id");
    if (sit == j.end() || !sit->is_string() ||
        sit->get<std::string>().empty())
      throw ParseError(lineno, "session_id must be a non-empty string");
    u.session_id = sit->get<std::string>();

    auto spk = j.find("speaker");
    if (spk == j.end() || !spk->is_string())
      throw SpeakerError(lineno, "missing speaker");
    auto tag = text::to_lower(text::trim(spk->get<std::string>()));
    if (tag == "therapist") {
      u.speaker = Speaker::Therapist;
    } else if (tag == "client") {
      u.speaker = Speaker::Client;
    } else {
      throw SpeakerError(lineno, "unknown speaker '" +
                                     spk->get<std::string>() +
                                     "' (expected therapist or client)");
    }

    auto tit = j.find("text");
    if (tit == j.end() || !tit->is_string())
      throw ParseError(lineno, "text must be a string");
    u.text = tit->get<std::string>();
    u.word_count = text::word_count(u.text);
    if (u.word_count == 0) throw ParseError(lineno, "text is empty");

    if (auto vit = j.find("visit_index"); vit != j.end() && !vit->is_null()) {
      u.visit_index = detail::json_int(*vit, lineno, "visit_index");
      if (u.visit_index < 1 || u.visit_index > 3)
        throw ParseError(lineno, "visit_index must be 1, 2 or 3");
    } else {
      u.visit_index = 1;
      if (warnings && warned_sessions.insert(u.session_id).second)
        warnings->push_back("line " + std::to_string(lineno) + ": session " +
                            u.session_id +
                            " has no visit_index; defaulting to 1");
    }

    auto last = last_turn.find(u.session_id);
    if (auto ti = j.find("turn_index"); ti != j.end()) {
      u.turn_index = detail::json_int(*ti, lineno, "turn_index");
      if (u.turn_index < 0)
        throw ParseError(lineno, "turn_index must be non-negative");
      if (last != last_turn.end() && u.turn_index <= last->second)
        throw ParseError(lineno, "turn_index not increasing within session " +
                                     u.session_id);
    } else {
      u.turn_index = last == last_turn.end() ? 0 : last->second + 1;
    }
    last_turn[u.session_id] = u.turn_index;

    if (auto wc = j.find("word_count"); wc != j.end()) {
      if (!wc->is_number_integer() ||
          wc->get<long long>() != static_cast<long long>(u.word_count))
        throw ParseError(lineno, "word_count disagrees with text");
    }

    if (auto id = j.find("utterance_id"); id != j.end()) {
      if (!id->is_string() || id->get<std::string>().empty())
        throw ParseError(lineno, "utterance_id must be a non-empty string");
      u.utterance_id = id->get<std::string>();
    } else {
      u.utterance_id = detail::default_utterance_id(u.session_id, u.turn_index);
    }
    if (!seen_ids.insert(u.utterance_id).second)
      throw ParseError(lineno, "duplicate utterance_id " + u.utterance_id);

    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<Utterance> load_transcript(
    const std::filesystem::path& path,
    std::vector<std::string>* warnings = nullptr) {
  try {
    return parse_transcript(io::read_file(path), warnings);
  } catch (const SpeakerError& e) {
    throw SpeakerError(e.line(), e.detail(),
                       path.string() + ":" + std::to_string(e.line()));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(),
                     path.string() + ":" + std::to_string(e.line()));
  }
}

inline nlohmann::ordered_json to_json(const Utterance& u) {
  nlohmann::ordered_json j;
  j["utterance_id"] = u.utterance_id;
  j["session_id"] = u.session_id;
  j["visit_index"] = u.visit_index;
  j["turn_index"] = u.turn_index;
  j["speaker"] = to_string(u.speaker);
  j["text"] = u.text;
  j["word_count"] = u.word_count;
  return j;
}

/// Canonical JSONL: fixed key order, compact, one utterance per line.
inline std::string serialize_transcript(const std::vector<Utterance>& utts) {
  std::string out;
  for (const auto& u : utts) {
    out += to_json(u).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Utterance> filter_therapist(
    const std::vector<Utterance>& utts, std::size_t min_words = 5) {
  if (min_words < 1) throw ConfigError("min_words must be at least 1");
  std::vector<Utterance> out;
  for (const auto& u : utts)
    if (u.speaker == Speaker::Therapist && u.word_count >= min_words)
      out.push_back(u);
  return out;
}

inline ContextWindow build_context(const std::vector<Utterance>& utts,
                                   std::string_view target_id) {
  const Utterance* target = nullptr;
  for (const auto& u : utts)
    if (u.utterance_id == target_id) {
      target = &u;
      break;
    }
  if (!target)
    throw LookupError("unknown utterance_id " + std::string(target_id));
  if (target->speaker != Speaker::Therapist)
    throw LookupError("utterance " + std::string(target_id) +
                      " is not a therapist utterance");

  ContextWindow ctx{*target, std::nullopt, std::nullopt};
  for (const auto& u : utts) {
    if (u.session_id != target->session_id ||
        u.turn_index >= target->turn_index)
      continue;
    auto& slot =
        u.speaker == Speaker::Therapist ? ctx.prev_therapist : ctx.prev_client;
    if (!slot || slot->turn_index < u.turn_index) slot = u;
  }
  return ctx;
}

/// Context windows for every therapist utterance in one pass, keyed by
/// utterance_id. Agrees with build_context for each key.
inline std::map<std::string, ContextWindow> build_all_contexts(
    const std::vector<Utterance>& utts) {
  std::vector<const Utterance*> order;
  order.reserve(utts.size());
  for (const auto& u : utts) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
    if (a->session_id != b->session_id) return a->session_id < b->session_id;
    return a->turn_index < b->turn_index;
  });

  std::map<std::string, ContextWindow> out;
  const Utterance* last_t = nullptr;
  const Utterance* last_c = nullptr;
  const std::string* session = nullptr;
  for (const auto* u : order) {
    if (!session || *session != u->session_id) {
      last_t = last_c = nullptr;
      session = &u->session_id;
    }
    if (u->speaker == Speaker::Therapist) {
      ContextWindow w{*u, std::nullopt, std::nullopt};
      if (last_t) w.prev_therapist = *last_t;
      if (last_c) w.prev_client = *last_c;
      out.emplace(u->utterance_id, std::move(w));
      last_t = u;
    } else {
      last_c = u;
    }
  }
  return out;
}

/// Mean and standard deviation of word counts. Population standard deviation
/// unless `sample` is set.
inline CorpusStats corpus_stats(const std::vector<Utterance>& utts,
                                bool sample = false) {
  if (utts.empty()) throw EmptyInputError("corpus_stats: no utterances");
  CorpusStats s;
  s.count = utts.size();
  double sum = 0.0;
  for (const auto& u : utts) sum += static_cast<double>(u.word_count);
  s.mean_words = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (const auto& u : utts) {
    double d = static_cast<double>(u.word_count) - s.mean_words;
    ss += d * d;
  }
  double denom = sample ? static_cast<double>(s.count) - 1.0
                        : static_cast<double>(s.count);
  s.std_words = denom > 0 ? std::sqrt(ss / denom) : 0.0;
  return s;
}

}  // namespace pstcode
