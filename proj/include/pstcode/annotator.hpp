#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ranges>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pstcode/backend.hpp"
#include "pstcode/codebook.hpp"
#include "pstcode/corpus.hpp"
#include "pstcode/error.hpp"
#include "pstcode/io.hpp"

namespace pstcode {

enum class RecordStatus { Ok, Unparsed, Failed };

inline std::string_view to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::Ok: return "ok";
    case RecordStatus::Unparsed: return "unparsed";
    case RecordStatus::Failed: return "failed";
  }
  return "?";
}

inline RecordStatus parse_record_status(std::string_view s) {
  if (s == "ok") return RecordStatus::Ok;
  if (s == "unparsed") return RecordStatus::Unparsed;
  if (s == "failed") return RecordStatus::Failed;
  throw ParseError(0, "unknown record status '" + std::string(s) + "'");
}

/// One model run's answer for one utterance. `label` is set iff status is Ok.
struct AnnotationRecord {
  std::string utterance_id;
  std::string model_id;
  ContextMode context_mode = ContextMode::NoContext;
  int run_id = 1;
  RecordStatus status = RecordStatus::Ok;
  std::optional<StrategyLabel> label;
  std::string raw_response;
  std::string error;
  int attempts = 1;
  long long latency_ms = 0;

  auto key() const {
    return std::tie(utterance_id, model_id, context_mode, run_id);
  }
};

inline nlohmann::ordered_json to_json(const AnnotationRecord& r,
                                      const Codebook& cb) {
  nlohmann::ordered_json j;
  j["utterance_id"] = r.utterance_id;
  j["model_id"] = r.model_id;
  j["context_mode"] = to_string(r.context_mode);
  j["run_id"] = r.run_id;
  j["status"] = to_string(r.status);
  if (r.label) {
    auto [ps, fac] = cb.canonical_name(*r.label);
    j["ps"] = ps;
    j["fac"] = fac;
  } else {
    j["ps"] = nullptr;
    j["fac"] = nullptr;
  }
  j["attempts"] = r.attempts;
  j["latency_ms"] = r.latency_ms;
  j["raw_response"] = r.raw_response;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

/// One record line. A prediction file may carry a single dimension; the
/// has_ps / has_fac flags say whether that key was present at all.
struct ParsedRecord {
  AnnotationRecord record;
  bool has_ps = true;
  bool has_fac = true;
};

inline ParsedRecord record_from_json(const nlohmann::json& j,
                                     const Codebook& cb) {
  ParsedRecord out;
  auto& r = out.record;
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.model_id = j.value("model_id", std::string());
  r.context_mode = parse_context_mode(j.value("context_mode", std::string("none")));
  r.run_id = j.value("run_id", 1);
  r.status = parse_record_status(j.value("status", std::string("ok")));
  r.attempts = j.value("attempts", 1);
  r.latency_ms = j.value("latency_ms", 0LL);
  r.raw_response = j.value("raw_response", std::string());
  r.error = j.value("error", std::string());
  out.has_ps = j.contains("ps");
  out.has_fac = j.contains("fac");
  if (r.status == RecordStatus::Ok) {
    StrategyLabel label;
    auto read = [&](const char* key, auto find) {
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) return;
      auto name = it->template get<std::string>();
      if (Codebook::is_absent_value(name)) return;
      auto v = find(name);
      if (!v)
        throw ParseError(0, std::string("unknown ") + key + " label '" + name +
                                "'");
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, PsCoreStrategy>)
        label.ps = *v;
      else
        label.fac = *v;
    };
    read("ps", [&](const std::string& s) { return cb.find_ps(s); });
    read("fac", [&](const std::string& s) { return cb.find_fac(s); });
    r.label = label;
  }
  return out;
}

inline std::string serialize_records(const std::vector<AnnotationRecord>& recs,
                                     const Codebook& cb) {
  std::string out;
  for (const auto& r : recs) {
    out += to_json(r, cb).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ParsedRecord> parse_records(std::string_view content,
                                               const Codebook& cb) {
  std::vector<ParsedRecord> out;
  auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(lines[i]), cb));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(i + 1, std::string("bad annotation record: ") + e.what());
    } catch (const ParseError& e) {
      throw ParseError(i + 1, e.detail());
    }
  }
  return out;
}

inline std::vector<AnnotationRecord> load_records(
    const std::filesystem::path& path, const Codebook& cb) {
  try {
    std::vector<AnnotationRecord> out;
    for (auto& p : parse_records(io::read_file(path), cb))
      out.push_back(std::move(p.record));
    return out;
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(),
                     path.string() + ":" + std::to_string(e.line()));
  }
}

namespace detail {

/// Runs fn(i) for i in [0, n) on at most `parallelism` threads. The first
/// exception stops dispatch of further items and is rethrown after all
/// workers finish.
inline void bounded_parallel_for(std::size_t n, int parallelism,
                                 const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto work = [&] {
    while (!stop.load()) {
      auto i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);
}

template <class T>
struct Attempted {
  RecordStatus status = RecordStatus::Failed;
  std::optional<T> value;
  std::string raw;
  std::string error;
  int attempts = 0;
  long long latency_ms = 0;
};

/// Issues the request up to 1 + retry_limit times. Parse failures and
/// transport failures are both retried; the last outcome decides the status.
template <class T, class Parse>
Attempted<T> query_with_retries(Backend& backend, ChatRequest req,
                                int retry_limit, Parse&& parse,
                                bool measure_latency) {
  Attempted<T> out;
  for (int attempt = 1; attempt <= 1 + retry_limit; ++attempt) {
    req.attempt = attempt;
    out.attempts = attempt;
    auto t0 = std::chrono::steady_clock::now();
    try {
      out.raw = backend.complete(req);
    } catch (const TransportError& e) {
      out.status = RecordStatus::Failed;
      out.error = e.what();
      out.raw.clear();
      continue;
    }
    if (measure_latency)
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    try {
      out.value = parse(out.raw);
      out.status = RecordStatus::Ok;
      out.error.clear();
      return out;
    } catch (const LabelParseFailure& e) {
      out.status = RecordStatus::Unparsed;
      out.error = e.what();
    }
  }
  return out;
}

/// Append-only JSONL journal shared by worker threads.
class Journal {
public:
  explicit Journal(std::optional<std::filesystem::path> path)
      : path_(std::move(path)) {
    if (path_ && path_->has_parent_path())
      std::filesystem::create_directories(path_->parent_path());
  }

  void append(const std::string& line) {
    if (!path_) return;
    std::lock_guard lock(mu_);
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    out << line << '\n';
    out.flush();
  }

private:
  std::optional<std::filesystem::path> path_;
  std::mutex mu_;
};

}  // namespace detail

struct AnnotateOptions {
  std::string model_id = "mock-keyword-v1";
  ContextMode mode = ContextMode::NoContext;
  int runs = 1;
  int parallelism = 1;
  int retry_limit = 2;
  double temperature = 0.0;
  int max_tokens = 500;
  std::uint64_t seed = 0;
  bool measure_latency = false;
  /// Completed (ok or unparsed) records found here are reused; new records
  /// are appended as they finish.
  std::optional<std::filesystem::path> journal;
};

inline ChatRequest make_strategy_request(const PromptBundle& prompt,
                                         const Utterance& target,
                                         const AnnotateOptions& opt, int run) {
  ChatRequest req;
  req.model = opt.model_id;
  req.messages = {{"system", prompt.system_message()},
                  {"user", prompt.user_message()}};
  req.temperature = opt.temperature;
  req.max_tokens = opt.max_tokens;
  req.task = Task::Strategy;
  req.target_text = target.text;
  req.run_id = run;
  req.seed = opt.seed;
  return req;
}

/// Labels every target utterance `runs` times. `corpus` supplies context
/// windows in WithContext mode (all speakers, not only targets). The result
/// is ordered by (target order, run_id) whatever the completion order was.
inline std::vector<AnnotationRecord> annotate_corpus(
    const std::vector<Utterance>& targets, const std::vector<Utterance>& corpus,
    const Codebook& cb, Backend& backend, const AnnotateOptions& opt) {
  if (opt.runs < 1) throw ConfigError("runs must be >= 1");
  if (opt.parallelism < 1) throw ConfigError("parallelism must be >= 1");

  std::map<std::string, ContextWindow> contexts;
  if (opt.mode == ContextMode::WithContext) contexts = build_all_contexts(corpus);

  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < targets.size(); ++i)
    order.emplace(targets[i].utterance_id, i);

  // (target index, run) -> record
  std::map<std::pair<std::size_t, int>, AnnotationRecord> done;
  if (opt.journal && std::filesystem::exists(*opt.journal)) {
    for (auto& r : load_records(*opt.journal, cb)) {
      auto it = order.find(r.utterance_id);
      if (it == order.end() || r.model_id != opt.model_id ||
          r.context_mode != opt.mode || r.run_id < 1 || r.run_id > opt.runs ||
          r.status == RecordStatus::Failed)
        continue;
      done.insert_or_assign({it->second, r.run_id}, std::move(r));
    }
  }

  std::vector<std::pair<std::size_t, int>> todo;
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (int run = 1; run <= opt.runs; ++run)
      if (!done.count({i, run})) todo.emplace_back(i, run);

  detail::Journal journal(opt.journal);
  std::mutex done_mu;
  detail::bounded_parallel_for(todo.size(), opt.parallelism, [&](std::size_t k) {
    auto [i, run] = todo[k];
    const auto& target = targets[i];
    const ContextWindow* ctx = nullptr;
    if (opt.mode == ContextMode::WithContext) {
      auto it = contexts.find(target.utterance_id);
      if (it == contexts.end())
        throw LookupError("no context for " + target.utterance_id +
                          " (is it a therapist utterance of the corpus?)");
      ctx = &it->second;
    }
    auto prompt = cb.render_prompt(target, ctx, opt.mode);
    auto req = make_strategy_request(prompt, target, opt, run);
    auto res = detail::query_with_retries<StrategyLabel>(
        backend, req, opt.retry_limit,
        [&](const std::string& raw) { return cb.parse_label(raw); },
        opt.measure_latency);

    AnnotationRecord rec;
    rec.utterance_id = target.utterance_id;
    rec.model_id = opt.model_id;
    rec.context_mode = opt.mode;
    rec.run_id = run;
    rec.status = res.status;
    rec.label = res.value;
    rec.raw_response = res.raw;
    rec.error = res.error;
    rec.attempts = res.attempts;
    rec.latency_ms = res.latency_ms;
    journal.append(to_json(rec, cb).dump());
    std::lock_guard lock(done_mu);
    done.insert_or_assign({i, run}, std::move(rec));
  });

  std::vector<AnnotationRecord> out;
  out.reserve(done.size());
  for (auto& [key, rec] : done) out.push_back(std::move(rec));
  return out;
}

// Consistency

/// Shannon entropy (natural log) of the empirical distribution of `labels`.
/// Terms are summed in key order so equal multisets give bit-equal results.
template <std::ranges::input_range R>
double label_entropy(const R& labels) {
  using T = std::ranges::range_value_t<R>;
  std::map<T, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& l : labels) {
    ++counts[l];
    ++total;
  }
  if (total == 0) throw EmptyInputError("label_entropy: empty multiset");
  if (counts.size() == 1) return 0.0;
  double u = 0.0;
  for (const auto& [label, c] : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    u -= p * std::log(p);
  }
  return u;
}

enum class LabelDimension { Composite, PsOnly, FacOnly };

inline std::string_view to_string(LabelDimension d) {
  switch (d) {
    case LabelDimension::Composite: return "composite";
    case LabelDimension::PsOnly: return "ps";
    case LabelDimension::FacOnly: return "fac";
  }
  return "?";
}

/// Category key of a record in one label space; unparsed outputs are their
/// own category.
inline std::string outcome_key(const AnnotationRecord& r, LabelDimension dim) {
  if (r.status != RecordStatus::Ok || !r.label) return "<unparsed>";
  auto ps = r.label->ps ? std::string(id_of(*r.label->ps)) : "None";
  auto fac = r.label->fac ? std::string(id_of(*r.label->fac)) : "None";
  switch (dim) {
    case LabelDimension::PsOnly: return ps;
    case LabelDimension::FacOnly: return fac;
    case LabelDimension::Composite: break;
  }
  return ps + "|" + fac;
}

struct ConsistencyReport {
  LabelDimension dimension = LabelDimension::Composite;
  std::string model_id;
  ContextMode context_mode = ContextMode::NoContext;
  std::map<std::string, double> per_utterance_entropy;
  std::map<std::string, int> runs_per_utterance;
  /// Utterances with fewer than two usable runs; reported with u = 0.
  std::set<std::string> single_run;
  double mean_entropy = 0.0;
  double std_entropy = 0.0;
  std::size_t failed_excluded = 0;
};

/// Per-utterance label entropy across runs, with population mean/std across
/// utterances. Failed records carry no label and are excluded.
inline ConsistencyReport consistency_report(
    const std::vector<AnnotationRecord>& records, LabelDimension dim) {
  ConsistencyReport rep;
  rep.dimension = dim;
  if (records.empty()) throw EmptyInputError("consistency_report: no records");
  rep.model_id = records.front().model_id;
  rep.context_mode = records.front().context_mode;
  std::map<std::string, std::vector<std::string>> by_utt;
  for (const auto& r : records) {
    if (r.model_id != rep.model_id || r.context_mode != rep.context_mode)
      throw ConfigError(
          "consistency_report: records mix models or context modes");
    if (r.status == RecordStatus::Failed) {
      ++rep.failed_excluded;
      by_utt[r.utterance_id];
      continue;
    }
    by_utt[r.utterance_id].push_back(outcome_key(r, dim));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [id, labels] : by_utt) {
    rep.runs_per_utterance[id] = static_cast<int>(labels.size());
    double u = 0.0;
    if (labels.size() < 2) {
      rep.single_run.insert(id);
    } else {
      u = label_entropy(labels);
    }
    rep.per_utterance_entropy[id] = u;
    sum += u;
    ++n;
  }
  rep.mean_entropy = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& [id, u] : rep.per_utterance_entropy) {
    double d = u - rep.mean_entropy;
    ss += d * d;
  }
  rep.std_entropy = std::sqrt(ss / static_cast<double>(n));
  return rep;
}

}  // namespace pstcode
