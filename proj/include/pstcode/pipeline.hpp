#pragma once

// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from the config and the output tree, writes its files atomically, records
// them in manifest.json, and returns an exit code (0 ok, 1 partial failures).

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pstcode/analytics.hpp"
#include "pstcode/annotator.hpp"
#include "pstcode/backend.hpp"
#include "pstcode/codebook.hpp"
#include "pstcode/corpus.hpp"
#include "pstcode/dynamics.hpp"
#include "pstcode/error.hpp"
#include "pstcode/http_backend.hpp"
#include "pstcode/io.hpp"
#include "pstcode/metrics.hpp"
#include "pstcode/mock_backend.hpp"

#ifndef PSTCODE_DATA_DIR
#define PSTCODE_DATA_DIR "data"
#endif

namespace pstcode {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path corpus;
  fs::path codebook = fs::path(PSTCODE_DATA_DIR) / "codebook/pst_v1.toml";
  fs::path dynamics_prompt = fs::path(PSTCODE_DATA_DIR) / "prompts/dynamics_v1.txt";
  fs::path gold;
  fs::path lexicon = fs::path(PSTCODE_DATA_DIR) / "lexicon/demo.lex";
  fs::path stopwords = fs::path(PSTCODE_DATA_DIR) / "stopwords/english.txt";
  fs::path output = "out";
  ContextMode context = ContextMode::NoContext;
  int runs = 1;
  std::uint64_t seed = 0;
  int min_words = 5;
  BackendConfig backend;

  void validate() const {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (min_words < 1) throw ConfigError("min_words must be >= 1");
    backend.validate();
  }

  /// Everything that determines results; the output directory is left out
  /// so identical runs into different trees hash alike.
  nlohmann::ordered_json canonical() const {
    nlohmann::ordered_json j;
    j["corpus"] = corpus.generic_string();
    j["codebook"] = codebook.generic_string();
    j["dynamics_prompt"] = dynamics_prompt.generic_string();
    j["gold"] = gold.generic_string();
    j["lexicon"] = lexicon.generic_string();
    j["stopwords"] = stopwords.generic_string();
    j["context"] = to_string(context);
    j["runs"] = runs;
    j["seed"] = seed;
    j["min_words"] = min_words;
    auto& b = j["backend"];
    b["kind"] = to_string(backend.kind);
    b["model"] = backend.model_id;
    b["temperature"] = backend.temperature;
    b["max_tokens"] = backend.max_tokens;
    b["endpoint"] = backend.endpoint ? *backend.endpoint : "";
    b["parallelism"] = backend.parallelism;
    b["retry_limit"] = backend.retry_limit;
    b["cache"] = backend.cache_path ? backend.cache_path->generic_string() : "";
    b["credential_env"] = backend.credential_env;
    b["mock_noise"] = backend.mock_noise;
    return j;
  }

  std::string hash() const { return text::sha256_hex(canonical().dump()); }
};

/// Reads a JSON config. Relative paths are resolved against the config
/// file's directory. Credentials are never read from the file.
inline RunConfig parse_config(const nlohmann::json& j, const fs::path& base) {
  RunConfig c;
  auto path = [&](const char* key, fs::path& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    fs::path p = j[key].get<std::string>();
    out = p.is_absolute() ? p : (base / p).lexically_normal();
  };
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      static const std::set<std::string> known{
          "corpus", "codebook", "dynamics_prompt", "gold", "lexicon", "stopwords",
          "output", "context", "runs", "seed", "min_words", "backend"};
      if (!known.count(it.key()))
        throw ConfigError("unknown config key '" + it.key() + "'");
    }
    path("corpus", c.corpus);
    path("codebook", c.codebook);
    path("dynamics_prompt", c.dynamics_prompt);
    path("gold", c.gold);
    path("lexicon", c.lexicon);
    path("stopwords", c.stopwords);
    path("output", c.output);
    if (j.contains("context")) c.context = parse_context_mode(j["context"].get<std::string>());
    c.runs = j.value("runs", c.runs);
    c.seed = j.value("seed", c.seed);
    c.min_words = j.value("min_words", c.min_words);
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      for (auto it = b.begin(); it != b.end(); ++it) {
        static const std::set<std::string> known{
            "kind", "model", "temperature", "max_tokens", "endpoint", "parallelism",
            "retry_limit", "cache", "credential_env", "mock_noise"};
        if (it.key() == "api_key" || it.key() == "credential")
          throw ConfigError("credentials belong in the environment, not the config");
        if (!known.count(it.key()))
          throw ConfigError("unknown backend key '" + it.key() + "'");
      }
      auto& bc = c.backend;
      if (b.contains("kind")) bc.kind = parse_backend_kind(b["kind"].get<std::string>());
      bc.model_id = b.value("model", bc.model_id);
      bc.temperature = b.value("temperature", bc.temperature);
      bc.max_tokens = b.value("max_tokens", bc.max_tokens);
      if (b.contains("endpoint") && b["endpoint"].is_string())
        bc.endpoint = b["endpoint"].get<std::string>();
      bc.parallelism = b.value("parallelism", bc.parallelism);
      bc.retry_limit = b.value("retry_limit", bc.retry_limit);
      if (b.contains("cache") && b["cache"].is_string()) {
        fs::path p = b["cache"].get<std::string>();
        bc.cache_path = p.is_absolute() ? p : (base / p).lexically_normal();
      }
      bc.credential_env = b.value("credential_env", bc.credential_env);
      bc.mock_noise = b.value("mock_noise", bc.mock_noise);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(file.string() + ": config must be an object");
  return parse_config(j, fs::absolute(file).parent_path());
}

/// Output tree: corpus/, annotations/, reports/, manifest.json.
struct Layout {
  fs::path root;

  fs::path utterances() const { return root / "corpus/utterances.jsonl"; }
  fs::path therapist() const { return root / "corpus/therapist.jsonl"; }
  fs::path stats() const { return root / "corpus/stats.json"; }
  fs::path strategy(ContextMode m) const {
    return root / ("annotations/strategy_" + std::string(to_string(m)) + ".jsonl");
  }
  fs::path strategy_journal(ContextMode m) const {
    return root / ("annotations/strategy_" + std::string(to_string(m)) + ".partial.jsonl");
  }
  fs::path dynamics() const { return root / "annotations/dynamics.jsonl"; }
  fs::path dynamics_journal() const { return root / "annotations/dynamics.partial.jsonl"; }
  fs::path report(const std::string& name) const { return root / "reports" / name; }
  fs::path manifest() const { return root / "manifest.json"; }
};

/// Writes files atomically and records them for the manifest.
class StageWriter {
public:
  StageWriter(const Layout& layout, std::string stage)
      : layout_(layout), stage_(std::move(stage)) {}

  void write(const fs::path& path, std::string_view content) {
    io::atomic_write(path, content);
    files_.insert(fs::relative(path, layout_.root).generic_string());
  }

  /// Merges this stage into manifest.json.
  void commit(const RunConfig& cfg, nlohmann::ordered_json extra = {}) {
    nlohmann::ordered_json m;
    if (fs::exists(layout_.manifest())) {
      try {
        m = nlohmann::ordered_json::parse(io::read_file(layout_.manifest()));
      } catch (const nlohmann::json::exception&) {
        m = nlohmann::ordered_json();
      }
    }
    nlohmann::ordered_json out;
    out["layout_version"] = 1;
    out["config_hash"] = cfg.hash();
    out["config"] = cfg.canonical();
    nlohmann::ordered_json stages =
        m.contains("stages") ? m["stages"] : nlohmann::ordered_json::object();
    nlohmann::ordered_json s;
    s["config_hash"] = cfg.hash();
    s["outputs"] = files_;
    if (!extra.is_null())
      for (auto it = extra.begin(); it != extra.end(); ++it) s[it.key()] = it.value();
    stages[stage_] = s;
    // Stable key order regardless of the order stages ran in.
    nlohmann::ordered_json sorted = nlohmann::ordered_json::object();
    std::set<std::string> names;
    for (auto it = stages.begin(); it != stages.end(); ++it) names.insert(it.key());
    for (const auto& n : names) sorted[n] = stages[n];
    out["stages"] = sorted;
    io::atomic_write(layout_.manifest(), out.dump(2) + "\n");
  }

private:
  const Layout& layout_;
  std::string stage_;
  std::set<std::string> files_;
};

/// Bad or missing user input; maps to exit code 2.
class InputError : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw InputError("no " + what + " given");
  if (!fs::exists(p)) throw InputError(what + " not found: " + p.string());
}

inline std::vector<Utterance> load_stage_corpus(const fs::path& p) {
  if (!fs::exists(p))
    throw InputError(p.string() + " is missing; run `pstcode ingest` first");
  return load_transcript(p);
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

}  // namespace detail

/// Builds the configured backend; `cache` outlives it.
inline std::unique_ptr<Backend> make_backend(const BackendConfig& bc,
                                             const Codebook& cb) {
  std::shared_ptr<ResponseCache> cache;
  if (bc.cache_path) cache = std::make_shared<ResponseCache>(*bc.cache_path);
  std::unique_ptr<Backend> b;
  switch (bc.kind) {
    case BackendKind::Mock:
      b = std::make_unique<MockBackend>(cb, bc.mock_noise);
      break;
    case BackendKind::Replay:
      return std::make_unique<ReplayBackend>(cache);
    case BackendKind::HttpChat:
      b = std::make_unique<HttpChatBackend>(*bc.endpoint, *bc.credential());
      break;
  }
  if (cache) return std::make_unique<CachingBackend>(std::move(b), cache);
  return b;
}

inline AnnotateOptions annotate_options(const RunConfig& cfg) {
  AnnotateOptions o;
  o.model_id = cfg.backend.model_id;
  o.mode = cfg.context;
  o.runs = cfg.runs;
  o.parallelism = cfg.backend.parallelism;
  o.retry_limit = cfg.backend.retry_limit;
  o.temperature = cfg.backend.temperature;
  o.max_tokens = cfg.backend.max_tokens;
  o.seed = cfg.seed;
  return o;
}

// ingest

inline int run_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  detail::require_file(cfg.corpus, "corpus");
  Layout L{cfg.output};
  std::vector<std::string> warnings;
  auto utts = load_transcript(cfg.corpus, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  auto targets = filter_therapist(utts, static_cast<std::size_t>(cfg.min_words));

  long long therapist = 0;
  std::set<std::string> sessions;
  std::map<int, long long> per_visit;
  for (const auto& u : utts) {
    therapist += u.speaker == Speaker::Therapist;
    sessions.insert(u.session_id);
  }
  for (const auto& u : targets) ++per_visit[u.visit_index];

  nlohmann::ordered_json stats;
  stats["sessions"] = sessions.size();
  stats["utterances"] = utts.size();
  stats["therapist_utterances"] = therapist;
  stats["min_words"] = cfg.min_words;
  stats["retained"] = targets.size();
  if (!targets.empty()) {
    auto s = corpus_stats(targets);
    stats["mean_words"] = s.mean_words;
    stats["std_words"] = s.std_words;
  }
  auto& pv = stats["retained_per_visit"] = nlohmann::ordered_json::object();
  for (const auto& [v, n] : per_visit) pv[std::to_string(v)] = n;

  StageWriter w(L, "ingest");
  w.write(L.utterances(), serialize_transcript(utts));
  w.write(L.therapist(), serialize_transcript(targets));
  w.write(L.stats(), stats.dump(2) + "\n");
  w.commit(cfg);
  out << "retained " << targets.size() << " therapist utterances (of " << therapist
      << " therapist, " << utts.size() << " total; >= " << cfg.min_words
      << " words)\n";
  return 0;
}

// annotate

inline std::string consistency_csv(const std::vector<ConsistencyReport>& reps) {
  io::CsvWriter w;
  io::CsvRow header{"utterance_id", "runs"};
  for (const auto& r : reps) header.push_back(std::string(to_string(r.dimension)));
  w.row(header);
  if (reps.empty()) return w.str();
  for (const auto& [id, runs] : reps.front().runs_per_utterance) {
    io::CsvRow row{id, std::to_string(runs)};
    for (const auto& r : reps)
      row.push_back(text::format_fixed(r.per_utterance_entropy.at(id), 6));
    w.row(row);
  }
  return w.str();
}

inline std::string consistency_summary_csv(const std::vector<ConsistencyReport>& reps) {
  io::CsvWriter w;
  w.row({"dimension", "model", "context", "utterances", "mean_entropy", "std_entropy",
         "single_run", "failed_excluded"});
  for (const auto& r : reps)
    w.row({std::string(to_string(r.dimension)), r.model_id,
           std::string(to_string(r.context_mode)),
           std::to_string(r.per_utterance_entropy.size()),
           text::format_fixed(r.mean_entropy, 6), text::format_fixed(r.std_entropy, 6),
           std::to_string(r.single_run.size()), std::to_string(r.failed_excluded)});
  return w.str();
}

inline int run_annotate(const RunConfig& cfg, bool consistency, bool fresh,
                        std::ostream& out, std::ostream& err) {
  cfg.validate();
  Layout L{cfg.output};
  auto all = detail::load_stage_corpus(L.utterances());
  auto targets = detail::load_stage_corpus(L.therapist());
  auto cb = Codebook::load(cfg.codebook);
  auto backend = make_backend(cfg.backend, cb);

  auto opt = annotate_options(cfg);
  opt.journal = L.strategy_journal(cfg.context);
  if (fresh) fs::remove(*opt.journal);
  auto records = annotate_corpus(targets, all, cb, *backend, opt);

  std::map<RecordStatus, long long> tally;
  for (const auto& r : records) ++tally[r.status];
  StageWriter w(L, "annotate_" + std::string(to_string(cfg.context)));
  w.write(L.strategy(cfg.context), serialize_records(records, cb));
  fs::remove(*opt.journal);

  if (consistency) {
    std::vector<ConsistencyReport> reps;
    for (auto d : {LabelDimension::Composite, LabelDimension::PsOnly,
                   LabelDimension::FacOnly})
      reps.push_back(consistency_report(records, d));
    auto mode = std::string(to_string(cfg.context));
    w.write(L.report("consistency_" + mode + ".csv"), consistency_csv(reps));
    w.write(L.report("consistency_" + mode + "_summary.csv"),
            consistency_summary_csv(reps));
    for (const auto& r : reps)
      out << "entropy (" << to_string(r.dimension) << "): mean "
          << text::format_fixed(r.mean_entropy, 4) << ", std "
          << text::format_fixed(r.std_entropy, 4) << "\n";
    if (cfg.runs < 2) err << "warning: entropy needs --runs >= 2; all values are 0\n";
  }
  nlohmann::ordered_json extra;
  extra["records"] = records.size();
  extra["ok"] = tally[RecordStatus::Ok];
  extra["unparsed"] = tally[RecordStatus::Unparsed];
  extra["failed"] = tally[RecordStatus::Failed];
  w.commit(cfg, extra);
  out << "annotated " << targets.size() << " utterances x " << cfg.runs
      << " runs: ok " << tally[RecordStatus::Ok] << ", unparsed "
      << tally[RecordStatus::Unparsed] << ", failed " << tally[RecordStatus::Failed]
      << "\n";
  return tally[RecordStatus::Failed] > 0 ? 1 : 0;
}

// evaluate

struct MergedPredictions {
  std::map<std::string, Prediction> predictions;
  bool has_ps = true;
  bool has_fac = true;
};

/// Combines prediction files for one run. A file may carry both dimensions
/// or only one (a record without a "ps" or "fac" key); per utterance the
/// dimensions from different files are joined.
inline MergedPredictions merge_predictions(const std::vector<fs::path>& files,
                                           const Codebook& cb, int run) {
  struct Acc {
    bool ps = false, fac = false;
    RecordStatus status = RecordStatus::Ok;
    StrategyLabel label;
  };
  std::map<std::string, Acc> acc;
  for (const auto& f : files) {
    detail::require_file(f, "prediction file");
    std::vector<ParsedRecord> recs;
    try {
      recs = parse_records(io::read_file(f), cb);
    } catch (const ParseError& e) {
      throw ParseError(e.line(), e.detail(), f.string() + ":" + std::to_string(e.line()));
    }
    for (auto& p : recs) {
      if (p.record.run_id != run) continue;
      auto& a = acc[p.record.utterance_id];
      if ((p.has_ps && a.ps) || (p.has_fac && a.fac))
        throw InputError("more than one prediction for " + p.record.utterance_id +
                         " (run " + std::to_string(run) + ")");
      a.ps |= p.has_ps;
      a.fac |= p.has_fac;
      auto st = p.record.status;
      if (st == RecordStatus::Failed || a.status == RecordStatus::Failed)
        a.status = RecordStatus::Failed;
      else if (st == RecordStatus::Unparsed)
        a.status = RecordStatus::Unparsed;
      if (p.record.label) {
        if (p.has_ps) a.label.ps = p.record.label->ps;
        if (p.has_fac) a.label.fac = p.record.label->fac;
      }
    }
  }
  MergedPredictions m;
  if (acc.empty()) throw InputError("no predictions for run " + std::to_string(run));
  for (const auto& [id, a] : acc) {
    m.has_ps &= a.ps;
    m.has_fac &= a.fac;
    Prediction p;
    p.status = a.status;
    if (a.status != RecordStatus::Failed) p.label = a.label;
    if (a.status == RecordStatus::Unparsed) p.label.reset();
    m.predictions.emplace(id, p);
  }
  return m;
}

struct EvaluateArgs {
  std::vector<fs::path> predictions;
  fs::path gold;
  int run = 1;
  fs::path per_class_table;
  bool none_in_weighted = false;
};

inline int run_evaluate(const RunConfig& cfg, const EvaluateArgs& a,
                        std::ostream& out, std::ostream& err) {
  Layout L{cfg.output};
  StageWriter w(L, "evaluate");

  if (!a.per_class_table.empty()) {
    detail::require_file(a.per_class_table, "per-class table");
    auto rows = parse_per_class_csv(io::read_file(a.per_class_table));
    auto ws = weighted_scores(rows);
    auto table = render_strategy_table(rows, ws);
    w.write(L.report("table_from_per_class.txt"), table);
    w.commit(cfg);
    out << table;
    return 0;
  }

  auto gold_path = a.gold.empty() ? cfg.gold : a.gold;
  detail::require_file(gold_path, "gold file");
  auto cb = Codebook::load(cfg.codebook);
  auto gold = load_gold(gold_path, cb);
  auto files = a.predictions;
  if (files.empty()) files.push_back(L.strategy(cfg.context));
  auto merged = merge_predictions(files, cb, a.run);

  ReportOptions ro;
  ro.none_in_dimension_weighted = a.none_in_weighted;
  std::vector<ScoreDimension> dims;
  if (merged.has_ps) dims.push_back(ScoreDimension::PsOnly);
  if (merged.has_fac) dims.push_back(ScoreDimension::FacOnly);
  if (merged.has_ps && merged.has_fac) dims.push_back(ScoreDimension::Overall);
  if (dims.empty()) throw InputError("prediction files carry neither ps nor fac labels");

  io::CsvWriter summary;
  summary.row({"dimension", "precision", "recall", "f1", "support", "accuracy", "scored",
               "unparsed_as_none", "missing_or_failed"});
  long long missing = 0, ignored = 0;
  for (auto d : dims) {
    auto rep = classification_report(merged.predictions, gold, d, cb, ro);
    auto name = std::string(to_string(d));
    w.write(L.report("eval_" + name + ".csv"), report_csv(rep));
    w.write(L.report("confusion_" + name + ".csv"), confusion_csv(rep.confusion));
    summary.row({name, text::format_fixed(rep.weighted.precision, 6),
                 text::format_fixed(rep.weighted.recall, 6),
                 text::format_fixed(rep.weighted.f1, 6),
                 std::to_string(rep.weighted.support), text::format_fixed(rep.accuracy, 6),
                 std::to_string(rep.scored), std::to_string(rep.unparsed_as_none),
                 std::to_string(rep.missing_or_failed)});
    out << name << ": weighted P " << text::format_fixed(rep.weighted.precision, 2)
        << " R " << text::format_fixed(rep.weighted.recall, 2) << " F1 "
        << text::format_fixed(rep.weighted.f1, 2) << " (support " << rep.weighted.support
        << ")\n";
    if (d == ScoreDimension::Overall) {
      auto table = render_strategy_table(rep.per_class, rep.weighted);
      w.write(L.report("strategy_table.txt"), table);
      out << table;
    }
    missing = rep.missing_or_failed;
    ignored = rep.ignored_predictions;
  }
  if (ignored)
    err << "note: " << ignored << " predictions have no gold label and were ignored\n";
  if (missing)
    err << "note: " << missing
        << " gold utterances had no usable prediction and were not scored\n";
  w.write(L.report("eval_summary.csv"), summary.str());
  w.commit(cfg);
  return 0;
}

// Label sources for the analyses

/// Run-1 labels from the strategy annotations (ok records only), or from a
/// gold file when one is given.
inline std::map<std::string, StrategyLabel> strategy_labels(const RunConfig& cfg,
                                                            const Codebook& cb,
                                                            const fs::path& gold) {
  std::map<std::string, StrategyLabel> out;
  if (!gold.empty()) {
    detail::require_file(gold, "gold file");
    return load_gold(gold, cb).entries;
  }
  Layout L{cfg.output};
  auto path = L.strategy(cfg.context);
  if (!fs::exists(path))
    throw InputError(path.string() + " is missing; run `pstcode annotate` first");
  for (const auto& r : load_records(path, cb))
    if (r.run_id == 1 && r.status == RecordStatus::Ok && r.label)
      out.emplace(r.utterance_id, *r.label);
  return out;
}

// dynamics

inline int run_dynamics(const RunConfig& cfg, bool fresh, std::ostream& out,
                        std::ostream& err) {
  cfg.validate();
  Layout L{cfg.output};
  auto targets = detail::load_stage_corpus(L.therapist());
  auto cb = Codebook::load(cfg.codebook);
  detail::require_file(cfg.dynamics_prompt, "dynamics prompt");
  auto prompt = DynamicsPrompt::load(cfg.dynamics_prompt);
  auto backend = make_backend(cfg.backend, cb);
  auto opt = annotate_options(cfg);
  opt.journal = L.dynamics_journal();
  if (fresh) fs::remove(*opt.journal);
  auto records = annotate_dynamics(targets, prompt, *backend, opt);

  StageWriter w(L, "dynamics");
  w.write(L.dynamics(), serialize_dynamics_records(records));
  fs::remove(*opt.journal);

  std::vector<DynamicsLabel> labels;
  std::map<std::string, DynamicsLabel> by_id;
  long long failed = 0, unparsed = 0;
  for (const auto& r : records) {
    failed += r.status == RecordStatus::Failed;
    unparsed += r.status == RecordStatus::Unparsed;
    if (r.status == RecordStatus::Ok && r.label) {
      labels.push_back(*r.label);
      by_id.emplace(r.utterance_id, *r.label);
    }
  }
  if (!labels.empty()) {
    const std::pair<const char*, const char*> pairs[] = {
        {"autonomy", "question type"},
        {"autonomy", "self disclosure"},
        {"question type", "self disclosure"},
        {"autonomy", "metaphor"}};
    for (const auto& [r, c] : pairs) {
      auto m = cooccurrence(labels, r, c);
      w.write(L.report("dynamics_" + m.row_dimension + "_by_" + m.col_dimension + ".csv"),
              cooccurrence_csv(m));
    }
  }

  auto strat_path = L.strategy(cfg.context);
  if (fs::exists(strat_path) && !by_id.empty()) {
    auto strat = strategy_labels(cfg, cb, {});
    auto table = dynamics_by_strategy(by_id, strat, cb);
    w.write(L.report("dynamics_by_strategy.csv"), dynamics_by_strategy_csv(table));
    std::vector<std::string> lines;
    for (const auto& r : table.rows) lines.push_back(metaphor_share_line(r));
    w.write(L.report("metaphor_share.txt"), detail::join_lines(lines));
  } else {
    err << "note: no strategy annotations for context '" << to_string(cfg.context)
        << "'; skipping the per-strategy dynamics table\n";
  }
  nlohmann::ordered_json extra;
  extra["records"] = records.size();
  extra["unparsed"] = unparsed;
  extra["failed"] = failed;
  w.commit(cfg, extra);
  out << "dynamics for " << records.size() << " utterances: ok " << labels.size()
      << ", unparsed " << unparsed << ", failed " << failed << "\n";
  return failed > 0 ? 1 : 0;
}

// patterns

struct PatternsArgs {
  fs::path gold;  // label source override
  std::size_t top_bigrams = 10;
  std::size_t top_categories = 2;
};

inline int run_patterns(const RunConfig& cfg, const PatternsArgs& a, std::ostream& out,
                        std::ostream&) {
  Layout L{cfg.output};
  auto targets = detail::load_stage_corpus(L.therapist());
  auto cb = Codebook::load(cfg.codebook);
  auto labels = strategy_labels(cfg, cb, a.gold);
  detail::require_file(cfg.stopwords, "stopword list");
  detail::require_file(cfg.lexicon, "lexicon");
  auto stop = load_stopwords(cfg.stopwords);
  auto lex = Lexicon::load(cfg.lexicon);

  std::vector<std::pair<std::string, StrategyLabel>> labeled;
  for (const auto& u : targets) {
    auto it = labels.find(u.utterance_id);
    if (it != labels.end()) labeled.emplace_back(u.text, it->second);
  }
  if (labeled.empty()) throw InputError("no labeled therapist utterances to analyze");

  auto groups = group_by_strategy(labeled, cb);
  StageWriter w(L, "patterns");
  w.write(L.report("bigrams.csv"), bigrams_csv(top_bigrams(groups, stop, a.top_bigrams)));
  w.write(L.report("lexicon.csv"), lexicon_csv(lexicon_frequencies(groups, lex)));
  auto rows = pattern_table(labeled, cb, stop, lex, 3, a.top_categories);
  w.write(L.report("patterns.csv"), pattern_table_csv(rows));
  w.commit(cfg);
  out << "patterns over " << labeled.size() << " labeled utterances\n";
  for (const auto& r : rows) out << distribution_line(r.strategy, r.percentage, r.count) << "\n";
  return 0;
}

// progression

inline int run_progression(const RunConfig& cfg, const fs::path& gold, bool include_none,
                           std::ostream& out, std::ostream&) {
  Layout L{cfg.output};
  auto targets = detail::load_stage_corpus(L.therapist());
  auto cb = Codebook::load(cfg.codebook);
  auto labels = strategy_labels(cfg, cb, gold);
  std::vector<VisitLabel> vl;
  for (const auto& u : targets) {
    auto it = labels.find(u.utterance_id);
    if (it != labels.end()) vl.push_back({u.visit_index, it->second});
  }
  std::vector<StrategyDistribution> ds{
      strategy_progression(vl, StrategyDimension::Ps, cb, include_none),
      strategy_progression(vl, StrategyDimension::Fac, cb, include_none)};
  StageWriter w(L, "progression");
  w.write(L.report("progression.csv"), progression_csv(ds));
  w.commit(cfg);
  for (const auto& d : ds)
    for (const auto& [v, rows] : d.per_visit) {
      out << "visit " << v << " (" << to_string(d.dimension) << ", " << d.labeled.at(v)
          << " labeled)\n";
      for (const auto& r : rows)
        out << "  " << distribution_line(r.category, r.percentage, r.count)
            << (r.included ? "" : " [not normalized]") << "\n";
    }
  return 0;
}

// agreement

inline int run_agreement(const RunConfig& cfg, const fs::path& a, const fs::path& b,
                         std::ostream& out, std::ostream&) {
  detail::require_file(a, "gold file");
  detail::require_file(b, "gold file");
  Layout L{cfg.output};
  auto cb = Codebook::load(cfg.codebook);
  auto ga = load_gold(a, cb);
  auto gb = load_gold(b, cb);
  auto rep = agreement(ga, gb, cb);
  StageWriter w(L, "agreement");
  w.write(L.report("agreement.csv"), agreement_csv(rep));
  w.commit(cfg);
  out << "kappa over " << rep.items << " utterances: ps "
      << text::format_fixed(rep.ps.kappa, 3) << ", fac "
      << text::format_fixed(rep.fac.kappa, 3) << ", composite "
      << text::format_fixed(rep.composite.kappa, 3) << "\n";
  return 0;
}

}  // namespace pstcode
