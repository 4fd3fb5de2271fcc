#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pstcode/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string corpus;
  std::string codebook;
  std::string model;
  std::string backend;
  std::string context;
  std::string output;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
};

pstcode::RunConfig resolve(const Overrides& o) {
  pstcode::RunConfig c;
  if (!o.config.empty()) {
    if (!std::filesystem::exists(o.config))
      throw pstcode::InputError("config not found: " + o.config);
    c = pstcode::load_config(o.config);
  }
  if (!o.corpus.empty()) c.corpus = o.corpus;
  if (!o.codebook.empty()) c.codebook = o.codebook;
  if (!o.backend.empty()) c.backend.kind = pstcode::parse_backend_kind(o.backend);
  if (!o.model.empty()) c.backend.model_id = o.model;
  if (!o.context.empty()) c.context = pstcode::parse_context_mode(o.context);
  if (!o.output.empty()) c.output = o.output;
  if (o.runs) c.runs = *o.runs;
  if (o.seed) c.seed = *o.seed;
  if (o.parallelism) c.backend.parallelism = *o.parallelism;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Problem-Solving Therapy strategy annotation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--corpus", o.corpus, "raw transcript JSONL");
  app.add_option("--codebook", o.codebook, "codebook file");
  app.add_option("--backend", o.backend, "mock, replay or http");
  app.add_option("--model", o.model, "model identifier");
  app.add_option("--context", o.context, "none or two-prev")
      ->check(CLI::IsMember({"none", "two-prev"}));
  app.add_option("--runs", o.runs, "repeated runs per utterance")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "seed for the mock backend");
  app.add_option("--parallelism", o.parallelism, "concurrent requests")
      ->check(CLI::PositiveNumber);
  app.add_option("--output", o.output, "output directory");

  auto* ingest = app.add_subcommand("ingest", "parse, validate and filter the corpus");

  bool consistency = false, fresh = false;
  auto* annotate = app.add_subcommand("annotate", "label therapist utterances");
  annotate->add_flag("--consistency", consistency, "also write the entropy report");
  annotate->add_flag("--fresh", fresh, "discard a partial run instead of resuming");

  pstcode::EvaluateArgs ev;
  std::vector<std::string> pred_files;
  std::string gold, table;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
  evaluate->add_option("--predictions", pred_files, "prediction JSONL file(s)");
  evaluate->add_option("--gold", gold, "gold CSV");
  evaluate->add_option("--run", ev.run, "run id to score")->check(CLI::PositiveNumber);
  evaluate->add_option("--per-class-table", table,
                       "recompute the weighted row of a per-class score table");
  evaluate->add_flag("--none-in-weighted", ev.none_in_weighted,
                     "include None in the per-dimension weighted averages");

  bool dyn_fresh = false;
  auto* dynamics = app.add_subcommand("dynamics", "label therapeutic dynamics");
  dynamics->add_flag("--fresh", dyn_fresh, "discard a partial run instead of resuming");

  pstcode::PatternsArgs pa;
  std::string pat_labels;
  auto* patterns = app.add_subcommand("patterns", "bigrams and lexicon categories");
  patterns->add_option("--labels", pat_labels, "gold CSV to use instead of annotations");
  patterns->add_option("--top", pa.top_bigrams, "bigrams per strategy")
      ->check(CLI::PositiveNumber);

  std::string prog_labels;
  bool include_none = false;
  auto* progression = app.add_subcommand("progression", "strategy distribution per visit");
  progression->add_option("--labels", prog_labels, "gold CSV to use instead of annotations");
  progression->add_flag("--include-none", include_none, "normalize over None as well");

  std::vector<std::string> raters;
  auto* agree = app.add_subcommand("agreement", "Cohen's kappa between two gold files");
  agree->add_option("files", raters, "two gold CSV files")->required()->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto cfg = resolve(o);
    auto& out = std::cout;
    auto& err = std::cerr;
    if (*ingest) return pstcode::run_ingest(cfg, out, err);
    if (*annotate) return pstcode::run_annotate(cfg, consistency, fresh, out, err);
    if (*evaluate) {
      for (const auto& f : pred_files) ev.predictions.emplace_back(f);
      ev.gold = gold;
      ev.per_class_table = table;
      return pstcode::run_evaluate(cfg, ev, out, err);
    }
    if (*dynamics) return pstcode::run_dynamics(cfg, dyn_fresh, out, err);
    if (*patterns) {
      pa.gold = pat_labels;
      return pstcode::run_patterns(cfg, pa, out, err);
    }
    if (*progression) return pstcode::run_progression(cfg, prog_labels, include_none, out, err);
    if (*agree) return pstcode::run_agreement(cfg, raters[0], raters[1], out, err);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
