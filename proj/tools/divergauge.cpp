// divergauge command line: ingest, gen, embed, eval, ttest, report, fixture, train.

#include "divergauge/config.hpp"
#include "divergauge/dataset.hpp"
#include "divergauge/evaluate.hpp"
#include "divergauge/experiment.hpp"
#include "divergauge/fixture.hpp"
#include "divergauge/report.hpp"
#include "divergauge/toylm.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace divergauge;
namespace fs = std::filesystem;

namespace {

std::vector<DatasetPrompt> read_dataset_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  return read_dataset(f, path);
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

// ingest ----------------------------------------------------------------------

struct IngestArgs {
  std::string raw, out, reference_out, adapter;
  std::size_t min_responses = 50, keep = 50, incipit_tokens = 20;
  std::vector<std::string> patterns;
  bool no_default_patterns = false;
};

int cmd_ingest(const IngestArgs& a) {
  IngestOptions o;
  o.min_responses = a.min_responses;
  o.keep = a.keep;
  if (a.no_default_patterns) o.drop_patterns.clear();
  o.drop_patterns.insert(o.drop_patterns.end(), a.patterns.begin(), a.patterns.end());
  const auto rep = ingest_dataset(read_dataset_file(a.raw), o);
  {
    auto f = open_out(a.out);
    write_dataset(f, rep.prompts);
  }
  std::cerr << "ingest: " << rep.prompts_seen << " prompts read, " << rep.prompts_dropped << " below "
            << o.min_responses << " responses, " << rep.responses_dropped << " commentary responses dropped, "
            << rep.prompts.size() << " kept\n";
  if (!a.reference_out.empty()) {
    std::optional<IncipitTruncator> truncator;
    if (!a.adapter.empty()) truncator.emplace(a.adapter);
    const auto sets = reference_sample_sets(rep.prompts, [&](const std::string& t) {
      return truncator ? truncator->truncate(t, a.incipit_tokens).incipit : make_incipit(t, a.incipit_tokens);
    });
    std::vector<SampleRecord> all;
    for (const auto& s : sets) all.insert(all.end(), s.samples.begin(), s.samples.end());
    fs::create_directories(a.reference_out);
    write_samples((fs::path(a.reference_out) / "samples.ndjson").string(), all);
    auto m = open_out(fs::path(a.reference_out) / "manifest.json");
    m << nlohmann::json{{"label", "reference"}, {"dataset_sha", file_hash(a.out)}, {"samples", all.size()}}.dump(2)
      << '\n';
    std::cerr << "ingest: " << all.size() << " reference samples written to " << a.reference_out << "\n";
  }
  return 0;
}

// gen -------------------------------------------------------------------------

struct GenArgs {
  std::string config, dataset, out;
  std::optional<std::size_t> threads, prompts, samples, max_tokens;
  std::optional<std::uint64_t> seed;
  bool pre_truncation_mix = false;
};

int cmd_gen(const GenArgs& a) {
  auto cfg = load_config(a.config);
  if (a.threads) cfg.threads = *a.threads;
  if (a.seed) cfg.decode.seed = *a.seed;
  if (a.samples) cfg.samples_per_prompt = *a.samples;
  if (a.max_tokens) cfg.decode.max_tokens = *a.max_tokens;
  if (a.pre_truncation_mix) cfg.decode.mix_before_truncation = true;
  cfg.validate();
  auto prompts = read_dataset_file(a.dataset);
  if (a.prompts && *a.prompts < prompts.size()) prompts.resize(*a.prompts);
  const auto r = run_experiment(cfg, prompts);
  write_run(a.out, cfg, r, file_hash(a.dataset));
  std::cerr << "gen " << cfg.label << ": " << r.samples.size() << " samples, status " << r.status
            << ", config " << r.config_hash << " -> " << a.out << "\n";
  for (const auto& f : r.failures) std::cerr << "  failed " << f.sample_id << ": " << f.error << "\n";
  if (r.status == "aborted") {
    std::cerr << "gen: aborted: " << r.abort_reason << "\n";
    return 3;
  }
  return r.status == "complete" ? 0 : 4;
}

// embed -----------------------------------------------------------------------

struct EmbedArgs {
  std::vector<std::string> runs;
  std::string adapter;
  std::size_t dim = 64;
  std::uint64_t projection_seed = ProjectionEmbedder{}.seed;
  bool exclude_incipit = false;
};

int cmd_embed(const EmbedArgs& a) {
  EmbedOptions o;
  o.adapter_command = a.adapter;
  o.projection.dim = a.dim;
  o.projection.seed = a.projection_seed;
  o.include_incipit = !a.exclude_incipit;
  for (const auto& r : a.runs) {
    embed_run(r, o);
    std::cerr << "embed: " << r << " done\n";
  }
  return 0;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> runs, pairs, metrics;
  std::string reference, out;
  bool exclude_incipit = false, per_prompt_pr = false, no_reference_scores = false;
  std::size_t threads = 1, k = 3;
  std::uint64_t mauve_seed = 25;
  std::size_t mauve_clusters = 0;
  double te_floor = 1e-10;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<LoadedRun> runs;
  for (const auto& spec : a.runs) {
    const auto eq = spec.find('=');
    if (eq != std::string::npos && !fs::exists(spec)) runs.push_back(load_run(spec.substr(eq + 1), spec.substr(0, eq)));
    else runs.push_back(load_run(spec));
  }
  EvalOptions o;
  o.include_incipit = !a.exclude_incipit;
  o.per_prompt_pr = a.per_prompt_pr;
  o.score_reference = !a.no_reference_scores;
  o.threads = a.threads;
  o.pr_k = a.k;
  o.mauve.seed = a.mauve_seed;
  o.mauve.clusters = a.mauve_clusters;
  o.te.eigenvalue_floor = a.te_floor;
  for (const auto& m : a.metrics) {
    const auto& pp = per_prompt_metrics();
    const auto& ap = across_prompt_metrics();
    if (std::find(pp.begin(), pp.end(), m) == pp.end() && std::find(ap.begin(), ap.end(), m) == ap.end())
      throw std::invalid_argument("unknown metric " + m);
    o.metrics.push_back(m);
  }
  for (const auto& p : a.pairs) o.pairs.push_back(parse_pair(p));
  std::optional<LoadedRun> reference;
  if (!a.reference.empty()) reference = load_run(a.reference, o.reference_label);
  const auto rep = evaluate(runs, reference, o);
  for (const auto& n : rep.notices) std::cerr << "notice: " << n << "\n";
  if (a.out.empty()) {
    write_report(std::cout, rep);
  } else {
    write_report_files(a.out, rep);
    std::cerr << "eval: " << rep.records.size() << " records -> " << a.out << "\n";
  }
  return 0;
}

// ttest -----------------------------------------------------------------------

struct TTestArgs {
  std::string report;
  std::vector<std::string> pairs, metrics;
};

int cmd_ttest(const TTestArgs& a) {
  std::ifstream f(a.report);
  if (!f) throw std::runtime_error("cannot read " + a.report);
  const auto records = read_report(f, a.report);
  std::vector<std::string> metrics = a.metrics.empty() ? per_prompt_metrics() : a.metrics;
  std::vector<std::string> notices;
  for (const auto& p : a.pairs) {
    for (const auto& r : paired_ttests(records, parse_pair(p), metrics, &notices)) {
      std::cout << to_json(r).dump() << '\n';
      std::cerr << r.metric << " " << r.config << ": t=" << r.params["t"] << " df=" << r.params["df"]
                << " p=" << r.value << "\n";
    }
  }
  for (const auto& n : notices) std::cerr << "notice: " << n << "\n";
  return 0;
}

// report ----------------------------------------------------------------------

struct ReportArgs {
  std::string report, out_dir;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream f(a.report);
  if (!f) throw std::runtime_error("cannot read " + a.report);
  const auto records = read_report(f, a.report);
  std::vector<std::string> notices;
  const auto prov = fs::path(a.report).replace_extension(".provenance.json");
  if (fs::exists(prov)) {
    std::ifstream p(prov);
    const auto j = nlohmann::json::parse(p);
    if (j.contains("notices")) notices = j["notices"].get<std::vector<std::string>>();
  }
  if (a.out_dir.empty()) {
    render_markdown(std::cout, records, notices);
    return 0;
  }
  const fs::path dir = a.out_dir;
  {
    auto md = open_out(dir / "report.md");
    render_markdown(md, records, notices);
  }
  auto csv = open_out(dir / "report.csv");
  render_csv(csv, records);
  std::cerr << "report: " << (dir / "report.md").string() << ", " << (dir / "report.csv").string() << "\n";
  return 0;
}

// fixture ---------------------------------------------------------------------

int cmd_fixture(const std::string& out, const FixtureOptions& o) {
  const auto p = write_fixture(out, o);
  std::cerr << "fixture written to " << p.dir.string() << ": base.ngram, instruct.ngram, dataset.raw.ndjson, "
            << "base.cfg, A.cfg, B.cfg\n";
  return 0;
}

// train -----------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, sharpened_out;
  std::size_t order = 3;
  double smoothing = 0.01;
  std::optional<double> tau, subset;
  std::uint64_t subset_seed = 1;
};

int cmd_train(const TrainArgs& a) {
  std::ifstream f(a.corpus);
  if (!f) throw std::runtime_error("cannot read " + a.corpus);
  std::vector<std::vector<std::string>> corpus;
  std::string line;
  while (std::getline(f, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) corpus.push_back(std::move(toks));
  }
  const auto lm = train_ngram_lm(corpus, a.order, a.smoothing);
  {
    auto o = open_out(a.out);
    lm.save(o);
  }
  std::cerr << "train: " << corpus.size() << " sequences, vocab " << lm.vocab_size() << " -> " << a.out << "\n";
  if (a.tau && a.subset) throw std::invalid_argument("choose one of --tau and --subset");
  if (a.tau || a.subset) {
    if (a.sharpened_out.empty()) throw std::invalid_argument("--sharpened-out is required with --tau/--subset");
    std::vector<TokenSeq> ids;
    for (const auto& s : corpus) ids.push_back(lm.vocab().encode(s));
    const auto spec = a.tau ? SharpenSpec::temperature(*a.tau) : SharpenSpec::subset(*a.subset, a.subset_seed);
    const auto sharp = sharpen_lm(lm, spec, ids);
    auto o = open_out(a.sharpened_out);
    sharp.save(o);
    std::cerr << "train: sharpened model -> " << a.sharpened_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divergauge: conformative decoding and text diversity measurement"};
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Filter a raw writing-prompt dataset");
  ingest->add_option("--raw", ia.raw, "NDJSON of {prompt, responses[], id?}")->required();
  ingest->add_option("--out", ia.out, "Filtered dataset (NDJSON)")->required();
  ingest->add_option("--min-responses", ia.min_responses, "Exclude prompts with fewer responses")
      ->capture_default_str();
  ingest->add_option("--keep", ia.keep, "Responses kept per prompt")->capture_default_str();
  ingest->add_option("--drop-pattern", ia.patterns, "Extra commentary regex, matched at the response start");
  ingest->add_flag("--no-default-patterns", ia.no_default_patterns, "Drop the built-in commentary patterns");
  ingest->add_option("--reference-out", ia.reference_out, "Also write the responses as a reference run directory");
  ingest->add_option("--incipit-tokens", ia.incipit_tokens, "Incipit length for reference samples")
      ->capture_default_str();
  ingest->add_option("--adapter", ia.adapter, "Adapter command for subword incipits");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate samples for one configuration");
  gen->add_option("--config", ga.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  gen->add_option("--dataset", ga.dataset, "Ingested dataset")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", ga.out, "Run directory")->required();
  gen->add_option("--threads", ga.threads, "Worker threads (toy models only)");
  gen->add_option("--seed", ga.seed, "Override the global seed");
  gen->add_option("--prompts", ga.prompts, "Use only the first N prompts");
  gen->add_option("--samples", ga.samples, "Override samples per prompt");
  gen->add_option("--max-tokens", ga.max_tokens, "Override the token limit");
  gen->add_flag("--pre-truncation-mix", ga.pre_truncation_mix, "Mix with the base before truncating (ablation)");

  EmbedArgs ea;
  auto* embed = app.add_subcommand("embed", "Embed the samples of one or more runs");
  embed->add_option("runs", ea.runs, "Run directories or sample files")->required();
  embed->add_option("--adapter", ea.adapter, "Adapter command (default: built-in projection embedder)");
  embed->add_option("--dim", ea.dim, "Projection dimension")->capture_default_str();
  embed->add_option("--projection-seed", ea.projection_seed, "Projection seed")->capture_default_str();
  embed->add_flag("--exclude-incipit", ea.exclude_incipit, "Embed generated text without its incipit");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Score runs against a reference");
  eval->add_option("--run", va.runs, "[LABEL=]PATH of a run directory or sample file")->required();
  eval->add_option("--reference", va.reference, "Reference run directory or sample file");
  eval->add_option("--pair", va.pairs, "Paired one-tailed test, e.g. B>A (H1: B greater)");
  eval->add_option("--metric", va.metrics, "Restrict to these metrics");
  eval->add_option("--out", va.out, "Report NDJSON (default: stdout)");
  eval->add_flag("--exclude-incipit", va.exclude_incipit, "Score generated text without its incipit");
  eval->add_flag("--per-prompt-pr", va.per_prompt_pr, "Average per-prompt P&R instead of pooling");
  eval->add_flag("--no-reference-scores", va.no_reference_scores, "Skip per-prompt metrics of the reference");
  eval->add_option("--threads", va.threads, "Worker threads")->capture_default_str();
  eval->add_option("--k", va.k, "Neighbours for P&R")->capture_default_str();
  eval->add_option("--mauve-seed", va.mauve_seed, "k-means seed")->capture_default_str();
  eval->add_option("--mauve-clusters", va.mauve_clusters, "Clusters (0: total/10)")->capture_default_str();
  eval->add_option("--te-floor", va.te_floor, "Eigenvalue floor for truncated entropy")->capture_default_str();

  TTestArgs ta;
  auto* ttest = app.add_subcommand("ttest", "Paired one-tailed t-tests over per-prompt report records");
  ttest->add_option("--report", ta.report, "Report NDJSON")->required();
  ttest->add_option("--pair", ta.pairs, "e.g. B>A")->required();
  ttest->add_option("--metric", ta.metrics, "Per-prompt metrics (default: all)");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Render a report as Markdown and CSV");
  report->add_option("--report", ra.report, "Report NDJSON")->required();
  report->add_option("--out-dir", ra.out_dir, "Write report.md and report.csv here (default: Markdown to stdout)");

  std::string fixture_out;
  FixtureOptions fo;
  auto* fixture = app.add_subcommand("fixture", "Write the bundled toy models, dataset and configs");
  fixture->add_option("--out", fixture_out, "Output directory")->required();
  fixture->add_option("--seed", fo.seed, "Corpus seed")->capture_default_str();
  fixture->add_option("--stories", fo.training_stories, "Training stories")->capture_default_str();
  fixture->add_option("--tau", fo.tau, "Sharpening temperature of the instruct model")->capture_default_str();
  fixture->add_option("--samples", fo.samples_per_prompt, "Samples per prompt in the configs")
      ->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train an n-gram model on a text file (one sequence per line)");
  train->add_option("--corpus", tr.corpus, "Text file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "Model file")->required();
  train->add_option("--order", tr.order, "n-gram order")->capture_default_str();
  train->add_option("--smoothing", tr.smoothing, "Additive smoothing")->capture_default_str();
  train->add_option("--tau", tr.tau, "Also write a temperature-sharpened copy");
  train->add_option("--subset", tr.subset, "Also write a copy retrained on this corpus fraction");
  train->add_option("--subset-seed", tr.subset_seed, "Seed for the subset selection")->capture_default_str();
  train->add_option("--sharpened-out", tr.sharpened_out, "Path of the sharpened copy");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest) return cmd_ingest(ia);
    if (*gen) return cmd_gen(ga);
    if (*embed) return cmd_embed(ea);
    if (*eval) return cmd_eval(va);
    if (*ttest) return cmd_ttest(ta);
    if (*report) return cmd_report(ra);
    if (*fixture) return cmd_fixture(fixture_out, fo);
    if (*train) return cmd_train(tr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
