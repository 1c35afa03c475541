#pragma once

// Run evaluation: per-prompt diversity, pooled quality/coverage against a
// reference set, and paired t-tests between configurations.
//
// A run is a directory holding samples.ndjson, optionally manifest.json and
// embeddings.dgem (+ embeddings.json), or a bare samples file whose
// embeddings, if any, sit next to it as <stem>.dgem / <stem>.embed.json.

#include "divergauge/config.hpp"
#include "divergauge/dgem.hpp"
#include "divergauge/embedder.hpp"
#include "divergauge/features.hpp"
#include "divergauge/metrics.hpp"
#include "divergauge/protocol.hpp"
#include "divergauge/samples.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace divergauge {

namespace fs = std::filesystem;

struct RunPaths {
  fs::path samples;
  fs::path manifest;  // may not exist
  fs::path embeddings;
  fs::path embed_meta;
};

inline RunPaths run_paths(const fs::path& p) {
  RunPaths r;
  if (fs::is_directory(p)) {
    r.samples = p / "samples.ndjson";
    r.manifest = p / "manifest.json";
    r.embeddings = p / "embeddings.dgem";
    r.embed_meta = p / "embeddings.json";
  } else {
    r.samples = p;
    r.manifest = fs::path(p).replace_extension(".manifest.json");
    r.embeddings = fs::path(p).replace_extension(".dgem");
    r.embed_meta = fs::path(p).replace_extension(".embed.json");
  }
  return r;
}

struct LoadedRun {
  std::string label;
  std::string path;
  std::string samples_sha;
  std::vector<SampleRecord> samples;
  std::optional<EmbeddingMatrix> embeddings;
  nlohmann::json embed_meta;  // {model, include_incipit, samples_sha}
  std::string embeddings_sha;

  std::string config_hash() const { return samples.empty() ? "" : samples.front().config_hash; }
};

// Label: explicit, else the manifest's, else the samples' common config hash.
inline LoadedRun load_run(const fs::path& p, const std::string& label = "") {
  const auto paths = run_paths(p);
  LoadedRun run;
  run.path = p.string();
  run.samples = read_samples(paths.samples.string());
  run.samples_sha = file_hash(paths.samples.string());
  run.label = label;
  if (run.label.empty() && fs::exists(paths.manifest)) {
    std::ifstream m(paths.manifest);
    run.label = nlohmann::json::parse(m).value("label", std::string());
  }
  std::set<std::string> hashes;
  for (const auto& s : run.samples) hashes.insert(s.config_hash);
  if (hashes.size() > 1) {
    std::string list;
    for (const auto& h : hashes) list += (list.empty() ? "" : ", ") + h;
    throw std::runtime_error(paths.samples.string() + ": samples from several configurations (" + list +
                             ") cannot share one label");
  }
  if (run.label.empty()) run.label = run.config_hash();
  if (fs::exists(paths.embeddings)) {
    run.embeddings = read_embeddings(paths.embeddings.string());
    run.embeddings_sha = file_hash(paths.embeddings.string());
    if (fs::exists(paths.embed_meta)) {
      std::ifstream m(paths.embed_meta);
      run.embed_meta = nlohmann::json::parse(m);
    }
  }
  return run;
}

// ============================================================================
// Embedding runs
// ============================================================================

struct EmbedOptions {
  std::string adapter_command;  // empty: in-process projection embedder
  ProjectionEmbedder projection;
  bool include_incipit = true;
};

inline EmbeddingMatrix embed_samples(const std::vector<SampleRecord>& samples, const EmbedOptions& opts,
                                     const std::string& out_path, std::string* model_id) {
  std::vector<std::string> ids, texts;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    texts.push_back(evaluation_text(s, opts.include_incipit));
  }
  if (opts.adapter_command.empty()) {
    auto e = opts.projection.embed(ids, texts);
    write_embeddings(e, out_path);
    if (model_id) *model_id = opts.projection.model_id();
    return e;
  }
  auto e = embed_with_adapter(opts.adapter_command, ids, texts, out_path);
  if (model_id) *model_id = "adapter:" + opts.adapter_command;
  return e;
}

// Embeds a run in place, writing the DGEM file and its metadata sidecar.
inline void embed_run(const fs::path& p, const EmbedOptions& opts) {
  const auto paths = run_paths(p);
  const auto samples = read_samples(paths.samples.string());
  std::string model;
  embed_samples(samples, opts, paths.embeddings.string(), &model);
  nlohmann::json meta = {{"model", model},
                         {"include_incipit", opts.include_incipit},
                         {"samples_sha", file_hash(paths.samples.string())}};
  std::ofstream m(paths.embed_meta, std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write " + paths.embed_meta.string());
  m << meta.dump(2) << '\n';
}

// ============================================================================
// Reports
// ============================================================================

struct ReportRecord {
  std::string metric;
  std::string scope;  // per_prompt | across_prompts | paired
  std::string config;
  std::string prompt_id;  // per_prompt only
  double value = 0.0;
  nlohmann::json params = nlohmann::json::object();
};

inline nlohmann::json to_json(const ReportRecord& r) {
  nlohmann::json j = {{"metric", r.metric}, {"scope", r.scope}, {"config", r.config}};
  if (!r.prompt_id.empty()) j["prompt_id"] = r.prompt_id;
  j["value"] = r.value;
  j["params"] = r.params;
  return j;
}

inline ReportRecord report_record_from_json(const nlohmann::json& j) {
  ReportRecord r;
  r.metric = j.at("metric").get<std::string>();
  r.scope = j.at("scope").get<std::string>();
  r.config = j.at("config").get<std::string>();
  if (j.contains("prompt_id")) r.prompt_id = j["prompt_id"].get<std::string>();
  r.value = j.at("value").get<double>();
  if (j.contains("params")) r.params = j["params"];
  return r;
}

struct RunReport {
  std::vector<ReportRecord> records;
  std::vector<std::string> notices;
  nlohmann::json provenance = nlohmann::json::object();

  std::vector<ReportRecord> select(const std::string& metric, const std::string& scope,
                                   const std::string& config = "") const {
    std::vector<ReportRecord> out;
    for (const auto& r : records)
      if (r.metric == metric && r.scope == scope && (config.empty() || r.config == config)) out.push_back(r);
    return out;
  }

  std::optional<double> value(const std::string& metric, const std::string& scope,
                              const std::string& config) const {
    auto s = select(metric, scope, config);
    if (s.size() != 1) return std::nullopt;
    return s.front().value;
  }
};

inline void write_report(std::ostream& os, const RunReport& r) {
  for (const auto& rec : r.records) os << to_json(rec).dump() << '\n';
}

inline std::vector<ReportRecord> read_report(std::istream& is, const std::string& origin = "<report>") {
  std::vector<ReportRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(report_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ============================================================================
// Evaluation
// ============================================================================

inline const std::vector<std::string>& per_prompt_metrics() {
  static const std::vector<std::string> m{"vs_ngram", "vs_embed", "te"};
  return m;
}

inline const std::vector<std::string>& across_prompt_metrics() {
  static const std::vector<std::string> m{"precision", "recall", "mauve_lite"};
  return m;
}

struct ConfigPair {
  std::string better;    // H1: mean(better) > mean(baseline)
  std::string baseline;

  std::string name() const { return better + ">" + baseline; }
};

// "B>A" or "B,A".
inline ConfigPair parse_pair(const std::string& s) {
  auto pos = s.find('>');
  if (pos == std::string::npos) pos = s.find(',');
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
    throw std::invalid_argument("pair must look like B>A, got \"" + s + "\"");
  return {s.substr(0, pos), s.substr(pos + 1)};
}

struct EvalOptions {
  std::vector<std::string> metrics;  // empty: all
  bool include_incipit = true;
  std::vector<std::size_t> ngram_orders = default_ngram_orders();
  std::size_t pr_k = 3;
  bool per_prompt_pr = false;  // mean of per-prompt P&R instead of pooling
  MauveOptions mauve;
  TruncatedEntropyOptions te;
  std::vector<ConfigPair> pairs;
  std::string reference_label = "reference";
  bool score_reference = true;  // per-prompt metrics for the reference too
  std::size_t threads = 1;

  bool wants(const std::string& m) const {
    return metrics.empty() || std::find(metrics.begin(), metrics.end(), m) != metrics.end();
  }
};

inline ReportRecord paired_ttest_record(const std::string& metric, const ConfigPair& pair,
                                        const std::vector<double>& better,
                                        const std::vector<double>& baseline) {
  const auto t = paired_ttest_one_tailed(better, baseline);
  ReportRecord r;
  r.metric = "ttest_" + metric;
  r.scope = "paired";
  r.config = pair.name();
  r.value = t.p;
  r.params = {{"t", t.t},
              {"df", t.df},
              {"mean_difference", t.mean_difference},
              {"n", better.size()},
              {"degenerate", t.degenerate}};
  return r;
}

// Per-prompt series of one metric for one configuration, keyed by prompt id.
inline std::map<std::string, double> per_prompt_series(const std::vector<ReportRecord>& records,
                                                       const std::string& metric,
                                                       const std::string& config) {
  std::map<std::string, double> out;
  for (const auto& r : records)
    if (r.scope == "per_prompt" && r.metric == metric && r.config == config) out[r.prompt_id] = r.value;
  return out;
}

// t-tests over prompts both configurations share.
inline std::vector<ReportRecord> paired_ttests(const std::vector<ReportRecord>& records, const ConfigPair& pair,
                                               const std::vector<std::string>& metrics,
                                               std::vector<std::string>* notices = nullptr) {
  std::vector<ReportRecord> out;
  for (const auto& m : metrics) {
    const auto a = per_prompt_series(records, m, pair.better);
    const auto b = per_prompt_series(records, m, pair.baseline);
    std::vector<double> xa, xb;
    for (const auto& [pid, v] : a) {
      auto it = b.find(pid);
      if (it == b.end()) continue;
      xa.push_back(v);
      xb.push_back(it->second);
    }
    if (xa.size() < 2) {
      if (notices && (!a.empty() || !b.empty()))
        notices->push_back("ttest " + m + " " + pair.name() + ": fewer than 2 shared prompts, skipped");
      continue;
    }
    out.push_back(paired_ttest_record(m, pair, xa, xb));
  }
  return out;
}

namespace detail {

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Why a run's embeddings cannot be used, or empty when they can.
inline std::string embedding_problem(const LoadedRun& run, bool include_incipit) {
  if (!run.embeddings) return "no embeddings file";
  if (run.embed_meta.is_object()) {
    if (run.embed_meta.contains("include_incipit") &&
        run.embed_meta["include_incipit"].get<bool>() != include_incipit)
      return "embeddings were made with a different incipit setting";
    if (run.embed_meta.contains("samples_sha") && run.embed_meta["samples_sha"] != run.samples_sha)
      return "embeddings are stale (samples file changed since embedding)";
  }
  std::set<std::string> have(run.embeddings->ids.begin(), run.embeddings->ids.end());
  for (const auto& s : run.samples)
    if (!have.count(s.id)) return "embeddings lack sample " + s.id;
  return "";
}

inline std::string embed_model(const LoadedRun& run) {
  if (run.embed_meta.is_object() && run.embed_meta.contains("model"))
    return run.embed_meta["model"].get<std::string>();
  return "unknown";
}

inline nlohmann::json run_provenance(const LoadedRun& r) {
  nlohmann::json j = {{"path", r.path},
                      {"samples_sha", r.samples_sha},
                      {"config_hash", r.config_hash()},
                      {"samples", r.samples.size()}};
  if (r.embeddings) {
    j["embeddings_sha"] = r.embeddings_sha;
    j["embedding_model"] = embed_model(r);
  }
  return j;
}

}  // namespace detail

inline RunReport evaluate(const std::vector<LoadedRun>& runs, const std::optional<LoadedRun>& reference,
                          const EvalOptions& opts = {}) {
  RunReport report;
  std::set<std::string> labels;
  for (const auto& r : runs)
    if (!labels.insert(r.label).second) throw std::invalid_argument("duplicate configuration label " + r.label);
  if (reference && labels.count(opts.reference_label))
    throw std::invalid_argument("configuration label \"" + opts.reference_label + "\" is reserved for the reference");
  for (const auto& p : opts.pairs)
    for (const auto& l : {p.better, p.baseline})
      if (!labels.count(l) && !(reference && l == opts.reference_label))
        throw std::invalid_argument("pair " + p.name() + " names unknown configuration " + l);

  // Scored sets: the runs, then the reference.
  std::vector<const LoadedRun*> scored;
  std::vector<std::string> scored_labels;
  for (const auto& r : runs) {
    scored.push_back(&r);
    scored_labels.push_back(r.label);
  }
  if (reference && opts.score_reference) {
    scored.push_back(&*reference);
    scored_labels.push_back(opts.reference_label);
  }

  const bool want_embed_metrics = opts.wants("vs_embed") || opts.wants("te") || opts.wants("precision") ||
                                  opts.wants("recall") || opts.wants("mauve_lite");
  std::vector<bool> embed_ok(scored.size(), false);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto problem = detail::embedding_problem(*scored[i], opts.include_incipit);
    embed_ok[i] = problem.empty();
    if (!problem.empty() && want_embed_metrics)
      report.notices.push_back(scored_labels[i] + ": " + problem + "; embedding metrics skipped");
  }

  // Per-prompt jobs.
  struct Job {
    std::size_t set;
    std::string prompt_id;
    std::vector<const SampleRecord*> samples;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    std::map<std::string, std::vector<const SampleRecord*>> by_prompt;
    for (const auto& s : scored[i]->samples) by_prompt[s.prompt_id].push_back(&s);
    for (auto& [pid, v] : by_prompt) jobs.push_back({i, pid, std::move(v)});
  }
  std::vector<std::vector<ReportRecord>> job_records(jobs.size());
  std::vector<std::vector<std::string>> job_notices(jobs.size());
  detail::parallel_for(jobs.size(), opts.threads, [&](std::size_t ji) {
    const auto& job = jobs[ji];
    const auto& label = scored_labels[job.set];
    const std::size_t n = job.samples.size();
    auto rec = [&](const std::string& metric, const MetricValue& mv) {
      ReportRecord r;
      r.metric = metric;
      r.scope = "per_prompt";
      r.config = label;
      r.prompt_id = job.prompt_id;
      r.value = mv.value;
      r.params = {{"n", n}};
      for (const auto& [k, v] : mv.params) r.params[k] = v;
      if (mv.degenerate) r.params["degenerate"] = true;
      job_records[ji].push_back(std::move(r));
    };
    if (opts.wants("vs_ngram")) {
      std::vector<std::string> texts;
      for (const auto* s : job.samples) texts.push_back(evaluation_text(*s, opts.include_incipit));
      rec("vs_ngram", vendi_score(ngram_kernel_for_texts(texts, opts.ngram_orders), "vs_ngram"));
    }
    if (!embed_ok[job.set]) return;
    std::vector<std::string> ids;
    for (const auto* s : job.samples) ids.push_back(s->id);
    const auto e = scored[job.set]->embeddings->select(ids);
    if (opts.wants("vs_embed")) rec("vs_embed", vendi_score(embedding_kernel(e), "vs_embed"));
    if (opts.wants("te")) {
      if (n < 2) job_notices[ji].push_back(label + "/" + job.prompt_id + ": te needs 2 samples, skipped");
      else rec("te", truncated_entropy(e, opts.te));
    }
  });
  for (std::size_t ji = 0; ji < jobs.size(); ++ji) {
    for (auto& r : job_records[ji]) report.records.push_back(std::move(r));
    for (auto& s : job_notices[ji]) report.notices.push_back(std::move(s));
  }

  // Across-prompt metrics against the reference.
  const bool want_across = opts.wants("precision") || opts.wants("recall") || opts.wants("mauve_lite");
  const bool ref_embed_ok = reference && detail::embedding_problem(*reference, opts.include_incipit).empty();
  if (want_across && !reference) report.notices.push_back("no reference set; across-prompt metrics skipped");
  if (want_across && reference && !ref_embed_ok && !opts.score_reference)
    report.notices.push_back(opts.reference_label + ": " +
                             detail::embedding_problem(*reference, opts.include_incipit) +
                             "; across-prompt metrics skipped");
  if (want_across && ref_embed_ok) {
    const auto& ref_e = *reference->embeddings;
    std::vector<std::string> ref_ids;
    for (const auto& s : reference->samples) ref_ids.push_back(s.id);
    const auto ref_all = ref_e.select(ref_ids);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (!embed_ok[i]) continue;
      const auto& run = runs[i];
      std::vector<std::string> ids;
      for (const auto& s : run.samples) ids.push_back(s.id);
      const auto gen_all = run.embeddings->select(ids);
      auto across = [&](const std::string& metric, double value, nlohmann::json params) {
        if (!opts.wants(metric)) return;
        ReportRecord r;
        r.metric = metric;
        r.scope = "across_prompts";
        r.config = run.label;
        r.value = value;
        r.params = std::move(params);
        report.records.push_back(std::move(r));
      };
      if (opts.wants("precision") || opts.wants("recall")) {
        if (!opts.per_prompt_pr) {
          const auto pr = improved_precision_recall(gen_all, ref_all, opts.pr_k);
          const nlohmann::json params = {{"k", opts.pr_k}, {"mode", "pooled"},
                                         {"n_gen", gen_all.rows}, {"n_ref", ref_all.rows}};
          across("precision", pr.precision, params);
          across("recall", pr.recall, params);
        } else {
          std::map<std::string, std::vector<std::string>> gen_ids, ref_pids;
          for (const auto& s : run.samples) gen_ids[s.prompt_id].push_back(s.id);
          for (const auto& s : reference->samples) ref_pids[s.prompt_id].push_back(s.id);
          double ps = 0.0, rs = 0.0;
          std::size_t used = 0;
          for (const auto& [pid, g] : gen_ids) {
            auto it = ref_pids.find(pid);
            if (it == ref_pids.end() || g.size() <= opts.pr_k || it->second.size() <= opts.pr_k) continue;
            const auto pr = improved_precision_recall(run.embeddings->select(g), ref_e.select(it->second), opts.pr_k);
            ps += pr.precision;
            rs += pr.recall;
            ++used;
          }
          if (used == 0) {
            report.notices.push_back(run.label + ": no prompt has enough samples for per-prompt P&R");
          } else {
            const nlohmann::json params = {{"k", opts.pr_k}, {"mode", "mean_per_prompt"}, {"prompts", used}};
            across("precision", ps / used, params);
            across("recall", rs / used, params);
          }
        }
      }
      if (opts.wants("mauve_lite")) {
        const auto mv = mauve_lite(gen_all, ref_all, opts.mauve);
        nlohmann::json params = {{"n_gen", gen_all.rows}, {"n_ref", ref_all.rows}, {"seed", opts.mauve.seed}};
        for (const auto& [k, v] : mv.params) params[k] = v;
        if (mv.degenerate) params["degenerate"] = true;
        across("mauve_lite", mv.value, params);
      }
    }
  }

  for (const auto& pair : opts.pairs) {
    std::vector<std::string> ms;
    for (const auto& m : per_prompt_metrics())
      if (opts.wants(m)) ms.push_back(m);
    for (auto& r : paired_ttests(report.records, pair, ms, &report.notices)) report.records.push_back(std::move(r));
  }

  nlohmann::json runs_j = nlohmann::json::object();
  for (const auto& r : runs) runs_j[r.label] = detail::run_provenance(r);
  report.provenance = {{"runs", runs_j},
                       {"options",
                        {{"include_incipit", opts.include_incipit},
                         {"ngram_orders", opts.ngram_orders},
                         {"pr_k", opts.pr_k},
                         {"pr_mode", opts.per_prompt_pr ? "mean_per_prompt" : "pooled"},
                         {"mauve_seed", opts.mauve.seed},
                         {"mauve_clusters", opts.mauve.clusters},
                         {"mauve_scale", opts.mauve.scale},
                         {"te_floor", opts.te.eigenvalue_floor}}},
                       {"notices", report.notices}};
  if (reference) report.provenance["reference"] = detail::run_provenance(*reference);
  return report;
}

// Writes <stem>.ndjson and <stem>.provenance.json.
inline void write_report_files(const fs::path& ndjson_path, const RunReport& r) {
  if (ndjson_path.has_parent_path()) fs::create_directories(ndjson_path.parent_path());
  std::ofstream f(ndjson_path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + ndjson_path.string());
  write_report(f, r);
  std::ofstream p(fs::path(ndjson_path).replace_extension(".provenance.json"), std::ios::binary | std::ios::trunc);
  p << r.provenance.dump(2) << '\n';
}

}  // namespace divergauge
