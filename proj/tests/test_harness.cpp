#include "divergauge/config.hpp"
#include "divergauge/dataset.hpp"
#include "divergauge/evaluate.hpp"
#include "divergauge/experiment.hpp"
#include "divergauge/fixture.hpp"
#include "divergauge/report.hpp"
#include "divergauge/samples.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace divergauge;
namespace fs = std::filesystem;

namespace {

const std::string kStub = STUB_ADAPTER_PATH;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "divergauge_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

DatasetPrompt prompt_with(std::string id, std::size_t n, const std::string& prefix = "story") {
  DatasetPrompt p{std::move(id), "Prompt " + prefix, {}};
  for (std::size_t i = 0; i < n; ++i) p.responses.push_back(prefix + " number " + std::to_string(i) + " goes on");
  return p;
}

// Small fixture shared by the generation tests.
struct MiniFixture {
  FixturePaths paths;
  std::vector<DatasetPrompt> prompts;

  static const MiniFixture& get() {
    static const MiniFixture f = [] {
      MiniFixture m;
      FixtureOptions o;
      o.training_stories = 400;
      o.max_tokens = 60;
      m.paths = write_fixture(scratch("mini"), o);
      std::ifstream raw(m.paths.raw_dataset);
      auto rep = ingest_dataset(read_dataset(raw));
      m.prompts.assign(rep.prompts.begin(), rep.prompts.begin() + 2);
      return m;
    }();
    return f;
  }
};

}  // namespace

// ============================================================================
// Ingestion
// ============================================================================

TEST(Ingest, ThresholdKeepsFiftyInOrder) {
  const auto rep = ingest_dataset({prompt_with("p49", 49), prompt_with("p120", 120), prompt_with("p50", 50)});
  ASSERT_EQ(rep.prompts.size(), 2u);
  EXPECT_EQ(rep.prompts[0].id, "p120");
  ASSERT_EQ(rep.prompts[0].responses.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i)
    EXPECT_EQ(rep.prompts[0].responses[i], "story number " + std::to_string(i) + " goes on");
  EXPECT_EQ(rep.prompts[1].id, "p50");
  EXPECT_EQ(rep.prompts_seen, 3u);
  EXPECT_EQ(rep.prompts_dropped, 1u);
}

TEST(Ingest, CommentaryDroppedBeforeTheCut) {
  auto p = prompt_with("p", 51);
  p.responses.insert(p.responses.begin() + 3, "Feedback welcome. Here goes.");
  p.responses.insert(p.responses.begin(), "  This is my first story.");
  const auto rep = ingest_dataset({p});
  ASSERT_EQ(rep.prompts.size(), 1u);
  EXPECT_EQ(rep.responses_dropped, 2u);
  const auto& kept = rep.prompts[0].responses;
  ASSERT_EQ(kept.size(), 50u);
  EXPECT_EQ(kept.front(), "story number 0 goes on");
  EXPECT_EQ(kept.back(), "story number 49 goes on");

  // A prompt brought under the threshold by the filter is excluded.
  auto q = prompt_with("q", 50);
  q.responses[10] = "Feedback welcome.";
  EXPECT_TRUE(ingest_dataset({q}).prompts.empty());
}

TEST(Ingest, PatternMustMatchAtStart) {
  auto p = prompt_with("p", 50);
  p.responses[0] = "A tale. Feedback welcome.";
  EXPECT_EQ(ingest_dataset({p}).responses_dropped, 0u);
  IngestOptions o;
  o.drop_patterns = {"^\\s*\\[WP\\]"};
  p.responses[1] = "[WP] repost";
  EXPECT_EQ(ingest_dataset({p}, o).responses_dropped, 1u);
  o.drop_patterns = {"("};
  EXPECT_THROW(ingest_dataset({p}, o), std::invalid_argument);
}

TEST(Ingest, IsIdempotent) {
  std::vector<DatasetPrompt> raw{prompt_with("a", 70), prompt_with("b", 20), prompt_with("c", 55)};
  raw[2].responses[4] = "This is my first post";
  const auto once = ingest_dataset(raw).prompts;
  std::stringstream ss;
  write_dataset(ss, once);
  const auto twice = ingest_dataset(read_dataset(ss)).prompts;
  EXPECT_EQ(once, twice);
}

TEST(Ingest, MalformedRecordsReportTheirLine) {
  std::istringstream in("{\"prompt\":\"x\",\"responses\":[\"a\"]}\n\n{\"prompt\":\"y\"}\n");
  try {
    read_dataset(in, "raw.ndjson");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("raw.ndjson:3"), std::string::npos) << e.what();
  }
  std::istringstream bad("{\"prompt\":\"x\",\"responses\":[\"a\"]}\nnot json\n");
  EXPECT_THROW(read_dataset(bad), std::runtime_error);
}

TEST(Ingest, DefaultIdsAreStableHashes) {
  std::istringstream in("{\"prompt\":\"Dragons\",\"responses\":[]}\n");
  const auto d = read_dataset(in);
  EXPECT_EQ(d[0].id, default_prompt_id("Dragons"));
  EXPECT_EQ(d[0].id.size(), 15u);
  EXPECT_NE(default_prompt_id("Dragons"), default_prompt_id("dragons"));
}

TEST(Ingest, DuplicateIdsRejected) {
  EXPECT_THROW(ingest_dataset({prompt_with("a", 50), prompt_with("a", 50)}), std::runtime_error);
}

// ============================================================================
// Incipits and prompts
// ============================================================================

TEST(Incipit, CoreTokenizerExamples) {
  EXPECT_EQ(make_incipit("one two three", 2), "one two");
  EXPECT_EQ(make_incipit("a b c d e", 20), "a b c d e");
  EXPECT_EQ(make_incipit("  spaced\tout\n words ", 3), "spaced out words");
  EXPECT_THROW(make_incipit("   ", 20), std::invalid_argument);
}

TEST(Prompt, Templates) {
  EXPECT_EQ(build_prompt("X", "Y", PromptStyle::completion), "Writing prompt: X\n\nThe story is as follows: Y");
  const auto inst = build_prompt("X", "Y", PromptStyle::instruction);
  EXPECT_NE(inst.find("Write a story"), std::string::npos);
  EXPECT_NE(inst.find("Y"), std::string::npos);
  EXPECT_EQ(build_prompt("X", "", PromptStyle::instruction), "Writing prompt: X\n\nWrite a story");
  EXPECT_THROW(build_prompt("", "Y", PromptStyle::completion), std::invalid_argument);
  EXPECT_EQ(parse_prompt_style("instruction"), PromptStyle::instruction);
  EXPECT_THROW(parse_prompt_style("chat"), std::invalid_argument);
}

TEST(Prompt, ReferenceSampleSets) {
  const auto sets = reference_sample_sets({prompt_with("p", 3)}, [](const std::string& t) { return make_incipit(t, 2); });
  ASSERT_EQ(sets.size(), 1u);
  ASSERT_EQ(sets[0].samples.size(), 3u);
  EXPECT_EQ(sets[0].samples[1].id, "ref-p-001");
  EXPECT_EQ(sets[0].samples[1].incipit, "story number");
  EXPECT_EQ(sets[0].samples[1].source, Source::reference);
}

// ============================================================================
// Sample files
// ============================================================================

TEST(Samples, RoundTripAndEvaluationText) {
  SampleRecord g{"A-p-000", "p", Source::generated, "Once upon", "a time", "abc", 42, "stop_token"};
  SampleRecord r{"ref-p-000", "p", Source::reference, "Once upon", "Once upon a time", "reference", 0, ""};
  std::stringstream ss;
  write_samples(ss, {g, r});
  const auto back = read_samples(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], g);
  EXPECT_EQ(back[1], r);
  EXPECT_EQ(evaluation_text(g), "Once upon a time");
  EXPECT_EQ(evaluation_text(r), "Once upon a time");
  EXPECT_EQ(evaluation_text(g, false), "a time");
  EXPECT_EQ(evaluation_text(r, false), "a time");
}

TEST(Samples, DuplicateIdsAndBadLinesRejected) {
  SampleRecord g{"x", "p", Source::generated, "", "t", "h", 1, ""};
  std::stringstream ss;
  write_samples(ss, {g, g});
  EXPECT_THROW(read_samples(ss), std::runtime_error);
  std::istringstream bad("{\"id\":\"x\"}\n");
  try {
    read_samples(bad, "s.ndjson");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("s.ndjson:1"), std::string::npos);
  }
}

// ============================================================================
// Configuration
// ============================================================================

TEST(Config, ParsesAllKeys) {
  std::istringstream in(R"(# comment
label = "B"   # trailing
instruct = "toylm:models/inst.ngram"
base = "toylm:/abs/base.ngram"
truncation = "top_k"
top_k = 40
gamma = 0.25
temperature = 0.9
max_tokens = 120
seed = 99
mix_before_truncation = true
samples_per_prompt = 10
incipit_tokens = 5
prompt_style = "instruction"
threads = 4
)");
  const auto cfg = parse_config(in, "/cfg/dir");
  EXPECT_EQ(cfg.label, "B");
  EXPECT_EQ(cfg.instruct.path, "/cfg/dir/models/inst.ngram");
  EXPECT_EQ(cfg.base.path, "/abs/base.ngram");
  EXPECT_EQ(cfg.decode.truncation.kind, Truncation::Kind::top_k);
  EXPECT_EQ(cfg.decode.truncation.k, 40u);
  EXPECT_DOUBLE_EQ(cfg.decode.gamma, 0.25);
  EXPECT_DOUBLE_EQ(cfg.decode.temperature, 0.9);
  EXPECT_EQ(cfg.decode.max_tokens, 120u);
  EXPECT_EQ(cfg.decode.seed, 99u);
  EXPECT_TRUE(cfg.decode.mix_before_truncation);
  EXPECT_EQ(cfg.samples_per_prompt, 10u);
  EXPECT_EQ(cfg.incipit_tokens, 5u);
  EXPECT_EQ(cfg.prompt_style, PromptStyle::instruction);
  EXPECT_EQ(cfg.threads, 4u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, RejectsBadInput) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_config(in, ".", "c.cfg");
  };
  auto message = [&](const std::string& s) {
    try {
      parse(s).validate();
    } catch (const std::exception& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("label = \"A\"\nbogus = 1\n").find("unknown key"), std::string::npos);
  EXPECT_NE(message("label = \"A\"\nlabel = \"B\"\n").find("c.cfg:2"), std::string::npos);
  EXPECT_NE(message("gamma\n").find("c.cfg:1"), std::string::npos);
  EXPECT_NE(message("instruct = \"toylm:x\"\ngamma = lots\n").find("number"), std::string::npos);
  EXPECT_NE(message("instruct = \"toylm:x\"\ngamma = 1.5\n").find("gamma"), std::string::npos);
  EXPECT_NE(message("instruct = \"toylm:x\"\nsamples_per_prompt = 0\n").find("samples_per_prompt"),
            std::string::npos);
  EXPECT_NE(message("gamma = 0.5\n").find("instruct"), std::string::npos);
  EXPECT_NE(message("instruct = \"adapter\"\n").find("adapter_command"), std::string::npos);
  EXPECT_NE(message("instruct = \"adapter\"\nbase = \"toylm:b\"\nadapter_command = \"x\"\n").find("mix"),
            std::string::npos);
  EXPECT_NE(message("label = \"a b\"\ninstruct = \"toylm:x\"\n").find("label"), std::string::npos);
  EXPECT_NE(message("label = \"unterminated\n").find("unterminated"), std::string::npos);
}

TEST(Config, HashTracksOutputRelevantFieldsOnly) {
  const auto& fx = MiniFixture::get();
  auto cfg = load_config(fx.paths.config_b.string());
  const auto h = config_hash(cfg);
  EXPECT_EQ(h.size(), 16u);
  auto threads = cfg;
  threads.threads = 8;
  EXPECT_EQ(config_hash(threads), h);
  auto gamma = cfg;
  gamma.decode.gamma = 0.3;
  EXPECT_NE(config_hash(gamma), h);
  auto seed = cfg;
  seed.decode.seed += 1;
  EXPECT_NE(config_hash(seed), h);
  // Without a base, gamma cannot matter.
  auto a = load_config(fx.paths.config_a.string());
  auto a2 = a;
  a2.decode.gamma = 0.1;
  EXPECT_EQ(config_hash(a), config_hash(a2));
}

TEST(Config, EnvironmentSeedOverride) {
  const auto& fx = MiniFixture::get();
  ::setenv("DIVERGAUGE_SEED", "1234", 1);
  const auto cfg = load_config(fx.paths.config_a.string());
  ::unsetenv("DIVERGAUGE_SEED");
  EXPECT_EQ(cfg.decode.seed, 1234u);
  EXPECT_EQ(load_config(fx.paths.config_a.string()).decode.seed, 7u);
  ::setenv("DIVERGAUGE_SEED", "-3", 1);
  EXPECT_THROW(load_config(fx.paths.config_a.string()), std::invalid_argument);
  ::unsetenv("DIVERGAUGE_SEED");
}

// ============================================================================
// Generation runs
// ============================================================================

TEST(RunExperiment, TwoPromptsGiveHundredDeterministicSamples) {
  const auto& fx = MiniFixture::get();
  const auto cfg = load_config(fx.paths.config_b.string());
  const auto r = run_experiment(cfg, fx.prompts);
  ASSERT_EQ(r.samples.size(), 100u);
  EXPECT_EQ(r.status, "complete");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& s = r.samples[i];
    EXPECT_TRUE(ids.insert(s.id).second);
    EXPECT_EQ(s.config_hash, r.config_hash);
    EXPECT_EQ(s.prompt_id, fx.prompts[i / 50].id);
    EXPECT_EQ(s.seed, derive_seed(7, s.prompt_id, i % 50));
    EXPECT_EQ(s.incipit, make_incipit(fx.prompts[i / 50].responses[i % 50], 20));
    EXPECT_FALSE(s.stop_reason.empty());
  }
  EXPECT_EQ(r.samples[51].id, "B-" + fx.prompts[1].id + "-001");
}

TEST(RunExperiment, RerunIsByteIdenticalAcrossThreadCounts) {
  const auto& fx = MiniFixture::get();
  auto cfg = load_config(fx.paths.config_b.string());
  const auto d1 = scratch("rerun1"), d2 = scratch("rerun2");
  write_run(d1, cfg, run_experiment(cfg, fx.prompts), "ds");
  cfg.threads = 4;
  write_run(d2, cfg, run_experiment(cfg, fx.prompts), "ds");
  EXPECT_EQ(slurp(d1 / "samples.ndjson"), slurp(d2 / "samples.ndjson"));
  EXPECT_EQ(slurp(d1 / "manifest.json"), slurp(d2 / "manifest.json"));
  EXPECT_FALSE(slurp(d1 / "samples.ndjson").empty());
}

TEST(RunExperiment, ConfigsDifferOnlyInGeneratedText) {
  const auto& fx = MiniFixture::get();
  const auto a = run_experiment(load_config(fx.paths.config_a.string()), fx.prompts);
  const auto b = run_experiment(load_config(fx.paths.config_b.string()), fx.prompts);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].incipit, b.samples[i].incipit);
    EXPECT_EQ(a.samples[i].seed, b.samples[i].seed);
    EXPECT_EQ(a.samples[i].prompt_id, b.samples[i].prompt_id);
    differing += a.samples[i].text != b.samples[i].text;
  }
  EXPECT_GT(differing, 50u);
  EXPECT_NE(a.config_hash, b.config_hash);
}

TEST(RunExperiment, GammaOneWithBaseMatchesNoBase) {
  const auto& fx = MiniFixture::get();
  auto a = load_config(fx.paths.config_a.string());
  auto b1 = load_config(fx.paths.config_b.string());
  b1.decode.gamma = 1.0;
  const auto ra = run_experiment(a, fx.prompts), rb = run_experiment(b1, fx.prompts);
  for (std::size_t i = 0; i < ra.samples.size(); ++i) ASSERT_EQ(ra.samples[i].text, rb.samples[i].text);
}

TEST(RunExperiment, IncipitsCycleWhenResponsesRunShort) {
  const auto& fx = MiniFixture::get();
  auto cfg = load_config(fx.paths.config_a.string());
  cfg.samples_per_prompt = 5;
  auto p = fx.prompts[0];
  p.responses.resize(2);
  const auto inc = plan_incipits(cfg, {p});
  ASSERT_EQ(inc[0].size(), 5u);
  EXPECT_EQ(inc[0][0], inc[0][2]);
  EXPECT_EQ(inc[0][1], inc[0][3]);
  p.responses.clear();
  EXPECT_THROW(plan_incipits(cfg, {p}), std::invalid_argument);
}

TEST(RunExperiment, MissingModelFileIsReported) {
  std::istringstream in("instruct = \"toylm:/nonexistent/model.ngram\"\n");
  const auto cfg = parse_config(in, ".");
  EXPECT_THROW(run_experiment(cfg, {prompt_with("p", 3)}), std::runtime_error);
}

// ============================================================================
// Live adapter runs
// ============================================================================

namespace {

ExperimentConfig live_config(const std::string& extra_flags = "") {
  ExperimentConfig cfg;
  cfg.label = "live";
  cfg.instruct.kind = ProviderSpec::Kind::adapter;
  cfg.base.kind = ProviderSpec::Kind::adapter;
  cfg.adapter_command = kStub + extra_flags;
  cfg.decode.truncation = Truncation::nucleus(0.8);
  cfg.decode.gamma = 0.5;
  cfg.decode.max_tokens = 6;
  cfg.samples_per_prompt = 3;
  cfg.incipit_tokens = 3;
  return cfg;
}

}  // namespace

TEST(LiveRun, GeneratesThroughTheAdapter) {
  // Prompts end in "the cat"/"a dog"; after "cat" (2) the base forces 4, 6, 0.
  const std::vector<DatasetPrompt> prompts{{"p", "the", {"the cat", "the cat"}}};
  const auto r = run_experiment(live_config(), prompts);
  ASSERT_EQ(r.status, "complete");
  ASSERT_EQ(r.samples.size(), 3u);
  for (const auto& s : r.samples) {
    EXPECT_EQ(s.incipit, "the cat");
    EXPECT_EQ(s.text, "on a");
    EXPECT_EQ(s.stop_reason, "stop_token");
  }
}

TEST(LiveRun, RequestErrorFailsOneSampleOnly) {
  const std::vector<DatasetPrompt> prompts{{"p", "the", {"the cat"}}};
  const auto r = run_experiment(live_config(" --fail-request 1"), prompts);
  EXPECT_EQ(r.status, "partial");
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].sample_id, "live-p-000");
  EXPECT_EQ(r.samples.size(), 2u);
}

TEST(LiveRun, ProtocolBreakAbortsAndKeepsFinishedSamples) {
  const std::vector<DatasetPrompt> prompts{{"p", "the", {"the cat"}}};
  // Each sample makes 1 tokenize + 3 steps x 2 logits + 1 detokenize = 8 requests.
  const auto r = run_experiment(live_config(" --garbage-request 10"), prompts);
  EXPECT_EQ(r.status, "aborted");
  EXPECT_NE(r.abort_reason.find("malformed"), std::string::npos) << r.abort_reason;
  EXPECT_EQ(r.samples.size(), 1u);
  const auto d = scratch("aborted");
  ExperimentConfig cfg = live_config(" --garbage-request 10");
  write_run(d, cfg, r, "ds");
  std::ifstream m(d / "manifest.json");
  const auto j = nlohmann::json::parse(m);
  EXPECT_EQ(j["status"], "aborted");
  EXPECT_EQ(j["failures"].size(), 1u);
  EXPECT_EQ(read_samples((d / "samples.ndjson").string()).size(), 1u);
}

TEST(LiveRun, RefusedHandshakeSurfaces) {
  const std::vector<DatasetPrompt> prompts{{"p", "the", {"the cat"}}};
  EXPECT_THROW(run_experiment(live_config(" --base-model stub-small"), prompts), ProtocolError);
}

TEST(LiveRun, AdapterIncipitsUseItsTokenCount) {
  const auto& fx = MiniFixture::get();
  auto cfg = load_config(fx.paths.config_a.string());
  cfg.incipit_tokenizer = IncipitTokenizer::adapter;
  cfg.adapter_command = kStub;
  cfg.samples_per_prompt = 4;
  cfg.incipit_tokens = 5;
  const auto inc = plan_incipits(cfg, fx.prompts);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& text = fx.prompts[0].responses[i];
    EXPECT_EQ(inc[0][i], text.substr(0, 15));
  }
}

// ============================================================================
// Evaluation
// ============================================================================

namespace {

struct EvalFixture {
  fs::path a, b;
  static const EvalFixture& get() {
    static const EvalFixture f = [] {
      const auto& fx = MiniFixture::get();
      EvalFixture e;
      e.a = scratch("eval_a");
      e.b = scratch("eval_b");
      for (const auto& [dir, cfg_path] : {std::pair{e.a, fx.paths.config_a}, std::pair{e.b, fx.paths.config_b}}) {
        const auto cfg = load_config(cfg_path.string());
        write_run(dir, cfg, run_experiment(cfg, fx.prompts), "ds");
        embed_run(dir, EmbedOptions{});
      }
      return e;
    }();
    return f;
  }
};

}  // namespace

TEST(Evaluate, SelfComparisonIsPerfect) {
  const auto& e = EvalFixture::get();
  const auto run = load_run(e.a);
  EXPECT_EQ(run.label, "A");
  ASSERT_TRUE(run.embeddings.has_value());
  EvalOptions o;
  o.pairs = {{"A", "reference"}};
  const auto rep = evaluate({run}, load_run(e.a, "reference"), o);
  EXPECT_EQ(rep.value("precision", "across_prompts", "A"), 1.0);
  EXPECT_EQ(rep.value("recall", "across_prompts", "A"), 1.0);
  EXPECT_GE(*rep.value("mauve_lite", "across_prompts", "A"), 0.99);
  const auto t = rep.select("ttest_vs_ngram", "paired");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].params["t"], 0.0);
  EXPECT_EQ(t[0].value, 0.5);
}

TEST(Evaluate, OneRowPerPromptConfigMetric) {
  const auto& e = EvalFixture::get();
  EvalOptions o;
  o.pairs = {{"B", "A"}};
  o.threads = 3;
  const auto rep = evaluate({load_run(e.a), load_run(e.b)}, load_run(e.a, "reference"), o);
  std::map<std::tuple<std::string, std::string, std::string>, int> rows;
  for (const auto& r : rep.records)
    if (r.scope == "per_prompt") ++rows[{r.metric, r.config, r.prompt_id}];
  EXPECT_EQ(rows.size(), 3u * 3u * 2u);
  for (const auto& [k, n] : rows) EXPECT_EQ(n, 1);
  std::map<std::pair<std::string, std::string>, int> across;
  for (const auto& r : rep.records)
    if (r.scope == "across_prompts") ++across[{r.metric, r.config}];
  EXPECT_EQ(across.size(), 3u * 2u);
  EXPECT_EQ(rep.select("ttest_vs_embed", "paired").size(), 1u);
  for (const auto& r : rep.records) EXPECT_TRUE(std::isfinite(r.value)) << r.metric;

  // Thread count does not change values.
  o.threads = 1;
  const auto rep1 = evaluate({load_run(e.a), load_run(e.b)}, load_run(e.a, "reference"), o);
  ASSERT_EQ(rep1.records.size(), rep.records.size());
  for (std::size_t i = 0; i < rep.records.size(); ++i) EXPECT_EQ(rep1.records[i].value, rep.records[i].value);
}

TEST(Evaluate, MissingEmbeddingsSkipOnlyEmbeddingMetrics) {
  const auto& fx = MiniFixture::get();
  const auto d = scratch("noembed");
  const auto cfg = load_config(fx.paths.config_a.string());
  write_run(d, cfg, run_experiment(cfg, fx.prompts), "ds");
  const auto rep = evaluate({load_run(d)}, std::nullopt);
  EXPECT_EQ(rep.select("vs_ngram", "per_prompt").size(), 2u);
  EXPECT_TRUE(rep.select("vs_embed", "per_prompt").empty());
  EXPECT_TRUE(rep.select("te", "per_prompt").empty());
  ASSERT_FALSE(rep.notices.empty());
  EXPECT_NE(rep.notices[0].find("no embeddings"), std::string::npos);
}

TEST(Evaluate, StaleOrMismatchedEmbeddingsAreNotUsed) {
  const auto& e = EvalFixture::get();
  EvalOptions o;
  o.include_incipit = false;
  const auto rep = evaluate({load_run(e.a)}, std::nullopt, o);
  EXPECT_TRUE(rep.select("vs_embed", "per_prompt").empty());
  EXPECT_NE(rep.notices[0].find("incipit"), std::string::npos);
}

TEST(Evaluate, MixedConfigHashesRefused) {
  const auto& e = EvalFixture::get();
  auto a = read_samples((e.a / "samples.ndjson").string());
  auto b = read_samples((e.b / "samples.ndjson").string());
  a.push_back(b.front());
  a.back().id = "mixed";
  const auto d = scratch("mixed");
  write_samples((d / "samples.ndjson").string(), a);
  EXPECT_THROW(load_run(d, "A"), std::runtime_error);
}

TEST(Evaluate, PairsMustNameKnownConfigs) {
  const auto& e = EvalFixture::get();
  EvalOptions o;
  o.pairs = {{"B", "Z"}};
  EXPECT_THROW(evaluate({load_run(e.a), load_run(e.b)}, std::nullopt, o), std::invalid_argument);
  EXPECT_THROW(parse_pair("B"), std::invalid_argument);
  EXPECT_EQ(parse_pair("B>A").baseline, "A");
  EXPECT_EQ(parse_pair("B,A").better, "B");
}

TEST(Evaluate, MetricSelectionAndPerPromptPR) {
  const auto& e = EvalFixture::get();
  EvalOptions o;
  o.metrics = {"precision", "recall"};
  o.per_prompt_pr = true;
  const auto rep = evaluate({load_run(e.b)}, load_run(e.a, "reference"), o);
  EXPECT_TRUE(rep.select("vs_ngram", "per_prompt").empty());
  const auto p = rep.select("precision", "across_prompts");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].params["mode"], "mean_per_prompt");
  EXPECT_TRUE(rep.select("mauve_lite", "across_prompts").empty());
}

TEST(Report, RecordsRoundTripAndRender) {
  const auto& e = EvalFixture::get();
  EvalOptions o;
  o.pairs = {{"B", "A"}};
  const auto rep = evaluate({load_run(e.a), load_run(e.b)}, load_run(e.a, "reference"), o);
  std::stringstream ss;
  write_report(ss, rep);
  const auto back = read_report(ss);
  ASSERT_EQ(back.size(), rep.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].metric, rep.records[i].metric);
    EXPECT_EQ(back[i].prompt_id, rep.records[i].prompt_id);
    EXPECT_EQ(back[i].value, rep.records[i].value);
  }
  std::ostringstream md, csv;
  render_markdown(md, back);
  render_csv(csv, back);
  EXPECT_NE(md.str().find("| vs_ngram | B |"), std::string::npos);
  EXPECT_NE(md.str().find("Paired one-tailed t-tests"), std::string::npos);
  EXPECT_NE(md.str().find("Raw per-prompt te"), std::string::npos);
  const auto csv_text = csv.str();
  EXPECT_EQ(std::count(csv_text.begin(), csv_text.end(), '\n'), static_cast<long>(back.size() + 1));
}

TEST(Report, QuantilesAndDegenerateTTests) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.75), 7.0);
  const auto s = summarize({1, 2, 3, 4, 100});
  EXPECT_DOUBLE_EQ(s.median, 3.0);
  EXPECT_DOUBLE_EQ(s.mean, 22.0);

  const auto r = paired_ttest_record("vs_ngram", {"B", "A"}, {2, 3, 4}, {1, 2, 3});
  EXPECT_TRUE(r.params["degenerate"].get<bool>());
  EXPECT_EQ(r.value, 0.0);
  std::stringstream ss;
  RunReport rep;
  rep.records = {r};
  write_report(ss, rep);
  const auto back = read_report(ss);
  std::ostringstream md;
  render_markdown(md, back);
  EXPECT_NE(md.str().find("| inf |"), std::string::npos) << md.str();
}
