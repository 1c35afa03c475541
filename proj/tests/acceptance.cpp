// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runtime budgets are part of each criterion.

#include "divergauge/dataset.hpp"
#include "divergauge/decoding.hpp"
#include "divergauge/evaluate.hpp"
#include "divergauge/experiment.hpp"
#include "divergauge/fixture.hpp"
#include "divergauge/metrics.hpp"
#include "divergauge/numerics.hpp"
#include "divergauge/toylm.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace divergauge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += " [over budget " + std::to_string(budget_s) + " s]";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-34s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Fixture pipeline shared by the end-to-end criteria.
struct Pipeline {
  fs::path dir;
  FixturePaths paths;
  std::vector<DatasetPrompt> prompts;
  LoadedRun base, a, b;
  RunReport report;
};

Pipeline build_pipeline() {
  Pipeline p;
  p.dir = fs::temp_directory_path() / "divergauge_acceptance";
  fs::remove_all(p.dir);
  p.paths = write_fixture(p.dir / "fixture");
  {
    std::ifstream raw(p.paths.raw_dataset);
    p.prompts = ingest_dataset(read_dataset(raw)).prompts;
  }
  auto gen = [&](const fs::path& cfg_path, const std::string& name) {
    auto cfg = load_config(cfg_path.string());
    cfg.threads = 4;
    const auto out = p.dir / name;
    write_run(out, cfg, run_experiment(cfg, p.prompts), file_hash(p.paths.raw_dataset.string()));
    embed_run(out, EmbedOptions{});
    return load_run(out);
  };
  p.base = gen(p.paths.config_base, "base");
  p.a = gen(p.paths.config_a, "A");
  p.b = gen(p.paths.config_b, "B");
  EvalOptions o;
  o.threads = 4;
  o.pairs = {{"base", "A"}, {"B", "A"}};
  o.score_reference = false;
  p.report = evaluate({p.base, p.a, p.b}, p.base, o);
  return p;
}

}  // namespace

int main() {
  std::printf("divergauge acceptance\n");

  criterion("vendi-bounds", 1.0, [] {
    const std::size_t n = 50;
    SymMatrix ones(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) ones.set(i, j, 1.0);
    const double v1 = vendi_score(ones).value;
    const double vn = vendi_score(SymMatrix::identity(n)).value;
    return Outcome{std::fabs(v1 - 1.0) < 1e-8 && std::fabs(vn - 50.0) < 1e-8,
                   fmt("ones=%.12f identity50=%.12f", v1, vn)};
  });

  criterion("eigen-oracle", 5.0, [] {
    Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const auto m = oracle::random_symmetric(5, rng);
      const auto expected = oracle::eigenvalues_by_polynomial_roots(m);
      if (expected.size() != 5) return Outcome{false, "oracle lost a root"};
      const auto got = sym_eigendecompose(m).eigenvalues;
      for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::fabs(got[i] - expected[i]));
    }
    return Outcome{worst < 1e-8, fmt("max |error| = %.3e over 100 matrices", worst)};
  });

  criterion("precision-recall-oracle", 5.0, [] {
    Rng rng(77);
    int mismatches = 0;
    for (int t = 0; t < 20; ++t) {
      const auto gen = oracle::random_points(100, 2, rng);
      const auto ref = oracle::random_points(100, 2, rng, 1.3, 0.4);
      const auto pr = improved_precision_recall(gen, ref, 3);
      mismatches += pr.precision != oracle::coverage_double_loop(gen, ref, 3);
      mismatches += pr.recall != oracle::coverage_double_loop(ref, gen, 3);
    }
    return Outcome{mismatches == 0, std::to_string(mismatches) + " mismatches in 20 instances"};
  });

  criterion("te-rotation-invariance", 10.0, [] {
    Rng rng(99);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const std::size_t n = 50, d = 64;
      const auto p = oracle::random_points(n, d, rng);
      const auto q = oracle::random_orthogonal(d, rng);
      const std::vector<double> raw(p.data().begin(), p.data().end());
      const PointSet rotated(n, d, oracle::rotate_rows(raw, n, d, q));
      worst = std::max(worst, std::fabs(truncated_entropy(p).value - truncated_entropy(rotated).value));
    }
    return Outcome{worst < 1e-6, fmt("max |dTE| = %.3e over 20 sets", worst)};
  });

  criterion("decoder-endpoint-identity", 30.0, [] {
    FixtureOptions fo;
    const auto models = train_fixture_models(fo);
    auto prompts = ingest_dataset(fixture_raw_dataset(fo)).prompts;
    if (prompts.size() < 10) return Outcome{false, "fixture has fewer than 10 prompts"};
    prompts.resize(10);
    std::size_t compared = 0, identical = 0;
    for (const auto& p : prompts)
      for (std::size_t i = 0; i < 10; ++i) {
        const auto ctx = models.instruct.vocab().encode(
            tokenize(build_prompt(p.prompt, make_incipit(p.responses[i], 20), PromptStyle::completion)));
        DecodeConfig cfg;
        cfg.seed = derive_seed(7, p.id, i);
        cfg.stop_tokens = {Vocabulary::kEnd};
        NGramProvider inst(models.instruct), base(models.base), plain(models.instruct);
        cfg.gamma = 1.0;
        const auto conf = generate_sequence(inst, &base, cfg, ctx);
        const auto nucleus = generate_sequence(plain, nullptr, cfg, ctx);
        ++compared;
        identical += conf.tokens == nucleus.tokens && conf.stop_reason == nucleus.stop_reason;
      }
    return Outcome{identical == compared && compared == 100,
                   std::to_string(identical) + "/" + std::to_string(compared) + " sequences identical"};
  });

  criterion("logit-logprob-mix-equivalence", 10.0, [] {
    Rng rng(31337);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const std::size_t v = 2 + rng.below(60);
      LogProbVector li, lb;
      for (std::size_t i = 0; i < v; ++i) {
        li.values.push_back(5.0 * rng.normal() + 20.0 * rng.uniform());
        lb.values.push_back(5.0 * rng.normal() - 20.0 * rng.uniform());
      }
      const double gamma = rng.uniform();
      const auto valid = truncate_nucleus(li, 0.95);
      const auto raw = softmax(conformative_mix(li, lb, valid, gamma));
      const auto norm = softmax(conformative_mix(log_softmax(li), log_softmax(lb), valid, gamma));
      for (std::size_t i = 0; i < v; ++i) worst = std::max(worst, std::fabs(raw[i] - norm[i]));
    }
    return Outcome{worst < 1e-9, fmt("max per-token |dp| = %.3e over 1000 pairs", worst)};
  });

  std::optional<Pipeline> pipe;
  std::string pipe_error;
  double pipe_secs = 0.0;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      pipe = build_pipeline();
    } catch (const std::exception& e) {
      pipe_error = e.what();
    }
    pipe_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("      fixture pipeline (train, 3 x 500 generations, embed, eval) took %.2f s\n", pipe_secs);
  }

  // Pipeline time counts against both end-to-end budgets.
  criterion("diversity-gap", 300.0 - pipe_secs, [&] {
    if (!pipe) return Outcome{false, "pipeline failed: " + pipe_error};
    const auto base = per_prompt_series(pipe->report.records, "vs_ngram", "base");
    const auto inst = per_prompt_series(pipe->report.records, "vs_ngram", "A");
    std::size_t lower = 0;
    for (const auto& [pid, v] : base) lower += inst.at(pid) < v;
    const auto t = pipe->report.select("ttest_vs_ngram", "paired", "base>A");
    if (t.size() != 1) return Outcome{false, "missing t-test"};
    const double p = t[0].value;
    return Outcome{base.size() == 10 && lower >= 9 && p < 0.05,
                   std::to_string(lower) + "/" + std::to_string(base.size()) +
                       " prompts lower for the sharpened model, " + fmt("p = %.3e", p)};
  });

  criterion("conformative-recovery", 600.0 - pipe_secs, [&] {
    if (!pipe) return Outcome{false, "pipeline failed: " + pipe_error};
    const auto& rep = pipe->report;
    const auto tn = rep.select("ttest_vs_ngram", "paired", "B>A");
    const auto te = rep.select("ttest_vs_embed", "paired", "B>A");
    if (tn.size() != 1 || te.size() != 1) return Outcome{false, "missing t-tests"};
    const double pn = tn[0].value, pe = te[0].value;
    const auto n_prompts = per_prompt_series(rep.records, "vs_ngram", "B").size();
    const auto ma = rep.value("mauve_lite", "across_prompts", "A"), mb = rep.value("mauve_lite", "across_prompts", "B");
    const auto ra = rep.value("recall", "across_prompts", "A"), rb = rep.value("recall", "across_prompts", "B");
    if (!ma || !mb || !ra || !rb) return Outcome{false, "missing across-prompt metrics"};
    const bool ok = n_prompts == 10 && pn < 0.05 && pe < 0.05 && tn[0].params["mean_difference"] > 0.0 &&
                    te[0].params["mean_difference"] > 0.0 && *mb >= *ma && *rb >= *ra;
    return Outcome{ok, fmt("p(vs_ngram) = %.3e, p(vs_embed) = %.3e", pn, pe) +
                           fmt(", mauve A %.4f -> B %.4f", *ma, *mb) + fmt(", recall A %.4f -> B %.4f", *ra, *rb)};
  });

  criterion("mauve-lite-sanity", 30.0, [] {
    Rng rng(4242);
    double lowest_identical = 1.0, highest_far = 0.0;
    for (int t = 0; t < 20; ++t) {
      const auto x = oracle::random_points(100, 8, rng);
      lowest_identical = std::min(lowest_identical, mauve_lite(x, x).value);
      const auto a = oracle::random_points(100, 8, rng);
      const auto b = oracle::random_points(100, 8, rng, 1.0, 50.0);
      highest_far = std::max(highest_far, mauve_lite(a, b).value);
    }
    return Outcome{lowest_identical >= 0.99 && highest_far <= 0.05,
                   fmt("min identical = %.4f, max far = %.4f", lowest_identical, highest_far)};
  });

  criterion("ttest-oracle", 30.0, [] {
    Rng rng(8080);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 3 + rng.below(59);  // df 2..60
      std::vector<double> a(n), b(n);
      const double shift = 0.6 * rng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = a[i] - shift + 0.8 * rng.normal();
      }
      const auto r = paired_ttest_one_tailed(a, b);
      worst = std::max(worst, std::fabs(r.p - oracle::student_t_upper_tail_by_quadrature(r.t, r.df)));
    }
    return Outcome{worst < 1e-6, fmt("max |dp| = %.3e over 50 samples", worst)};
  });

  std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
