#pragma once

// Bundled toy experiment: a base/instruct n-gram pair trained on the story
// grammar, a raw writing-prompt dataset, and configurations for the base
// model, A (instruct, plain nucleus) and B (instruct + base, gamma 0.5).

#include "divergauge/config.hpp"
#include "divergauge/dataset.hpp"
#include "divergauge/features.hpp"
#include "divergauge/story_grammar.hpp"
#include "divergauge/toylm.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace divergauge {

struct FixtureOptions {
  std::uint64_t seed = 1;
  std::size_t training_stories = 2000;
  std::size_t order = 3;
  double tau = 0.6;
  std::size_t responses_per_prompt = 60;
  std::size_t commentary_per_prompt = 3;
  std::size_t short_prompts = 2;  // prompts below the 50-response threshold
  std::size_t short_prompt_responses = 30;
  std::uint64_t decode_seed = 7;
  std::size_t samples_per_prompt = 50;
  std::size_t max_tokens = 500;
};

struct FixtureModels {
  NGramLM base;
  NGramLM instruct;
  std::size_t training_tokens = 0;
};

inline FixtureModels train_fixture_models(const FixtureOptions& opts = {}) {
  const auto& gs = fixture::genres();
  Rng rng(splitmix64(opts.seed));
  std::vector<std::vector<std::string>> corpus;
  FixtureModels m;
  for (std::size_t i = 0; i < opts.training_stories; ++i) {
    corpus.push_back(tokenize(fixture::generate_story(gs[i % gs.size()], rng)));
    m.training_tokens += corpus.back().size();
  }
  m.base = train_ngram_lm(corpus, opts.order);
  m.instruct = sharpen_lm(m.base, SharpenSpec::temperature(opts.tau));
  return m;
}

inline std::vector<DatasetPrompt> fixture_raw_dataset(const FixtureOptions& opts = {}) {
  const auto& gs = fixture::genres();
  Rng rng(splitmix64(opts.seed ^ 0x5eedda7aULL));
  static const char* const commentary[] = {
      "This is my first time posting here, so be gentle.",
      "Feedback welcome. I wrote this on my phone.",
      "This is my first attempt at a story like this.",
  };
  std::vector<DatasetPrompt> out;
  for (const auto& g : gs) {
    DatasetPrompt p{std::string(g.name), std::string(g.writing_prompt), {}};
    for (std::size_t i = 0; i < opts.responses_per_prompt; ++i) {
      if (i % 20 == 3 && i / 20 < opts.commentary_per_prompt)
        p.responses.push_back(std::string(commentary[(i / 20) % 3]) + " " + fixture::generate_story(g, rng));
      p.responses.push_back(fixture::generate_story(g, rng));
    }
    out.push_back(std::move(p));
  }
  for (std::size_t s = 0; s < opts.short_prompts; ++s) {
    const auto& g = gs[s % gs.size()];
    DatasetPrompt p{"short-" + std::to_string(s),
                    "A shorter thread about " + std::string(g.name) + " number " + std::to_string(s), {}};
    for (std::size_t i = 0; i < opts.short_prompt_responses; ++i)
      p.responses.push_back(fixture::generate_story(g, rng));
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string fixture_config_text(const std::string& label, const std::string& instruct,
                                       const std::string& base, double gamma, const FixtureOptions& opts) {
  std::ostringstream os;
  os << "# toy fixture configuration " << label << "\n"
     << "label = \"" << label << "\"\n"
     << "instruct = \"" << instruct << "\"\n"
     << "base = \"" << base << "\"\n"
     << "truncation = \"nucleus\"\n"
     << "top_p = 0.95\n"
     << "gamma = " << gamma << "\n"
     << "max_tokens = " << opts.max_tokens << "\n"
     << "seed = " << opts.decode_seed << "\n"
     << "samples_per_prompt = " << opts.samples_per_prompt << "\n"
     << "incipit_tokens = 20\n"
     << "prompt_style = \"completion\"\n";
  return os.str();
}

struct FixturePaths {
  std::filesystem::path dir;
  std::filesystem::path base_model, instruct_model, raw_dataset;
  std::filesystem::path config_base, config_a, config_b;
};

// Writes models, the raw dataset and the three configurations into dir.
inline FixturePaths write_fixture(const std::filesystem::path& dir, const FixtureOptions& opts = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  FixturePaths p;
  p.dir = dir;
  p.base_model = dir / "base.ngram";
  p.instruct_model = dir / "instruct.ngram";
  p.raw_dataset = dir / "dataset.raw.ndjson";
  p.config_base = dir / "base.cfg";
  p.config_a = dir / "A.cfg";
  p.config_b = dir / "B.cfg";

  auto open = [](const fs::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    return f;
  };
  const auto models = train_fixture_models(opts);
  {
    auto f = open(p.base_model);
    models.base.save(f);
  }
  {
    auto f = open(p.instruct_model);
    models.instruct.save(f);
  }
  {
    auto f = open(p.raw_dataset);
    write_dataset(f, fixture_raw_dataset(opts));
  }
  open(p.config_base) << fixture_config_text("base", "toylm:base.ngram", "none", 1.0, opts);
  open(p.config_a) << fixture_config_text("A", "toylm:instruct.ngram", "none", 1.0, opts);
  open(p.config_b) << fixture_config_text("B", "toylm:instruct.ngram", "toylm:base.ngram", 0.5, opts);
  return p;
}

}  // namespace divergauge
