#pragma once

// Generation runs: one sample per (prompt, incipit), written as NDJSON with
// a manifest.

#include "divergauge/config.hpp"
#include "divergauge/dataset.hpp"
#include "divergauge/decoding.hpp"
#include "divergauge/features.hpp"
#include "divergauge/protocol.hpp"
#include "divergauge/samples.hpp"
#include "divergauge/toylm.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace divergauge {

struct SampleFailure {
  std::string sample_id;
  std::string prompt_id;
  std::string error;
};

struct RunResult {
  std::string label;
  std::string config_hash;
  std::vector<SampleRecord> samples;
  std::vector<SampleFailure> failures;
  std::string status = "complete";  // complete | partial | aborted
  std::string abort_reason;
};

inline std::string sample_id(const std::string& label, const std::string& prompt_id, std::size_t index) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%03zu", index);
  return label + "-" + prompt_id + "-" + idx;
}

inline NGramLM load_ngram_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read model " + path);
  return NGramLM::load(f);
}

// Incipits for every planned sample, in (prompt, index) order. Sample i of a
// prompt uses response i, wrapping around if the prompt has fewer responses.
inline std::vector<std::vector<std::string>> plan_incipits(const ExperimentConfig& cfg,
                                                           const std::vector<DatasetPrompt>& prompts) {
  std::optional<IncipitTruncator> truncator;
  if (cfg.incipit_tokenizer == IncipitTokenizer::adapter) truncator.emplace(cfg.adapter_command);
  std::vector<std::vector<std::string>> out;
  for (const auto& p : prompts) {
    if (p.responses.empty())
      throw std::invalid_argument("prompt " + p.id + " has no responses to take incipits from");
    std::vector<std::string> inc;
    for (std::size_t i = 0; i < cfg.samples_per_prompt; ++i) {
      const auto& text = p.responses[i % p.responses.size()];
      if (cfg.incipit_tokens == 0) inc.emplace_back();
      else if (truncator) inc.push_back(truncator->truncate(text, cfg.incipit_tokens).incipit);
      else inc.push_back(make_incipit(text, cfg.incipit_tokens));
    }
    out.push_back(std::move(inc));
  }
  return out;
}

namespace detail {

// Tokenizer + providers for one worker thread.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual DistributionProvider& instruct() = 0;
  virtual DistributionProvider* base() = 0;
  virtual TokenSeq encode(const std::string& text) = 0;
  virtual std::string decode(std::span<const TokenId> ids) = 0;
  virtual std::vector<TokenId> stop_tokens() const = 0;
};

class ToyBackend : public Backend {
 public:
  ToyBackend(const NGramLM& instruct, const NGramLM* base)
      : lm_(instruct), inst_(instruct) {
    if (base) base_.emplace(*base);
  }
  DistributionProvider& instruct() override { return inst_; }
  DistributionProvider* base() override { return base_ ? &*base_ : nullptr; }
  TokenSeq encode(const std::string& text) override { return lm_.vocab().encode(tokenize(text)); }
  std::string decode(std::span<const TokenId> ids) override { return lm_.vocab().decode(ids); }
  std::vector<TokenId> stop_tokens() const override { return {Vocabulary::kEnd}; }

 private:
  const NGramLM& lm_;
  NGramProvider inst_;
  std::optional<NGramProvider> base_;
};

class LiveBackend : public Backend {
 public:
  LiveBackend(const std::string& command, bool with_base)
      : session_(command), inst_(session_, "instruct") {
    if (with_base) base_.emplace(session_, "base");
  }
  DistributionProvider& instruct() override { return inst_; }
  DistributionProvider* base() override { return base_ ? &*base_ : nullptr; }
  TokenSeq encode(const std::string& text) override { return session_.tokenize(text); }
  std::string decode(std::span<const TokenId> ids) override { return session_.detokenize(ids); }
  std::vector<TokenId> stop_tokens() const override { return session_.hello().stop_tokens; }

 private:
  AdapterSession session_;
  LiveProvider inst_;
  std::optional<LiveProvider> base_;
};

}  // namespace detail

// Generates every sample of every prompt. Prompts are spread over threads;
// each sample's randomness comes only from derive_seed(seed, prompt, index),
// so the output does not depend on the thread count. A live adapter always
// runs single-threaded over one session.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::vector<DatasetPrompt>& prompts) {
  cfg.validate();
  RunResult result;
  result.label = cfg.label;
  result.config_hash = config_hash(cfg);
  const auto incipits = plan_incipits(cfg, prompts);

  std::optional<NGramLM> inst_lm, base_lm;
  if (cfg.instruct.kind == ProviderSpec::Kind::toylm) inst_lm = load_ngram_file(cfg.instruct.path);
  if (cfg.base.kind == ProviderSpec::Kind::toylm) {
    base_lm = load_ngram_file(cfg.base.path);
    if (!(base_lm->vocab() == inst_lm->vocab()))
      throw std::invalid_argument("instruct and base models do not share a vocabulary");
  }

  auto make_backend = [&]() -> std::unique_ptr<detail::Backend> {
    if (cfg.live()) return std::make_unique<detail::LiveBackend>(cfg.adapter_command, cfg.has_base());
    return std::make_unique<detail::ToyBackend>(*inst_lm, base_lm ? &*base_lm : nullptr);
  };

  struct PromptOutput {
    std::vector<std::optional<SampleRecord>> samples;
    std::vector<SampleFailure> failures;
  };
  std::vector<PromptOutput> outputs(prompts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex abort_mu;
  std::string abort_reason;

  auto worker = [&](detail::Backend& backend) {
    for (;;) {
      const std::size_t pi = next.fetch_add(1);
      if (pi >= prompts.size() || abort) return;
      const auto& p = prompts[pi];
      auto& out = outputs[pi];
      out.samples.resize(cfg.samples_per_prompt);
      for (std::size_t i = 0; i < cfg.samples_per_prompt && !abort; ++i) {
        SampleRecord rec;
        rec.id = sample_id(cfg.label, p.id, i);
        rec.prompt_id = p.id;
        rec.source = Source::generated;
        rec.incipit = incipits[pi][i];
        rec.config_hash = result.config_hash;
        rec.seed = derive_seed(cfg.decode.seed, p.id, i);
        try {
          DecodeConfig dc = cfg.decode;
          dc.seed = rec.seed;
          dc.stop_tokens = backend.stop_tokens();
          if (!cfg.has_base()) dc.gamma = 1.0;
          const auto prompt_ids = backend.encode(build_prompt(p.prompt, rec.incipit, cfg.prompt_style));
          const auto gen = generate_sequence(backend.instruct(), backend.base(), dc, prompt_ids);
          rec.text = backend.decode(gen.tokens);
          rec.stop_reason = to_string(gen.stop_reason);
          out.samples[i] = std::move(rec);
        } catch (const ProtocolError& e) {
          std::lock_guard<std::mutex> lock(abort_mu);
          abort = true;
          abort_reason = e.what();
          out.failures.push_back({rec.id, p.id, e.what()});
        } catch (const std::exception& e) {
          out.failures.push_back({rec.id, p.id, e.what()});
        }
      }
    }
  };

  const std::size_t threads = cfg.live() ? 1 : std::max<std::size_t>(1, std::min(cfg.threads, prompts.size()));
  if (threads == 1) {
    auto backend = make_backend();
    worker(*backend);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::unique_ptr<detail::Backend>> backends;
    for (std::size_t t = 0; t < threads; ++t) backends.push_back(make_backend());
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, std::ref(*backends[t]));
    for (auto& th : pool) th.join();
  }

  for (auto& o : outputs) {
    for (auto& s : o.samples)
      if (s) result.samples.push_back(std::move(*s));
    result.failures.insert(result.failures.end(), o.failures.begin(), o.failures.end());
  }
  if (abort) {
    result.status = "aborted";
    result.abort_reason = abort_reason;
  } else if (!result.failures.empty()) {
    result.status = "partial";
  }
  return result;
}

inline nlohmann::json run_manifest(const ExperimentConfig& cfg, const RunResult& r,
                                   const std::string& dataset_hash) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"sample_id", f.sample_id}, {"prompt_id", f.prompt_id}, {"error", f.error}});
  nlohmann::json models = nlohmann::json::object();
  if (cfg.instruct.kind == ProviderSpec::Kind::toylm)
    models["instruct"] = {{"path", cfg.instruct.path}, {"sha", file_hash(cfg.instruct.path)}};
  if (cfg.base.kind == ProviderSpec::Kind::toylm)
    models["base"] = {{"path", cfg.base.path}, {"sha", file_hash(cfg.base.path)}};
  std::map<std::string, std::size_t> stops;
  for (const auto& s : r.samples) ++stops[s.stop_reason];
  return {{"label", r.label},
          {"config_hash", r.config_hash},
          {"config", canonical_config(cfg)},
          {"models", models},
          {"dataset_sha", dataset_hash},
          {"samples", r.samples.size()},
          {"stop_reasons", stops},
          {"status", r.status},
          {"abort_reason", r.abort_reason},
          {"failures", failures}};
}

// Writes samples.ndjson and manifest.json into out_dir.
inline void write_run(const std::filesystem::path& out_dir, const ExperimentConfig& cfg,
                      const RunResult& r, const std::string& dataset_hash) {
  std::filesystem::create_directories(out_dir);
  write_samples((out_dir / "samples.ndjson").string(), r.samples);
  std::ofstream m(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write manifest in " + out_dir.string());
  m << run_manifest(cfg, r, dataset_hash).dump(2) << '\n';
}

}  // namespace divergauge
