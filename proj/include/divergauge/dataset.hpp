#pragma once

// Writing-prompt datasets: ingestion filters, incipits and prompt templates.
//
// Input and output share one NDJSON shape, {id?, prompt, responses[]}, so an
// ingested file can be ingested again without change.

#include "divergauge/samples.hpp"

#include "json.hpp"

#include <functional>
#include <istream>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace divergauge {

struct DatasetPrompt {
  std::string id;
  std::string prompt;
  std::vector<std::string> responses;

  bool operator==(const DatasetPrompt&) const = default;
};

inline std::string default_prompt_id(const std::string& prompt) {
  return "wp-" + hex64(fnv1a64(prompt)).substr(0, 12);
}

inline std::vector<DatasetPrompt> read_dataset(std::istream& is, const std::string& origin = "<stream>") {
  std::vector<DatasetPrompt> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + what);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail("record is not an object");
    if (!j.contains("prompt") || !j["prompt"].is_string()) fail("missing string field \"prompt\"");
    if (!j.contains("responses") || !j["responses"].is_array())
      fail("missing array field \"responses\"");
    DatasetPrompt p;
    p.prompt = j["prompt"].get<std::string>();
    for (const auto& r : j["responses"]) {
      if (!r.is_string()) fail("non-string entry in \"responses\"");
      p.responses.push_back(r.get<std::string>());
    }
    if (j.contains("id")) {
      if (!j["id"].is_string()) fail("field \"id\" must be a string");
      p.id = j["id"].get<std::string>();
    } else {
      p.id = default_prompt_id(p.prompt);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_dataset(std::ostream& os, const std::vector<DatasetPrompt>& prompts) {
  for (const auto& p : prompts) {
    nlohmann::json j = {{"id", p.id}, {"prompt", p.prompt}, {"responses", p.responses}};
    os << j.dump() << '\n';
  }
}

struct IngestOptions {
  std::size_t min_responses = 50;
  std::size_t keep = 50;
  // Leading-commentary patterns; a response is dropped when one matches at
  // its start.
  std::vector<std::string> drop_patterns{R"(^\s*This is my first)", R"(^\s*Feedback welcome)"};
};

struct IngestReport {
  std::vector<DatasetPrompt> prompts;
  std::size_t prompts_seen = 0;
  std::size_t prompts_dropped = 0;
  std::size_t responses_dropped = 0;
};

// Commentary is removed first; prompts left with too few responses are
// excluded, the rest keep their first `keep` responses in original order.
inline IngestReport ingest_dataset(const std::vector<DatasetPrompt>& raw, const IngestOptions& opts = {}) {
  std::vector<std::regex> patterns;
  for (const auto& p : opts.drop_patterns) {
    try {
      patterns.emplace_back(p, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("bad drop pattern \"" + p + "\": " + e.what());
    }
  }
  IngestReport rep;
  std::set<std::string> ids;
  for (const auto& p : raw) {
    ++rep.prompts_seen;
    DatasetPrompt kept{p.id, p.prompt, {}};
    for (const auto& r : p.responses) {
      bool drop = false;
      for (const auto& re : patterns)
        if (std::regex_search(r, re, std::regex_constants::match_continuous)) drop = true;
      if (drop) {
        ++rep.responses_dropped;
        continue;
      }
      kept.responses.push_back(r);
    }
    if (kept.responses.size() < opts.min_responses) {
      ++rep.prompts_dropped;
      continue;
    }
    if (kept.responses.size() > opts.keep) kept.responses.resize(opts.keep);
    if (!ids.insert(kept.id).second)
      throw std::runtime_error("duplicate prompt id \"" + kept.id + "\"");
    rep.prompts.push_back(std::move(kept));
  }
  return rep;
}

// First n whitespace-separated words, re-joined with single spaces.
inline std::string make_incipit(const std::string& text, std::size_t n_tokens = 20) {
  std::istringstream is(text);
  std::string word, out;
  std::size_t taken = 0;
  while (taken < n_tokens && is >> word) {
    if (!out.empty()) out.push_back(' ');
    out += word;
    ++taken;
  }
  if (taken == 0) throw std::invalid_argument("make_incipit: empty text");
  return out;
}

enum class PromptStyle { completion, instruction };

inline PromptStyle parse_prompt_style(const std::string& s) {
  if (s == "completion") return PromptStyle::completion;
  if (s == "instruction") return PromptStyle::instruction;
  throw std::invalid_argument("unknown prompt style \"" + s + "\" (completion|instruction)");
}

inline const char* to_string(PromptStyle s) {
  return s == PromptStyle::completion ? "completion" : "instruction";
}

inline std::string build_prompt(const std::string& writing_prompt, const std::string& incipit,
                                PromptStyle style) {
  if (writing_prompt.empty()) throw std::invalid_argument("build_prompt: empty writing prompt");
  if (style == PromptStyle::completion)
    return "Writing prompt: " + writing_prompt + "\n\nThe story is as follows: " + incipit;
  std::string out = "Writing prompt: " + writing_prompt + "\n\nWrite a story";
  if (!incipit.empty()) out += "\n\n" + incipit;
  return out;
}

using IncipitFn = std::function<std::string(const std::string&)>;

// Reference sample sets: one record per kept response, ids "ref-<prompt>-NNN".
inline std::vector<SampleSet> reference_sample_sets(const std::vector<DatasetPrompt>& prompts,
                                                    const IncipitFn& incipit) {
  std::vector<SampleSet> out;
  for (const auto& p : prompts) {
    SampleSet s{p.id, p.prompt, {}};
    for (std::size_t i = 0; i < p.responses.size(); ++i) {
      SampleRecord r;
      char idx[8];
      std::snprintf(idx, sizeof idx, "%03zu", i);
      r.id = "ref-" + p.id + "-" + idx;
      r.prompt_id = p.id;
      r.source = Source::reference;
      r.incipit = incipit(p.responses[i]);
      r.text = p.responses[i];
      r.config_hash = "reference";
      s.samples.push_back(std::move(r));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace divergauge
