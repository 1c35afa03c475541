#pragma once

// Sample records and their NDJSON file form.

#include "divergauge/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace divergauge {

enum class Source { generated, reference };

inline const char* to_string(Source s) { return s == Source::generated ? "generated" : "reference"; }

inline Source parse_source(const std::string& s) {
  if (s == "generated") return Source::generated;
  if (s == "reference") return Source::reference;
  throw std::invalid_argument("unknown sample source \"" + s + "\"");
}

struct SampleRecord {
  std::string id;
  std::string prompt_id;
  Source source = Source::generated;
  std::string incipit;
  std::string text;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string stop_reason;  // generated samples only

  bool operator==(const SampleRecord&) const = default;
};

// All samples of one writing prompt.
struct SampleSet {
  std::string prompt_id;
  std::string writing_prompt;
  std::vector<SampleRecord> samples;

  bool operator==(const SampleSet&) const = default;
};

// Text that the metrics see. Generated continuations are prefixed with the
// incipit they were conditioned on, so both sources cover the same span.
inline std::string evaluation_text(const SampleRecord& r, bool include_incipit = true) {
  if (r.source == Source::generated) {
    if (!include_incipit || r.incipit.empty()) return r.text;
    return r.text.empty() ? r.incipit : r.incipit + " " + r.text;
  }
  if (!include_incipit && r.text.compare(0, r.incipit.size(), r.incipit) == 0) {
    std::size_t i = r.incipit.size();
    while (i < r.text.size() && r.text[i] == ' ') ++i;
    return r.text.substr(i);
  }
  return r.text;
}

inline nlohmann::json to_json(const SampleRecord& r) {
  nlohmann::json j = {{"id", r.id},
                      {"prompt_id", r.prompt_id},
                      {"source", to_string(r.source)},
                      {"incipit", r.incipit},
                      {"text", r.text},
                      {"config_hash", r.config_hash},
                      {"seed", r.seed}};
  if (!r.stop_reason.empty()) j["stop_reason"] = r.stop_reason;
  return j;
}

inline SampleRecord sample_from_json(const nlohmann::json& j) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.prompt_id = j.at("prompt_id").get<std::string>();
  r.source = parse_source(j.at("source").get<std::string>());
  r.incipit = j.at("incipit").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("stop_reason")) r.stop_reason = j["stop_reason"].get<std::string>();
  return r;
}

inline void write_samples(std::ostream& os, const std::vector<SampleRecord>& samples) {
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

inline void write_samples(const std::string& path, const std::vector<SampleRecord>& samples) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_samples(f, samples);
}

inline std::vector<SampleRecord> read_samples(std::istream& is, const std::string& origin = "<stream>") {
  std::vector<SampleRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(out.back().id).second)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate sample id \"" +
                               out.back().id + "\"");
  }
  return out;
}

inline std::vector<SampleRecord> read_samples(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  return read_samples(f, path);
}

// Groups records by prompt id, keeping first-seen order within each prompt.
inline std::map<std::string, std::vector<SampleRecord>> group_by_prompt(
    const std::vector<SampleRecord>& samples) {
  std::map<std::string, std::vector<SampleRecord>> out;
  for (const auto& s : samples) out[s.prompt_id].push_back(s);
  return out;
}

}  // namespace divergauge
