#pragma once

// Experiment configuration files.
//
// Flat `key = value` lines; `#` starts a comment. Values are double-quoted
// strings, numbers, or true/false. Provider values:
//   "toylm:PATH"  an n-gram model file (PATH relative to the config file)
//   "adapter"     the model of that role served by `adapter_command`
//   "none"        no model (base only)

#include "divergauge/dataset.hpp"
#include "divergauge/decoding.hpp"
#include "divergauge/rng.hpp"

#include "json.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace divergauge {

struct ProviderSpec {
  enum class Kind { none, toylm, adapter };
  Kind kind = Kind::none;
  std::string path;  // toylm only, resolved

  std::string describe() const {
    switch (kind) {
      case Kind::none: return "none";
      case Kind::toylm: return "toylm:" + path;
      case Kind::adapter: return "adapter";
    }
    return "none";
  }
};

enum class IncipitTokenizer { core, adapter };

struct ExperimentConfig {
  std::string label = "A";
  ProviderSpec instruct;
  ProviderSpec base;
  std::string adapter_command;
  DecodeConfig decode;
  std::size_t samples_per_prompt = 50;
  std::size_t incipit_tokens = 20;
  IncipitTokenizer incipit_tokenizer = IncipitTokenizer::core;
  PromptStyle prompt_style = PromptStyle::completion;
  std::size_t threads = 1;

  void validate() const {
    if (label.empty()) throw std::invalid_argument("config: label must not be empty");
    for (char c : label)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
        throw std::invalid_argument("config: label may only contain letters, digits, '_', '-', '.'");
    if (instruct.kind == ProviderSpec::Kind::none)
      throw std::invalid_argument("config: an instruct provider is required");
    const bool live = instruct.kind == ProviderSpec::Kind::adapter ||
                      base.kind == ProviderSpec::Kind::adapter;
    if (live && (instruct.kind == ProviderSpec::Kind::toylm || base.kind == ProviderSpec::Kind::toylm))
      throw std::invalid_argument("config: cannot mix a toylm provider with an adapter provider");
    if ((live || incipit_tokenizer == IncipitTokenizer::adapter) && adapter_command.empty())
      throw std::invalid_argument("config: adapter_command is required for adapter providers or incipits");
    if (samples_per_prompt == 0) throw std::invalid_argument("config: samples_per_prompt must be > 0");
    if (threads == 0) throw std::invalid_argument("config: threads must be > 0");
    decode.validate();
  }

  bool has_base() const { return base.kind != ProviderSpec::Kind::none; }
  bool live() const { return instruct.kind == ProviderSpec::Kind::adapter; }
};

namespace detail {

inline std::string parse_config_string(const std::string& v, const std::string& where) {
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\') {
      if (i + 2 >= v.size()) throw std::invalid_argument(where + ": dangling escape");
      const char e = v[++i];
      if (e == 'n') out.push_back('\n');
      else if (e == 't') out.push_back('\t');
      else if (e == '"' || e == '\\') out.push_back(e);
      else throw std::invalid_argument(where + ": unknown escape \\" + std::string(1, e));
    } else if (v[i] == '"') {
      throw std::invalid_argument(where + ": unescaped quote in string");
    } else {
      out.push_back(v[i]);
    }
  }
  return out;
}

// Strips a trailing comment that is not inside a quoted string.
inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_str) {
      ++i;
    } else if (line[i] == '"') {
      in_str = !in_str;
    } else if (line[i] == '#' && !in_str) {
      return line.substr(0, i);
    }
  }
  return line;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Raw values: strings unquoted, everything else verbatim.
inline std::map<std::string, std::string> parse_key_values(std::istream& is, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string val = detail::trim(body.substr(eq + 1));
    if (key.empty() || val.empty()) throw std::invalid_argument(where + ": expected key = value");
    std::string parsed = val;
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"') throw std::invalid_argument(where + ": unterminated string");
      parsed = detail::parse_config_string(val, where);
    }
    if (!out.emplace(key, parsed).second) throw std::invalid_argument(where + ": duplicate key " + key);
  }
  return out;
}

inline ExperimentConfig parse_config(std::istream& is, const std::filesystem::path& base_dir,
                                     const std::string& origin = "<config>") {
  const auto kv = parse_key_values(is, origin);
  ExperimentConfig cfg;
  auto num = [&](const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin + ": " + key + " must be a number, got \"" + v + "\"");
    }
  };
  auto count = [&](const std::string& key, const std::string& v) -> std::uint64_t {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument(origin + ": " + key + " must be a non-negative integer, got \"" + v + "\"");
    return std::stoull(v);
  };
  auto boolean = [&](const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument(origin + ": " + key + " must be true or false");
  };
  auto provider = [&](const std::string& key, const std::string& v) {
    ProviderSpec p;
    if (v == "none") return p;
    if (v == "adapter") {
      p.kind = ProviderSpec::Kind::adapter;
      return p;
    }
    if (v.rfind("toylm:", 0) == 0 && v.size() > 6) {
      p.kind = ProviderSpec::Kind::toylm;
      std::filesystem::path path = v.substr(6);
      p.path = (path.is_absolute() ? path : base_dir / path).lexically_normal().string();
      return p;
    }
    throw std::invalid_argument(origin + ": " + key + " must be \"toylm:PATH\", \"adapter\" or \"none\"");
  };

  std::string truncation = "nucleus";
  for (const auto& [key, v] : kv) {
    if (key == "label") cfg.label = v;
    else if (key == "instruct") cfg.instruct = provider(key, v);
    else if (key == "base") cfg.base = provider(key, v);
    else if (key == "adapter_command") cfg.adapter_command = v;
    else if (key == "truncation") truncation = v;
    else if (key == "top_p") cfg.decode.truncation.p = num(key, v);
    else if (key == "top_k") cfg.decode.truncation.k = count(key, v);
    else if (key == "gamma") cfg.decode.gamma = num(key, v);
    else if (key == "temperature") cfg.decode.temperature = num(key, v);
    else if (key == "max_tokens") cfg.decode.max_tokens = count(key, v);
    else if (key == "seed") cfg.decode.seed = count(key, v);
    else if (key == "mix_before_truncation") cfg.decode.mix_before_truncation = boolean(key, v);
    else if (key == "samples_per_prompt") cfg.samples_per_prompt = count(key, v);
    else if (key == "incipit_tokens") cfg.incipit_tokens = count(key, v);
    else if (key == "incipit_tokenizer") {
      if (v == "core") cfg.incipit_tokenizer = IncipitTokenizer::core;
      else if (v == "adapter") cfg.incipit_tokenizer = IncipitTokenizer::adapter;
      else throw std::invalid_argument(origin + ": incipit_tokenizer must be core or adapter");
    } else if (key == "prompt_style") cfg.prompt_style = parse_prompt_style(v);
    else if (key == "threads") cfg.threads = count(key, v);
    else throw std::invalid_argument(origin + ": unknown key \"" + key + "\"");
  }
  if (truncation == "nucleus") cfg.decode.truncation.kind = Truncation::Kind::nucleus;
  else if (truncation == "top_k") cfg.decode.truncation.kind = Truncation::Kind::top_k;
  else throw std::invalid_argument(origin + ": truncation must be nucleus or top_k");
  return cfg;
}

// Reads a config file; DIVERGAUGE_SEED, when set, replaces the seed.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  auto cfg = parse_config(f, std::filesystem::path(path).parent_path(), path);
  if (const char* env = std::getenv("DIVERGAUGE_SEED"); env && *env) {
    const std::string s = env;
    if (s.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("DIVERGAUGE_SEED must be a non-negative integer");
    cfg.decode.seed = std::stoull(s);
  }
  cfg.validate();
  return cfg;
}

inline std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

// Everything that can change generated text, in a fixed layout. Model files
// enter by content hash, so moving a file keeps the hash while retraining
// changes it. Thread count is excluded: it never changes outputs.
inline nlohmann::json canonical_config(const ExperimentConfig& cfg) {
  auto provider = [](const ProviderSpec& p) -> nlohmann::json {
    if (p.kind == ProviderSpec::Kind::toylm) return {{"kind", "toylm"}, {"sha", file_hash(p.path)}};
    return {{"kind", p.kind == ProviderSpec::Kind::adapter ? "adapter" : "none"}};
  };
  const auto& t = cfg.decode.truncation;
  nlohmann::json j = {
      {"label", cfg.label},
      {"instruct", provider(cfg.instruct)},
      {"base", provider(cfg.base)},
      {"adapter_command", cfg.adapter_command},
      {"truncation", t.kind == Truncation::Kind::nucleus ? "nucleus" : "top_k"},
      {"top_p", t.kind == Truncation::Kind::nucleus ? t.p : 0.0},
      {"top_k", t.kind == Truncation::Kind::top_k ? t.k : 0},
      {"gamma", cfg.has_base() ? cfg.decode.gamma : 1.0},
      {"temperature", cfg.decode.temperature},
      {"max_tokens", cfg.decode.max_tokens},
      {"seed", cfg.decode.seed},
      {"mix_before_truncation", cfg.has_base() && cfg.decode.mix_before_truncation},
      {"samples_per_prompt", cfg.samples_per_prompt},
      {"incipit_tokens", cfg.incipit_tokens},
      {"incipit_tokenizer", cfg.incipit_tokenizer == IncipitTokenizer::core ? "core" : "adapter"},
      {"prompt_style", to_string(cfg.prompt_style)}};
  return j;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(canonical_config(cfg).dump()));
}

}  // namespace divergauge
